"""Prompt templates ship as editable text assets next to the package code."""

from functools import lru_cache
from importlib.resources import files
from string import Template


@lru_cache(maxsize=None)
def template(template_name: str) -> Template:
    text = files("rfc_audit.prompts").joinpath(f"{template_name}.txt").read_text(
        encoding="utf-8"
    )
    return Template(text)


def render(template_name: str, **kwargs) -> str:
    return template(template_name).substitute(**kwargs)
