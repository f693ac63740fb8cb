"""Live-backend smoke tests. Off by default: they need network, an API key,
and money. Enable with RFC_AUDIT_LIVE=1 (plus RFC_AUDIT_API_KEY and, if not
OpenAI-compatible-default, RFC_AUDIT_API_BASE / RFC_AUDIT_LIVE_MODEL)."""

import os

import pytest

from rfc_audit.llm import LiveBackend, LlmClient, request

pytestmark = pytest.mark.skipif(
    not os.environ.get("RFC_AUDIT_LIVE"),
    reason="live smoke tests disabled (set RFC_AUDIT_LIVE=1)",
)


def live_client() -> LlmClient:
    return LlmClient(
        LiveBackend(
            api_base=os.environ.get("RFC_AUDIT_API_BASE", "https://api.openai.com/v1"),
            api_key_env="RFC_AUDIT_API_KEY",
        )
    )


def test_live_completion_round_trip():
    client = live_client()
    model_tag = os.environ.get("RFC_AUDIT_LIVE_MODEL", "gpt-4o-mini")
    resp = client.complete(
        request(model_tag, "You reply with single words.", "Reply with the word: ready")
    )
    assert resp.text.strip()
    assert resp.input_tokens > 0
    assert resp.output_tokens > 0
    assert client.usage().call_count == 1


def test_live_temperature_is_zero_in_payload():
    req = request("any-model", "sys", "user")
    assert req.payload()["temperature"] == 0.0
