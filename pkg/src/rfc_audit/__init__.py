"""Conformance auditing of C protocol implementations against RFC documents."""

__version__ = "0.1.0"
