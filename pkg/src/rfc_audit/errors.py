"""Exception types shared across the audit pipeline."""


class RfcAuditError(Exception):
    """Base class for all errors raised by this package."""


class EmptyModelError(RfcAuditError):
    """A repository scan matched zero source files."""


class UnknownEntityError(RfcAuditError):
    """A lookup referenced a function id that does not exist in the model."""


class ArtifactFormatError(RfcAuditError):
    """A persisted artifact (index, properties file) is corrupt or unparseable."""


class ArtifactVersionError(RfcAuditError):
    """A persisted artifact carries an unsupported schema version."""


class IndexModelMismatchError(RfcAuditError):
    """An index update was attempted against a model from a different tree."""


class TransportError(RfcAuditError):
    """The live backend exhausted its retries against the completion API."""


class ReplayMismatchError(RfcAuditError):
    """A replayed request did not match the next cassette record."""

    def __init__(self, expected_hash: str, got_hash: str, position: int):
        self.expected_hash = expected_hash
        self.got_hash = got_hash
        self.position = position
        super().__init__(
            f"replay mismatch at record {position}: cassette expects request "
            f"{expected_hash}, caller sent {got_hash}"
        )


class CassetteExhaustedError(RfcAuditError):
    """A replay run issued more requests than the cassette holds."""


class ConfigError(RfcAuditError):
    """Invalid or contradictory configuration."""
