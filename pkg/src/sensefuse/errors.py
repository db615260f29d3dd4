"""Exception types shared across the package."""
from __future__ import annotations


class ConfigError(ValueError):
    """A configuration value violates its documented constraint.

    The message lists every offending key so a bad file can be fixed in
    one pass instead of one error at a time.
    """

    def __init__(self, violations: str | list[str]):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegenerateGeometryError(ValueError):
    """A polar conversion was attempted at zero range, where bearing is undefined."""


class ProtocolError(RuntimeError):
    """A call-flow message arrived in a phase that cannot accept it."""


class NoSensingEntityError(ProtocolError):
    """Live sensing was required but no sensing entity is registered."""


class EmptyRunError(ValueError):
    """Metrics were finalized before any frame was accumulated."""
