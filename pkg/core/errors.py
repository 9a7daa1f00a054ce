"""Error types raised across the library.

All errors derive from ``ValueError`` so callers that only guard against bad
input keep working; the subclasses let the CLI map failures to exit codes.
"""


class MollerPfError(ValueError):
    """Base class for library errors."""


class FinitePartError(MollerPfError):
    """Invalid finite-part request (bad interval, missing derivative, non-finite sample)."""


class KinematicsError(MollerPfError):
    """Energies outside the admissible collision range."""


class GeometryError(MollerPfError):
    """Invalid sphere geometry input (non-unit vector, antipodal pair)."""


class DomainError(MollerPfError):
    """Phase-space point or field outside the configured domain."""


class ConfigError(MollerPfError):
    """Unparseable or inconsistent run configuration."""
