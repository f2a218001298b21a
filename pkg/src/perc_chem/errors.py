"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PercChemError(Exception):
    exit_code = 1


class ConfigError(PercChemError, ValueError):
    """Bad parameters or an unparsable experiment config."""

    exit_code = 2


class PreconditionError(ConfigError):
    """An operation was called outside its documented domain."""


class GeometryError(PercChemError):
    """A ball or path would leave the region's certified interior."""

    exit_code = 3


class InvariantViolation(PercChemError, RuntimeError):
    """A property that must hold by construction failed; always a bug signal."""

    exit_code = 4


class CertificationError(InvariantViolation):
    """A cycle could not be decomposed over the small-cycle basis."""


class ResourceError(PercChemError, MemoryError):
    exit_code = 5
