"""Exception hierarchy shared across the package."""


class AttnSwitchError(Exception):
    """Base class for every error raised by attnswitch."""


class ParseError(AttnSwitchError):
    """A document could not be decoded or does not match its schema."""


class InstanceError(AttnSwitchError):
    """A decoded instance violates a domain rule."""


class ContractViolation(AttnSwitchError, ValueError):
    """An operation was called outside its precondition."""


class CapacityError(AttnSwitchError):
    """State enumeration exceeded the configured cap."""


class SolverError(AttnSwitchError):
    """A planner failed to produce a valid solution."""


class ConfigError(AttnSwitchError):
    """An experiment configuration is invalid."""


class CacheError(AttnSwitchError):
    """A cache file is corrupt, stale, or from another format version."""
