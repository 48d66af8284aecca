"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration input; maps to CLI exit code 1."""


class SolverError(Exception):
    """A solver failed to converge; maps to CLI exit code 2."""
