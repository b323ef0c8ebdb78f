"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, out-of-range value)."""


class FormatError(ValueError):
    """Malformed sample or model file."""


class DivergenceError(FloatingPointError):
    """A particle or gradient became non-finite during sampling."""


class SingularGaugeError(ValueError):
    """A sketched linear system is numerically singular."""
