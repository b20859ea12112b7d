"""Exception hierarchy shared by every noiseprobe module."""


class NoiseProbeError(Exception):
    """Base class for all noiseprobe errors."""


class ShapeError(NoiseProbeError, ValueError):
    """An input's shape does not match what the operation expects."""


class NonFiniteError(NoiseProbeError, ArithmeticError):
    """A computation produced NaN or Inf."""


class FormatError(NoiseProbeError, ValueError):
    """A file or byte stream is malformed, truncated, or from an unsupported version."""


class ConfigError(NoiseProbeError, ValueError):
    """A configuration value is missing or invalid."""


class DivergenceError(NoiseProbeError):
    """Training loss became non-finite."""


class SingularityError(NoiseProbeError, ZeroDivisionError):
    """A closed-form expression hit a (near) zero denominator."""


class InsufficientSamplesError(NoiseProbeError, ValueError):
    """Too few samples to resolve the requested quantile or split."""


class DegenerateScoresError(NoiseProbeError, ValueError):
    """A score distribution is constant, so no threshold can separate it."""
