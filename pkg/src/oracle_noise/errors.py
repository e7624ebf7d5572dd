"""Exception types raised across the package."""


class OracleNoiseError(Exception):
    """Base class for all package-specific errors."""


class ZeroLatent(OracleNoiseError):
    """A latent with zero norm was passed where a sphere point is required."""


class DegenerateGradient(OracleNoiseError):
    """Tangent gradient is numerically zero; the caller is at a stationary
    point and must stop rather than normalize a ~0 direction."""


class DegenerateFeatures(OracleNoiseError):
    """A spatial position produced exactly zero feature variance, so the
    zero-epsilon normalization is undefined."""


class InvalidIndex(OracleNoiseError):
    """Token index outside the valid (non-special) set."""


class EmptyValidSet(OracleNoiseError):
    """The prompt contains no valid (non-special) tokens."""


class InvalidBounds(OracleNoiseError):
    """Weight bounds with w_min >= w_max."""


class ShapeMismatch(OracleNoiseError):
    """Operands with incompatible shapes."""


class ConfigError(OracleNoiseError):
    """Run configuration failed validation; message carries a location."""
