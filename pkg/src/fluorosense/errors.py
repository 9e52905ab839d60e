"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid or malformed experiment configuration."""


class DataError(Exception):
    """Malformed input data: bad CSV schema, degenerate series, unusable spectra."""


class FitError(DataError):
    """Background peak fit failed to converge or produced a degenerate result."""
