"""Filter-based ratiometric fluorescence sensing: simulator and analysis."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, FitError

__all__ = ["ConfigError", "DataError", "FitError", "__version__"]
