"""Exception taxonomy shared by all modules."""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ToolkitError, ValueError):
    """Input outside the physical or mathematical domain of an operation."""


class ValidityError(DomainError):
    """Input inside the mathematical domain but outside the validity
    range of the approximation being evaluated."""


class ShapeError(ToolkitError, ValueError):
    """Mismatched grids or array lengths."""


class ModelError(ToolkitError, ValueError):
    """A spectral model cannot be evaluated as requested."""


class FitError(ToolkitError, RuntimeError):
    """Minimization failed or produced a degenerate solution."""


class DegenerateMapError(ToolkitError, ValueError):
    """A parameter map has no inverse for the given configuration."""


class ScanRangeError(ToolkitError, RuntimeError):
    """A posterior scan could not be normalized on any attempted range."""


class SpectrumFormatError(ToolkitError, ValueError):
    """A spectrum file violates the on-disk format."""


class ConfigError(ToolkitError, ValueError):
    """A run configuration file is malformed or inconsistent."""
