"""Exception types shared across the toolkit."""


class GapflowError(Exception):
    """Base class for all toolkit errors."""


class IngestError(GapflowError):
    """Raised for unusable snapshot input (empty file, bad header, ...)."""


class SeriesError(GapflowError):
    """Raised for invalid series derivation requests."""


class XcorrError(GapflowError):
    """Raised when a correlation function cannot be computed."""


class ModelError(GapflowError):
    """Raised for invalid regression or GP fitting requests."""


class SurrogateError(GapflowError):
    """Raised for invalid surrogate-ensemble requests."""


class GeneratorError(GapflowError):
    """Raised for invalid synthetic-data specifications."""


class ConfigError(GapflowError):
    """Raised for invalid pipeline configuration."""


class PipelineError(GapflowError):
    """Raised when a pipeline stage fails; the report carries diagnostics."""
