"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for failures raised by this package."""


class ParseError(PipelineError):
    """Input file could not be parsed."""


class ValidationError(PipelineError):
    """Constructed object violates a structural invariant."""


class RefinementCapError(ValidationError):
    """Refinement would push the vertex count over the configured cap."""


class SurgeryError(PipelineError):
    """Metric modification precondition failed on a named cell."""


class EmbeddingError(PipelineError):
    """An embedding provider could not realize the requested edge lengths."""


class CertificationError(PipelineError):
    """A stage certificate failed, so downstream stages must not run."""


class UnsupportedQueryError(PipelineError):
    """Properness query outside the supported regime (Q <= 0)."""


class StageError(PipelineError):
    """Wraps any error with the pipeline stage where it occurred."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"stage '{stage}': {original}")
        self.stage = stage
        self.original = original
