"""Exception hierarchy shared across the package."""


class SceneGroundError(Exception):
    """Base class for all errors raised by this package."""


class DetectionParseError(SceneGroundError):
    """Detection file is not valid JSON; carries line/column context."""


class DetectionSchemaError(SceneGroundError):
    """Detection file parsed but violates the detection schema."""


class TranscriptParseError(SceneGroundError):
    """Scene transcript text does not match the transcript grammar."""


class UnknownObjectError(SceneGroundError):
    """An object id was referenced that does not exist in the scene."""


class GeometryDomainError(SceneGroundError, ValueError):
    """Geometric input outside the function's domain (bad sizes, ranges...)."""


class DegenerateViewError(GeometryDomainError):
    """View-dependent relation requested from a degenerate viewpoint."""


class InsufficientContextError(SceneGroundError):
    """Not enough scene context for the requested computation."""


class MalformedAnswerError(SceneGroundError):
    """Completion marker found but its payload is not a valid object id."""


class LlmTransportError(SceneGroundError):
    """LLM backend unreachable or persistently failing after retries."""


class ScriptExhaustedError(LlmTransportError):
    """Scripted backend ran out of canned responses."""


class ShimUnavailableError(SceneGroundError):
    """No interpreter shim executable could be resolved."""


class SandboxProtocolError(SceneGroundError):
    """Shim sent a response that violates the wire protocol."""


class EvalMetadataError(SceneGroundError):
    """Task lacks metadata required by the scoring protocol."""


class EvalInputError(SceneGroundError):
    """Predictions and tasks do not line up (unknown task, missing gt)."""


class CorrectionPreconditionError(SceneGroundError):
    """Self-correction requested for a trace that is already correct."""


class DatasetValidationError(SceneGroundError):
    """Emitted fine-tuning record violates the dataset contract."""
