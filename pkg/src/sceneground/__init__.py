"""sceneground: ground natural-language referring expressions in 3D scenes.

Detected objects are transcribed into an object-centric text listing, an
utterance-aware filter trims the listing, and a chat model resolves the
reference by alternating between reasoning and sandboxed Python snippets over
the object table. Includes benchmark scoring and a self-correction
fine-tuning dataset builder.
"""

from .engine import (
    ChatTurn,
    EngineConfig,
    ReasoningTrace,
    build_prompt,
    extract_answer,
    format_answer,
    ground,
    run_loop,
)
from .errors import SceneGroundError
from .evaluate import EvalReport, score_referit3d, score_scanrefer
from .filtering import FilterResult, filter_lexical, filter_llm
from .geometry import Aabb, Hsl, iou3d, rgb_to_hsl
from .llm import HttpChatClient, LlmClient, ScriptedClient, TokenUsage
from .sandbox import (
    ExecRequest,
    ExecResult,
    InProcessSandbox,
    ShimSandbox,
    preload_context,
)
from .scene import (
    GroundingTask,
    ObjectRecord,
    SceneTranscript,
    load_detections,
    load_tasks,
    parse_transcript,
    render_transcript,
)

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "ChatTurn",
    "EngineConfig",
    "EvalReport",
    "ExecRequest",
    "ExecResult",
    "FilterResult",
    "GroundingTask",
    "Hsl",
    "HttpChatClient",
    "InProcessSandbox",
    "LlmClient",
    "ObjectRecord",
    "ReasoningTrace",
    "SceneGroundError",
    "SceneTranscript",
    "ScriptedClient",
    "ShimSandbox",
    "TokenUsage",
    "build_prompt",
    "extract_answer",
    "filter_lexical",
    "filter_llm",
    "format_answer",
    "ground",
    "iou3d",
    "load_detections",
    "load_tasks",
    "parse_transcript",
    "preload_context",
    "render_transcript",
    "rgb_to_hsl",
    "run_loop",
    "score_referit3d",
    "score_scanrefer",
]
