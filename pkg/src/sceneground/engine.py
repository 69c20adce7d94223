"""The iterative reasoning loop: prompt building, LLM/code rounds, answers.

Each round sends the conversation to the chat model. If the reply contains
fenced code blocks they are executed in the task's sandbox session, each
block's result is appended as a tool turn, and the loop continues, feeding
errors back verbatim so the model can fix its own code. A reply without code
is checked for the completion marker; the loop stops on a valid answer or
after max_rounds model calls.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    LlmTransportError,
    MalformedAnswerError,
    SceneGroundError,
    UnknownObjectError,
)
from .filtering import FilterResult, Lexicon, filter_lexical, filter_llm
from .geometry import Aabb
from .helpers import HELP_TEXT
from .llm import LlmClient, TokenUsage
from .sandbox import (
    DEFAULT_TIMEOUT,
    ExecRequest,
    Sandbox,
    format_exec_result,
    preload_context,
)
from .scene import GroundingTask, SceneTranscript, render_transcript

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")
MODES = ("principles", "no_principles")

ANSWER_MARKER = "Now the answer is complete"

_ANSWER_RE = re.compile(
    r"Now the answer is complete\s*-{1,2}\s*\{\s*['\"]?ID['\"]?\s*:\s*(?P<payload>[^}]*?)\s*\}"
)
_CODE_BLOCK_RE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\r?\n(.*?)```", re.DOTALL)

PRINCIPLES_HEADER = "Apply these reasoning principles:"

CONTINUE_REQUEST = (
    "Continue. Write code in a fenced block if you need more information, or finish "
    "with the required answer format."
)
REFORMAT_REQUEST = (
    "Your final line was not in the required format. State the answer again exactly as: "
    "Now the answer is complete -- {'ID': <integer object id>}"
)


@dataclass(frozen=True)
class ChatTurn:
    """One conversation turn. Tool turns carry code-execution results."""

    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise SceneGroundError(f"unknown chat role {self.role!r}")
        if not self.content:
            raise SceneGroundError("chat turn content must be non-empty")


@dataclass
class ReasoningTrace:
    """Everything one grounding attempt produced."""

    task_id: str
    turns: list[ChatTurn]
    rounds_used: int
    outcome: str  # "answered" | "max_rounds" | "aborted"
    answer: int | None = None
    token_usage: TokenUsage = field(default_factory=TokenUsage)
    abort_reason: str | None = None

    def __post_init__(self) -> None:
        if (self.outcome == "answered") != (self.answer is not None):
            raise SceneGroundError(
                f"trace outcome {self.outcome!r} inconsistent with answer {self.answer!r}"
            )


@dataclass(frozen=True)
class EngineConfig:
    """Knobs for one grounding run."""

    mode: str = "principles"  # or "no_principles"
    max_rounds: int = 10
    filter_mode: str = "lexical"  # or "llm"
    answer_type: str = "id"  # or "bbox"
    exec_timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise SceneGroundError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.filter_mode not in ("lexical", "llm"):
            raise SceneGroundError(f"filter_mode must be lexical or llm, got {self.filter_mode!r}")
        if self.answer_type not in ("id", "bbox"):
            raise SceneGroundError(f"answer_type must be id or bbox, got {self.answer_type!r}")
        if self.max_rounds < 1:
            raise SceneGroundError("max_rounds must be >= 1")


@lru_cache(maxsize=1)
def load_principles() -> tuple[str, ...]:
    """The guideline sentences injected in `principles` mode, one per line."""
    text = resources.files("sceneground.data").joinpath("principles.txt").read_text("utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def format_answer(object_id: int) -> str:
    """The completion line the system prompt demands."""
    return f"Now the answer is complete -- {{'ID': {object_id}}}"


def extract_answer(text: str) -> int | None:
    """Pull the answered object id out of assistant text.

    Returns None when no completion marker is present. Raises
    MalformedAnswerError when a marker is present but its payload is not an
    integer id. The last marker in the text wins, so restated answers
    supersede earlier drafts.
    """
    matches = list(_ANSWER_RE.finditer(text))
    if not matches:
        if ANSWER_MARKER in text:
            raise MalformedAnswerError(f"completion marker without parseable payload: {text!r}")
        return None
    payload = matches[-1].group("payload").strip()
    inner = re.fullmatch(r"['\"]?\s*(\d+)\s*['\"]?", payload)
    if not inner:
        raise MalformedAnswerError(f"answer payload is not an object id: {payload!r}")
    return int(inner.group(1))


def extract_code_blocks(text: str) -> list[str]:
    """All fenced code blocks in the reply, in order of appearance."""
    return [block for block in _CODE_BLOCK_RE.findall(text) if block.strip()]


_SYSTEM_FRAMING = """\
You identify which detected object in a 3D scene a natural-language description \
refers to. The scene is a list of objects, one per line, each with a category, an \
integer id, a center [x, y, z] in meters, an axis-aligned size [sx, sy, sz] in \
meters, and a mean color rgb [r, g, b]. The z axis points up.

Reason step by step. Whenever a quantitative check would help (distances, sizes, \
colors, directions), write Python code in a fenced code block:

```python
# your code, ending in print(...) of whatever you need
```

Each block runs in a persistent sandbox and its output is returned to you; \
variables and functions you define stay available in later blocks. If your code \
raises an error, fix it and try again.

{help_text}

When you are certain which object the description refers to, finish your reply \
with exactly this line (no code block):
Now the answer is complete -- {{'ID': <integer object id>}}"""


def build_prompt(scene_text: str, utterance: str, mode: str = "principles") -> list[ChatTurn]:
    """System + user turns for one grounding query.

    The system turn carries the task framing and answer-format contract, plus
    the guideline sentences when mode is "principles". Deterministic: equal
    inputs produce byte-identical prompts.
    """
    if mode not in MODES:
        raise SceneGroundError(f"mode must be one of {MODES}, got {mode!r}")
    if not utterance.strip():
        raise SceneGroundError("utterance must be non-empty")
    system = _SYSTEM_FRAMING.format(help_text=HELP_TEXT)
    if mode == "principles":
        bullets = "\n".join(f"- {sentence}" for sentence in load_principles())
        system += f"\n\n{PRINCIPLES_HEADER}\n{bullets}"
    user = f"{scene_text}\n\nThe description to resolve: \"{utterance.strip()}\"\nWhich object id does it refer to?"
    return [ChatTurn("system", system), ChatTurn("user", user)]


def run_loop(
    prompt: Sequence[ChatTurn],
    llm: LlmClient,
    sandbox: Sandbox,
    session_id: str,
    max_rounds: int = 10,
    *,
    exec_timeout: float = DEFAULT_TIMEOUT,
    task_id: str = "",
) -> ReasoningTrace:
    """Drive the model/sandbox loop until an answer or the round budget.

    One round = one LLM call. Every code block in a reply is executed in
    order and answered with exactly one tool turn; replies without code are
    checked for the completion marker.
    """
    if max_rounds < 1:
        raise SceneGroundError("max_rounds must be >= 1")
    turns: list[ChatTurn] = list(prompt)
    usage = TokenUsage()
    rounds = 0
    while rounds < max_rounds:
        try:
            text, call_usage = llm.complete(turns)
        except LlmTransportError as exc:
            logger.error("LLM transport failure in task %s: %s", task_id, exc)
            return ReasoningTrace(
                task_id=task_id,
                turns=turns,
                rounds_used=rounds,
                outcome="aborted",
                token_usage=usage,
                abort_reason=str(exc),
            )
        rounds += 1
        usage = usage + call_usage
        turns.append(ChatTurn("assistant", text))
        blocks = extract_code_blocks(text)
        if blocks:
            for code in blocks:
                result = sandbox.execute(
                    ExecRequest(session_id=session_id, code=code, timeout=exec_timeout)
                )
                turns.append(ChatTurn("tool", format_exec_result(result)))
            continue
        try:
            answer = extract_answer(text)
        except MalformedAnswerError:
            turns.append(ChatTurn("user", REFORMAT_REQUEST))
            continue
        if answer is not None:
            return ReasoningTrace(
                task_id=task_id,
                turns=turns,
                rounds_used=rounds,
                outcome="answered",
                answer=answer,
                token_usage=usage,
            )
        turns.append(ChatTurn("user", CONTINUE_REQUEST))
    return ReasoningTrace(
        task_id=task_id,
        turns=turns,
        rounds_used=rounds,
        outcome="max_rounds",
        token_usage=usage,
    )


def ground(
    task: GroundingTask,
    scene: SceneTranscript,
    llm: LlmClient,
    config: EngineConfig = EngineConfig(),
    sandbox: Sandbox | None = None,
    lexicon: Lexicon | None = None,
) -> tuple[int | Aabb | None, ReasoningTrace]:
    """Resolve one task end to end: filter, render, prompt, loop, answer.

    Returns (prediction, trace). The prediction is an object id, or that
    object's box when config.answer_type is "bbox", or None when the loop
    did not produce a usable answer (scored as incorrect downstream).
    """
    if task.scene_id != scene.scene_id:
        raise SceneGroundError(
            f"task {task.task_id} is for scene {task.scene_id}, got scene {scene.scene_id}"
        )
    if config.filter_mode == "llm":
        filtered: FilterResult = filter_llm(scene, task.utterance, llm, lexicon)
    else:
        filtered = filter_lexical(scene, task.utterance, lexicon)
    scene_text = render_transcript(scene, filtered.kept_ids)
    prompt = build_prompt(scene_text, task.utterance, config.mode)

    own_sandbox = sandbox is None
    if own_sandbox:
        from .sandbox import InProcessSandbox

        sandbox = InProcessSandbox()
    session_id = task.task_id or "session"
    try:
        preload = preload_context(sandbox, session_id, scene, filtered.kept_ids, config.exec_timeout)
        if not preload.ok:
            logger.warning("context preload failed for task %s: %s", task.task_id, preload.stderr)
        trace = run_loop(
            prompt,
            llm,
            sandbox,
            session_id,
            config.max_rounds,
            exec_timeout=config.exec_timeout,
            task_id=task.task_id,
        )
    finally:
        sandbox.close_session(session_id)
        if own_sandbox:
            sandbox.close()

    prediction: int | Aabb | None = trace.answer
    if prediction is not None and config.answer_type == "bbox":
        try:
            prediction = scene.object_by_id(prediction).aabb
        except UnknownObjectError:
            logger.warning(
                "task %s: answered id %s is not in the scene; treating as no prediction",
                task.task_id,
                trace.answer,
            )
            prediction = None
    return prediction, trace


def trace_to_dict(trace: ReasoningTrace) -> dict:
    return {
        "task_id": trace.task_id,
        "turns": [{"role": t.role, "content": t.content} for t in trace.turns],
        "rounds_used": trace.rounds_used,
        "outcome": trace.outcome,
        "answer": trace.answer,
        "token_usage": {
            "prompt_tokens": trace.token_usage.prompt_tokens,
            "completion_tokens": trace.token_usage.completion_tokens,
        },
        "abort_reason": trace.abort_reason,
    }


def trace_from_dict(data: dict) -> ReasoningTrace:
    return ReasoningTrace(
        task_id=data["task_id"],
        turns=[ChatTurn(t["role"], t["content"]) for t in data["turns"]],
        rounds_used=data["rounds_used"],
        outcome=data["outcome"],
        answer=data.get("answer"),
        token_usage=TokenUsage(
            prompt_tokens=data.get("token_usage", {}).get("prompt_tokens", 0),
            completion_tokens=data.get("token_usage", {}).get("completion_tokens", 0),
        ),
        abort_reason=data.get("abort_reason"),
    )


def write_traces(path: str | Path, traces: Iterable[ReasoningTrace]) -> int:
    """Append traces to a JSONL file, one record per task; returns the count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("a", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_dict(trace), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_traces(path: str | Path) -> list[ReasoningTrace]:
    traces = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            traces.append(trace_from_dict(json.loads(line)))
    return traces
