"""Build a fine-tuning dataset from the engine's own successes and mistakes.

Three steps: run the engine (with guideline prompts) over annotated training
tasks; for every wrong answer, tell the model the correct object id, ask it to
diagnose what went wrong, then ask for a clean re-derivation that lands on the
right answer; finally emit correct-first-try and self-corrected reasoning as
chat JSONL with every guideline sentence stripped from the system prompt, so
a model fine-tuned on it learns the rules implicitly instead of reading them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .engine import (
    ChatTurn,
    EngineConfig,
    ReasoningTrace,
    PRINCIPLES_HEADER,
    extract_answer,
    ground,
    load_principles,
)
from .errors import (
    CorrectionPreconditionError,
    DatasetValidationError,
    EvalInputError,
    MalformedAnswerError,
)
from .filtering import Lexicon
from .llm import LlmClient
from .sandbox import Sandbox
from .scene import GroundingTask, SceneTranscript

logger = logging.getLogger(__name__)

LABEL_CORRECT = "correct_first_try"
LABEL_SELF_CORRECTED = "self_corrected"

CORRECTION_TEMPLATE = (
    "The correct answer is object {gt_id}. Can you double check the information of "
    "object {gt_id} and the given prompt and see where you got wrong?"
)
CLEAN_REQUEST = (
    "Now write a clean, corrected analysis that derives the right object directly "
    "from the scene information, without mentioning the earlier mistake. Finish "
    "with the required answer format."
)
CLEAN_RETRY_REQUEST = (
    "That analysis must conclude with the correct object. Re-derive it carefully "
    "and finish with the required answer format."
)


@dataclass(frozen=True)
class FinetuneRecord:
    """One chat example for fine-tuning."""

    messages: tuple[ChatTurn, ...]
    label: str  # LABEL_CORRECT | LABEL_SELF_CORRECTED
    task_id: str

    def to_dict(self) -> dict:
        return {
            "messages": [{"role": t.role, "content": t.content} for t in self.messages],
            "label": self.label,
            "task_id": self.task_id,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FinetuneRecord":
        return cls(
            messages=tuple(ChatTurn(m["role"], m["content"]) for m in data["messages"]),
            label=data["label"],
            task_id=data["task_id"],
        )


def collect_runs(
    tasks: Sequence[GroundingTask],
    scenes: Mapping[str, SceneTranscript],
    llm: LlmClient,
    config: EngineConfig = EngineConfig(),
    sandbox: Sandbox | None = None,
    lexicon: Lexicon | None = None,
) -> tuple[list[ReasoningTrace], list[ReasoningTrace]]:
    """Run the engine over annotated tasks and split traces by correctness.

    A trace lands in the correct list iff its answer equals the task's
    gt_object_id; aborted or unanswered runs are incorrect. The two lists
    partition the input: len(correct) + len(incorrect) == len(tasks).
    """
    correct: list[ReasoningTrace] = []
    incorrect: list[ReasoningTrace] = []
    for task in tasks:
        if task.gt_object_id is None:
            raise EvalInputError(f"task {task.task_id} has no gt_object_id")
        if task.scene_id not in scenes:
            raise EvalInputError(f"task {task.task_id}: unknown scene {task.scene_id}")
        prediction, trace = ground(task, scenes[task.scene_id], llm, config, sandbox, lexicon)
        if trace.answer is not None and trace.answer == task.gt_object_id:
            correct.append(trace)
        else:
            incorrect.append(trace)
    return correct, incorrect


def elicit_correction(
    trace: ReasoningTrace,
    gt_id: int,
    llm: LlmClient,
    *,
    max_rerequests: int = 2,
) -> ReasoningTrace | None:
    """Ask the model to reflect on a wrong trace and re-derive the right answer.

    Appends the correction question (with the ground-truth id), captures the
    reflection, then requests a clean re-derivation. The re-derivation must
    extract to gt_id; up to `max_rerequests` additional attempts are made
    before the sample is declared unusable (returns None).
    """
    if trace.answer is not None and trace.answer == gt_id:
        raise CorrectionPreconditionError(
            f"trace for task {trace.task_id} already answers {gt_id}; nothing to correct"
        )
    turns = list(trace.turns)
    usage = trace.token_usage
    calls = 0

    turns.append(ChatTurn("user", CORRECTION_TEMPLATE.format(gt_id=gt_id)))
    reflection, call_usage = llm.complete(turns)
    usage = usage + call_usage
    calls += 1
    turns.append(ChatTurn("assistant", reflection))

    request = CLEAN_REQUEST
    for _attempt in range(1 + max_rerequests):
        turns.append(ChatTurn("user", request))
        clean, call_usage = llm.complete(turns)
        usage = usage + call_usage
        calls += 1
        turns.append(ChatTurn("assistant", clean))
        try:
            answer = extract_answer(clean)
        except MalformedAnswerError:
            answer = None
        if answer == gt_id:
            return ReasoningTrace(
                task_id=trace.task_id,
                turns=turns,
                rounds_used=trace.rounds_used + calls,
                outcome="answered",
                answer=gt_id,
                token_usage=usage,
            )
        request = CLEAN_RETRY_REQUEST
    logger.info(
        "dropping task %s: clean re-derivation still wrong after %d attempts",
        trace.task_id,
        1 + max_rerequests,
    )
    return None


def strip_principles(text: str, principles: Sequence[str] | None = None) -> str:
    """Remove every guideline sentence (and the guidelines header) from text."""
    principles = load_principles() if principles is None else principles
    kept_lines = []
    for line in text.splitlines():
        stripped = line.strip().lstrip("- ").strip()
        if stripped == PRINCIPLES_HEADER or stripped in principles:
            continue
        kept_lines.append(line)
    cleaned = "\n".join(kept_lines)
    for sentence in principles:  # belt and braces for inline occurrences
        cleaned = cleaned.replace(sentence, "")
    return cleaned.rstrip()


def _merged_reasoning(trace: ReasoningTrace) -> str:
    """Assistant and tool contents inlined into one assistant message.

    Tool results are spliced in as execution-result blocks; loop nudge turns
    (role user after the prompt) are skipped since they carry no content the
    fine-tuned model should reproduce.
    """
    parts: list[str] = []
    for turn in trace.turns[2:]:
        if turn.role == "assistant":
            parts.append(turn.content)
        elif turn.role == "tool":
            parts.append(f"[execution result]\n{turn.content}")
    return "\n\n".join(parts)


def to_finetune_record(trace: ReasoningTrace, label: str) -> FinetuneRecord:
    """Build the chat example for a trace.

    Correct-first-try records keep the whole reasoning (code and execution
    results inlined); self-corrected records keep only the clean final
    re-derivation. Both get the guideline-free system prompt.
    """
    if len(trace.turns) < 3:
        raise DatasetValidationError(f"task {trace.task_id}: trace too short to emit")
    system = strip_principles(trace.turns[0].content)
    user = trace.turns[1].content
    if label == LABEL_SELF_CORRECTED:
        final = next(t for t in reversed(trace.turns) if t.role == "assistant")
        assistant = final.content
    else:
        assistant = _merged_reasoning(trace)
    return FinetuneRecord(
        messages=(
            ChatTurn("system", system),
            ChatTurn("user", user),
            ChatTurn("assistant", assistant),
        ),
        label=label,
        task_id=trace.task_id,
    )


def _validate_record(
    record: FinetuneRecord,
    principles: Sequence[str],
    gt_ids: Mapping[str, int] | None,
    expected_answer: int | None,
) -> None:
    for sentence in principles:
        for message in record.messages:
            if sentence in message.content:
                raise DatasetValidationError(
                    f"task {record.task_id}: emitted record contains a guideline sentence"
                )
    final = record.messages[-1]
    try:
        answer = extract_answer(final.content)
    except MalformedAnswerError as exc:
        raise DatasetValidationError(f"task {record.task_id}: malformed final answer") from exc
    if answer is None:
        raise DatasetValidationError(f"task {record.task_id}: final message has no answer")
    target = expected_answer
    if gt_ids is not None and record.task_id in gt_ids:
        target = gt_ids[record.task_id]
    if target is not None and answer != target:
        raise DatasetValidationError(
            f"task {record.task_id}: final answer {answer} != ground truth {target}"
        )


def emit_dataset(
    correct: Sequence[ReasoningTrace],
    corrected: Sequence[ReasoningTrace],
    out_path: str | Path,
    gt_ids: Mapping[str, int] | None = None,
) -> int:
    """Write the fine-tuning JSONL and return the record count.

    Every record is validated before writing: no guideline sentence anywhere
    in its messages, and the final message must extract to the ground-truth
    id (from gt_ids when provided, else the trace's own answer).
    """
    principles = load_principles()
    records: list[FinetuneRecord] = []
    for trace in correct:
        record = to_finetune_record(trace, LABEL_CORRECT)
        _validate_record(record, principles, gt_ids, trace.answer)
        records.append(record)
    for trace in corrected:
        record = to_finetune_record(trace, LABEL_SELF_CORRECTED)
        _validate_record(record, principles, gt_ids, trace.answer)
        records.append(record)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    return len(records)


def read_dataset(path: str | Path) -> list[FinetuneRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(FinetuneRecord.from_dict(json.loads(line)))
    return records


def build_dataset(
    tasks: Sequence[GroundingTask],
    scenes: Mapping[str, SceneTranscript],
    llm: LlmClient,
    config: EngineConfig,
    out_path: str | Path,
    sandbox: Sandbox | None = None,
    lexicon: Lexicon | None = None,
) -> dict:
    """Full pipeline: run, elicit corrections for failures, emit the dataset.

    Returns stats: counts of correct_first_try, self_corrected, dropped, and
    the emitted record total.
    """
    gt_ids = {t.task_id: t.gt_object_id for t in tasks if t.gt_object_id is not None}
    correct, incorrect = collect_runs(tasks, scenes, llm, config, sandbox, lexicon)
    corrected: list[ReasoningTrace] = []
    dropped = 0
    for trace in incorrect:
        fixed = elicit_correction(trace, gt_ids[trace.task_id], llm)
        if fixed is None:
            dropped += 1
        else:
            corrected.append(fixed)
    emitted = emit_dataset(correct, corrected, out_path, gt_ids)
    return {
        "correct_first_try": len(correct),
        "self_corrected": len(corrected),
        "dropped": dropped,
        "records": emitted,
    }
