"""Scoring for the two benchmark protocols and reproducible subsetting.

The multiple-choice protocol scores a predicted object id against the
annotated one. The box protocol scores a predicted 3D box by IoU against the
ground-truth box at the 0.25 and 0.5 thresholds. Both break results down by
difficulty (easy = at most one distractor, hard = two or more) and by view
dependence. A task with no prediction is always counted incorrect, never
dropped, so accuracy denominators equal the task count.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import EvalInputError, EvalMetadataError
from .geometry import Aabb, iou3d
from .scene import GroundingTask

IOU_THRESHOLDS = (0.25, 0.5)


@dataclass(frozen=True)
class BucketScore:
    correct: int = 0
    total: int = 0

    @property
    def fraction(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def add(self, correct: bool) -> "BucketScore":
        return BucketScore(self.correct + (1 if correct else 0), self.total + 1)


@dataclass(frozen=True)
class EvalReport:
    """Accuracy breakdown for one run."""

    protocol: str  # "referit3d" | "scanrefer"
    overall: BucketScore
    easy: BucketScore
    hard: BucketScore
    view_dep: BucketScore
    view_ind: BucketScore
    acc_at_25: BucketScore | None = None
    acc_at_50: BucketScore | None = None

    def to_dict(self) -> dict:
        data = {
            "protocol": self.protocol,
            "accuracy": {
                "overall": self.overall.fraction,
                "easy": self.easy.fraction,
                "hard": self.hard.fraction,
                "view_dep": self.view_dep.fraction,
                "view_ind": self.view_ind.fraction,
            },
            "counts": {
                "overall": [self.overall.correct, self.overall.total],
                "easy": [self.easy.correct, self.easy.total],
                "hard": [self.hard.correct, self.hard.total],
                "view_dep": [self.view_dep.correct, self.view_dep.total],
                "view_ind": [self.view_ind.correct, self.view_ind.total],
            },
        }
        if self.acc_at_25 is not None:
            data["accuracy"]["acc_at_25"] = self.acc_at_25.fraction
            data["counts"]["acc_at_25"] = [self.acc_at_25.correct, self.acc_at_25.total]
        if self.acc_at_50 is not None:
            data["accuracy"]["acc_at_50"] = self.acc_at_50.fraction
            data["counts"]["acc_at_50"] = [self.acc_at_50.correct, self.acc_at_50.total]
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        counts = data["counts"]

        def bucket(name: str) -> BucketScore:
            correct, total = counts[name]
            return BucketScore(correct, total)

        return cls(
            protocol=data["protocol"],
            overall=bucket("overall"),
            easy=bucket("easy"),
            hard=bucket("hard"),
            view_dep=bucket("view_dep"),
            view_ind=bucket("view_ind"),
            acc_at_25=bucket("acc_at_25") if "acc_at_25" in counts else None,
            acc_at_50=bucket("acc_at_50") if "acc_at_50" in counts else None,
        )

    def render_table(self) -> str:
        """Fixed-width summary table: Overall, Easy, Hard, View Dep., View Ind."""
        headers = ["", "Overall", "Easy", "Hard", "View Dep.", "View Ind."]
        buckets = [self.overall, self.easy, self.hard, self.view_dep, self.view_ind]
        acc_row = ["accuracy"] + [f"{b.fraction:.3f}" for b in buckets]
        count_row = ["correct/total"] + [f"{b.correct}/{b.total}" for b in buckets]
        rows = [headers, acc_row, count_row]
        if self.acc_at_25 is not None and self.acc_at_50 is not None:
            rows.append(
                [
                    "acc@IoU",
                    f"0.25: {self.acc_at_25.fraction:.3f}",
                    f"0.50: {self.acc_at_50.fraction:.3f}",
                    "",
                    "",
                    "",
                ]
            )
        widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
        return "\n".join(
            "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
            for row in rows
        )


def classify_difficulty(task: GroundingTask) -> str:
    """"easy" with at most one distractor, "hard" with two or more."""
    if task.distractor_count is None:
        raise EvalMetadataError(f"task {task.task_id} has no distractor_count")
    return "easy" if task.distractor_count <= 1 else "hard"


def _check_predictions(predictions: Mapping[str, object], tasks: Sequence[GroundingTask]) -> None:
    task_ids = {t.task_id for t in tasks}
    if len(task_ids) != len(tasks):
        raise EvalInputError("duplicate task_id in task list")
    unknown = set(predictions) - task_ids
    if unknown:
        raise EvalInputError(f"prediction for unknown task {sorted(unknown)[0]!r}")


@dataclass
class _Buckets:
    overall: BucketScore = BucketScore()
    easy: BucketScore = BucketScore()
    hard: BucketScore = BucketScore()
    view_dep: BucketScore = BucketScore()
    view_ind: BucketScore = BucketScore()

    def add(self, task: GroundingTask, correct: bool) -> None:
        self.overall = self.overall.add(correct)
        if classify_difficulty(task) == "easy":
            self.easy = self.easy.add(correct)
        else:
            self.hard = self.hard.add(correct)
        # Tasks without a view flag count as view-independent.
        if task.view_dependent:
            self.view_dep = self.view_dep.add(correct)
        else:
            self.view_ind = self.view_ind.add(correct)


def score_referit3d(
    predictions: Mapping[str, int | None],
    tasks: Sequence[GroundingTask],
) -> EvalReport:
    """Accuracy of predicted ids against gt_object_id; missing = incorrect."""
    _check_predictions(predictions, tasks)
    buckets = _Buckets()
    for task in tasks:
        if task.gt_object_id is None:
            raise EvalInputError(f"task {task.task_id} has no gt_object_id")
        predicted = predictions.get(task.task_id)
        buckets.add(task, predicted is not None and predicted == task.gt_object_id)
    return EvalReport(
        protocol="referit3d",
        overall=buckets.overall,
        easy=buckets.easy,
        hard=buckets.hard,
        view_dep=buckets.view_dep,
        view_ind=buckets.view_ind,
    )


def score_scanrefer(
    predictions: Mapping[str, Aabb | None],
    tasks: Sequence[GroundingTask],
) -> EvalReport:
    """IoU-thresholded box accuracy; bucket breakdown uses the 0.25 threshold."""
    _check_predictions(predictions, tasks)
    buckets = _Buckets()
    at25 = BucketScore()
    at50 = BucketScore()
    for task in tasks:
        if task.gt_bbox is None:
            raise EvalInputError(f"task {task.task_id} has no gt_bbox")
        predicted = predictions.get(task.task_id)
        iou = iou3d(predicted, task.gt_bbox) if predicted is not None else 0.0
        at25 = at25.add(iou >= 0.25)
        at50 = at50.add(iou >= 0.5)
        buckets.add(task, iou >= 0.25)
    return EvalReport(
        protocol="scanrefer",
        overall=buckets.overall,
        easy=buckets.easy,
        hard=buckets.hard,
        view_dep=buckets.view_dep,
        view_ind=buckets.view_ind,
        acc_at_25=at25,
        acc_at_50=at50,
    )


def sample_subset(
    tasks: Sequence[GroundingTask], n: int, seed: int
) -> list[GroundingTask]:
    """Seeded sample of n tasks without replacement; same inputs, same subset."""
    if n > len(tasks):
        raise EvalInputError(f"cannot sample {n} of {len(tasks)} tasks")
    return random.Random(seed).sample(list(tasks), n)


def write_report(report: EvalReport, json_path: str | Path, table_path: str | Path | None = None) -> None:
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    if table_path is not None:
        Path(table_path).write_text(report.render_table() + "\n", encoding="utf-8")


def read_report(json_path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(json_path).read_text(encoding="utf-8")))
