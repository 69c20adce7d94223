"""Scene data model: detected objects, transcripts, and grounding tasks.

A scene transcript is the textual, object-centric listing handed to the
language model: one header line with the scene id and scene center, then one
line per object such as

    chair, id=19, ctr=[-2.98, -3.31, 0.39], size=[0.53, 0.61, 0.81], rgb=[60, 58, 50];

Coordinates are rendered in the detector's world frame, rounded to 2 decimal
places (about 1 cm, below detector noise); rgb channels stay integers.
Rendering then parsing a transcript reproduces the records up to that
rounding.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DetectionParseError,
    DetectionSchemaError,
    TranscriptParseError,
    UnknownObjectError,
)
from .geometry import Aabb, Vec3

TRANSCRIPT_DECIMALS = 2

_FORBIDDEN_CATEGORY_CHARS = set(",;=[]\n")


def quantize(value: float, decimals: int = TRANSCRIPT_DECIMALS) -> float:
    """Round exactly the way the transcript renderer formats floats."""
    return float(f"{value:.{decimals}f}")


def _as_vec3(value: Sequence[float], what: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise DetectionSchemaError(f"{what} must be a 3-vector, got {value!r}")
    return (float(value[0]), float(value[1]), float(value[2]))


@dataclass(frozen=True)
class ObjectRecord:
    """One detected object: id, category, center/size in meters, mean color."""

    id: int
    category: str
    center: Vec3
    size: Vec3
    rgb: tuple[int, int, int]

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 0:
            raise DetectionSchemaError(f"object id must be a non-negative integer, got {self.id!r}")
        category = str(self.category).strip().lower()
        if not category:
            raise DetectionSchemaError(f"object {self.id}: empty category")
        if _FORBIDDEN_CATEGORY_CHARS & set(category):
            raise DetectionSchemaError(
                f"object {self.id}: category {category!r} contains reserved characters"
            )
        object.__setattr__(self, "category", category)
        object.__setattr__(self, "center", _as_vec3(self.center, f"object {self.id} center"))
        size = _as_vec3(self.size, f"object {self.id} size")
        if any(s <= 0 for s in size):
            raise DetectionSchemaError(f"object {self.id}: size must be positive, got {size}")
        object.__setattr__(self, "size", size)
        rgb = tuple(self.rgb)
        if len(rgb) != 3 or any(not isinstance(c, int) or isinstance(c, bool) for c in rgb):
            raise DetectionSchemaError(f"object {self.id}: rgb must be 3 integers, got {self.rgb!r}")
        if any(not 0 <= c <= 255 for c in rgb):
            raise DetectionSchemaError(f"object {self.id}: rgb {rgb} outside [0, 255]")
        object.__setattr__(self, "rgb", rgb)

    @property
    def aabb(self) -> Aabb:
        return Aabb(self.center, self.size)

    def quantized(self, decimals: int = TRANSCRIPT_DECIMALS) -> "ObjectRecord":
        return replace(
            self,
            center=tuple(quantize(v, decimals) for v in self.center),
            size=tuple(quantize(v, decimals) for v in self.size),
        )


@dataclass(frozen=True)
class SceneTranscript:
    """A scene: id, scene center, and the ordered detected-object list."""

    scene_id: str
    scene_center: Vec3
    objects: tuple[ObjectRecord, ...]

    def __post_init__(self) -> None:
        if not str(self.scene_id).strip():
            raise DetectionSchemaError("scene_id must be non-empty")
        object.__setattr__(self, "scene_center", _as_vec3(self.scene_center, "scene_center"))
        objects = tuple(self.objects)
        if not objects:
            raise DetectionSchemaError(f"scene {self.scene_id}: object list is empty")
        seen: set[int] = set()
        for obj in objects:
            if obj.id in seen:
                raise DetectionSchemaError(f"duplicate id {obj.id}")
            seen.add(obj.id)
        object.__setattr__(self, "objects", objects)

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(obj.id for obj in self.objects)

    def object_by_id(self, object_id: int) -> ObjectRecord:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise UnknownObjectError(f"scene {self.scene_id} has no object with id {object_id}")

    def subset(self, ids: Iterable[int]) -> "SceneTranscript":
        """Scene restricted to `ids`, preserving the original object order."""
        wanted = set(ids)
        unknown = wanted - self.ids
        if unknown:
            raise UnknownObjectError(
                f"scene {self.scene_id} has no object with id {sorted(unknown)[0]}"
            )
        return replace(self, objects=tuple(o for o in self.objects if o.id in wanted))

    def quantized(self, decimals: int = TRANSCRIPT_DECIMALS) -> "SceneTranscript":
        return replace(
            self,
            scene_center=tuple(quantize(v, decimals) for v in self.scene_center),
            objects=tuple(o.quantized(decimals) for o in self.objects),
        )


@dataclass(frozen=True)
class GroundingTask:
    """One referring expression to resolve against one scene.

    Ground-truth fields are optional so the same type serves inference-only
    queries; scoring raises when the protocol's ground truth is missing.
    """

    task_id: str
    scene_id: str
    utterance: str
    gt_object_id: int | None = None
    gt_bbox: Aabb | None = None
    distractor_count: int | None = None
    view_dependent: bool | None = None

    def __post_init__(self) -> None:
        if not self.utterance.strip():
            raise DetectionSchemaError(f"task {self.task_id}: empty utterance")
        if self.distractor_count is not None and self.distractor_count < 0:
            raise DetectionSchemaError(
                f"task {self.task_id}: distractor_count must be >= 0"
            )

    @property
    def has_ground_truth(self) -> bool:
        return self.gt_object_id is not None or self.gt_bbox is not None


def _mean_center(objects: Sequence[ObjectRecord]) -> Vec3:
    n = len(objects)
    return (
        sum(o.center[0] for o in objects) / n,
        sum(o.center[1] for o in objects) / n,
        sum(o.center[2] for o in objects) / n,
    )


def load_detections(path: str | Path) -> SceneTranscript:
    """Load a detection JSON file.

    Schema: {"scene_id": str, "scene_center": [f,f,f]?, "objects": [{"id",
    "category", "center", "size", "rgb"}]}. When scene_center is absent it
    defaults to the mean of the object centers.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DetectionParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DetectionParseError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, Mapping):
        raise DetectionSchemaError(f"{path}: top level must be an object")
    if "scene_id" not in data:
        raise DetectionSchemaError(f"{path}: missing field 'scene_id'")
    if "objects" not in data or not isinstance(data["objects"], list):
        raise DetectionSchemaError(f"{path}: missing or non-list field 'objects'")
    objects = []
    for index, entry in enumerate(data["objects"]):
        if not isinstance(entry, Mapping):
            raise DetectionSchemaError(f"{path}: objects[{index}] is not an object")
        missing = [k for k in ("id", "category", "center", "size", "rgb") if k not in entry]
        if missing:
            raise DetectionSchemaError(
                f"{path}: objects[{index}] missing field '{missing[0]}'"
            )
        objects.append(
            ObjectRecord(
                id=entry["id"],
                category=entry["category"],
                center=_as_vec3(entry["center"], f"objects[{index}] center"),
                size=_as_vec3(entry["size"], f"objects[{index}] size"),
                rgb=tuple(entry["rgb"]) if isinstance(entry["rgb"], list) else entry["rgb"],
            )
        )
    center = data.get("scene_center")
    if center is None:
        if not objects:
            raise DetectionSchemaError(f"{path}: scene {data['scene_id']} has no objects")
        scene_center = _mean_center(objects)
    else:
        scene_center = _as_vec3(center, "scene_center")
    return SceneTranscript(str(data["scene_id"]), scene_center, tuple(objects))


def _fmt(value: float) -> str:
    return f"{value:.{TRANSCRIPT_DECIMALS}f}"


def _fmt_vec(vec: Vec3) -> str:
    return "[" + ", ".join(_fmt(v) for v in vec) + "]"


def render_transcript(scene: SceneTranscript, ids: Iterable[int] | None = None) -> str:
    """Render the scene transcript, optionally restricted to `ids`.

    Output is deterministic and order-preserving; object lines follow the
    scene's object order regardless of `ids` ordering.
    """
    if ids is None:
        selected = None
    else:
        selected = set(ids)
        unknown = selected - scene.ids
        if unknown:
            raise UnknownObjectError(
                f"scene {scene.scene_id} has no object with id {sorted(unknown)[0]}"
            )
    lines = [f"{scene.scene_id}: Scene center: {_fmt_vec(scene.scene_center)}; objs list:"]
    for obj in scene.objects:
        if selected is not None and obj.id not in selected:
            continue
        lines.append(
            f"{obj.category}, id={obj.id}, ctr={_fmt_vec(obj.center)}, "
            f"size={_fmt_vec(obj.size)}, rgb=[{obj.rgb[0]}, {obj.rgb[1]}, {obj.rgb[2]}];"
        )
    return "\n".join(lines)


_HEADER_RE = re.compile(
    r"^(?P<scene_id>.+?): Scene center: \[(?P<center>[^\]]*)\]; objs list:$"
)
_OBJECT_RE = re.compile(
    r"^(?P<category>[^,]+), id=(?P<id>\d+), ctr=\[(?P<ctr>[^\]]*)\], "
    r"size=\[(?P<size>[^\]]*)\], rgb=\[(?P<rgb>[^\]]*)\];$"
)


def _parse_floats(text: str, line_no: int, line: str) -> Vec3:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise TranscriptParseError(f"line {line_no}: expected 3 components in {line!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise TranscriptParseError(f"line {line_no}: bad number in {line!r}") from exc


def parse_transcript(text: str) -> SceneTranscript:
    """Parse transcript text back into a scene; inverse of render_transcript
    up to the declared rounding."""
    lines = [(i + 1, line) for i, line in enumerate(text.splitlines()) if line.strip()]
    if not lines:
        raise TranscriptParseError("empty transcript")
    header_no, header = lines[0]
    match = _HEADER_RE.match(header.strip())
    if not match:
        raise TranscriptParseError(f"line {header_no}: malformed header {header!r}")
    scene_id = match.group("scene_id")
    scene_center = _parse_floats(match.group("center"), header_no, header)
    objects = []
    for line_no, line in lines[1:]:
        obj_match = _OBJECT_RE.match(line.strip())
        if not obj_match:
            raise TranscriptParseError(f"line {line_no}: malformed object line {line!r}")
        rgb_parts = [p.strip() for p in obj_match.group("rgb").split(",")]
        if len(rgb_parts) != 3:
            raise TranscriptParseError(f"line {line_no}: expected 3 rgb components in {line!r}")
        try:
            rgb = tuple(int(p) for p in rgb_parts)
        except ValueError as exc:
            raise TranscriptParseError(f"line {line_no}: bad rgb value in {line!r}") from exc
        objects.append(
            ObjectRecord(
                id=int(obj_match.group("id")),
                category=obj_match.group("category").strip(),
                center=_parse_floats(obj_match.group("ctr"), line_no, line),
                size=_parse_floats(obj_match.group("size"), line_no, line),
                rgb=rgb,  # type: ignore[arg-type]
            )
        )
    return SceneTranscript(scene_id, scene_center, tuple(objects))


def task_from_dict(data: Mapping) -> GroundingTask:
    gt_bbox = None
    if data.get("gt_bbox") is not None:
        raw = data["gt_bbox"]
        gt_bbox = Aabb(_as_vec3(raw["center"], "gt_bbox center"), _as_vec3(raw["size"], "gt_bbox size"))
    return GroundingTask(
        task_id=str(data["task_id"]),
        scene_id=str(data["scene_id"]),
        utterance=str(data["utterance"]),
        gt_object_id=data.get("gt_object_id"),
        gt_bbox=gt_bbox,
        distractor_count=data.get("distractor_count"),
        view_dependent=data.get("view_dependent"),
    )


def task_to_dict(task: GroundingTask) -> dict:
    data: dict = {
        "task_id": task.task_id,
        "scene_id": task.scene_id,
        "utterance": task.utterance,
    }
    if task.gt_object_id is not None:
        data["gt_object_id"] = task.gt_object_id
    if task.gt_bbox is not None:
        data["gt_bbox"] = {"center": list(task.gt_bbox.center), "size": list(task.gt_bbox.size)}
    if task.distractor_count is not None:
        data["distractor_count"] = task.distractor_count
    if task.view_dependent is not None:
        data["view_dependent"] = task.view_dependent
    return data


def load_tasks(path: str | Path) -> list[GroundingTask]:
    """Load grounding tasks from a JSONL file (one task object per line)."""
    path = Path(path)
    tasks = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DetectionParseError(f"cannot read {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DetectionParseError(f"{path}: line {line_no}: invalid JSON: {exc.msg}") from exc
        missing = [k for k in ("task_id", "scene_id", "utterance") if k not in data]
        if missing:
            raise DetectionSchemaError(f"{path}: line {line_no}: missing field '{missing[0]}'")
        tasks.append(task_from_dict(data))
    return tasks
