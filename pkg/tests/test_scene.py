import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sceneground.errors import (
    DetectionParseError,
    DetectionSchemaError,
    TranscriptParseError,
    UnknownObjectError,
)
from sceneground.geometry import Aabb
from sceneground.scene import (
    GroundingTask,
    ObjectRecord,
    SceneTranscript,
    load_detections,
    load_tasks,
    parse_transcript,
    quantize,
    render_transcript,
    task_from_dict,
    task_to_dict,
)

from conftest import scene_to_detection_dict

CATEGORIES = (
    "chair", "table", "desk", "monitor", "pillow", "bed", "lamp", "wall",
    "floor", "cabinet", "trash can", "sofa", "door", "window", "shelf",
)


def random_scene(rng: random.Random, n_objects: int | None = None) -> SceneTranscript:
    n = n_objects if n_objects is not None else rng.randint(1, 25)
    ids = rng.sample(range(200), n)
    objects = tuple(
        ObjectRecord(
            id=i,
            category=rng.choice(CATEGORIES),
            center=tuple(rng.uniform(-8, 8) for _ in range(3)),
            size=tuple(rng.uniform(0.05, 4.0) for _ in range(3)),
            rgb=tuple(rng.randint(0, 255) for _ in range(3)),
        )
        for i in ids
    )
    center = tuple(rng.uniform(-3, 3) for _ in range(3))
    return SceneTranscript(f"scene{rng.randint(0, 9999):04d}", center, objects)


class TestRecords:
    def test_category_is_normalized(self):
        obj = ObjectRecord(1, "  Chair ", (0, 0, 0), (1, 1, 1), (10, 10, 10))
        assert obj.category == "chair"

    def test_nonpositive_size_rejected(self):
        with pytest.raises(DetectionSchemaError):
            ObjectRecord(1, "chair", (0, 0, 0), (1, 0, 1), (10, 10, 10))

    def test_rgb_range_checked(self):
        with pytest.raises(DetectionSchemaError):
            ObjectRecord(1, "chair", (0, 0, 0), (1, 1, 1), (10, 300, 10))

    def test_negative_id_rejected(self):
        with pytest.raises(DetectionSchemaError):
            ObjectRecord(-1, "chair", (0, 0, 0), (1, 1, 1), (1, 1, 1))

    def test_duplicate_ids_rejected(self):
        obj = ObjectRecord(5, "chair", (0, 0, 0), (1, 1, 1), (1, 1, 1))
        with pytest.raises(DetectionSchemaError, match="duplicate id 5"):
            SceneTranscript("s", (0, 0, 0), (obj, obj))

    def test_empty_scene_rejected(self):
        with pytest.raises(DetectionSchemaError):
            SceneTranscript("s", (0, 0, 0), ())

    def test_task_requires_utterance(self):
        with pytest.raises(DetectionSchemaError):
            GroundingTask("t", "s", "   ")

    def test_task_round_trips_through_dict(self):
        task = GroundingTask(
            "t1", "s1", "the red chair", gt_object_id=4,
            gt_bbox=Aabb((1, 2, 3), (1, 1, 1)), distractor_count=3, view_dependent=True,
        )
        assert task_from_dict(task_to_dict(task)) == task


class TestLoadDetections:
    def test_scene_center_defaults_to_mean(self, tmp_path):
        objs = [
            {"id": 0, "category": "chair", "center": [0, 0, 0], "size": [1, 1, 1], "rgb": [1, 1, 1]},
            {"id": 1, "category": "desk", "center": [3, 0, 0], "size": [1, 1, 1], "rgb": [1, 1, 1]},
            {"id": 2, "category": "lamp", "center": [0, 3, 3], "size": [1, 1, 1], "rgb": [1, 1, 1]},
        ]
        path = tmp_path / "scene.json"
        path.write_text(json.dumps({"scene_id": "s1", "objects": objs}))
        scene = load_detections(path)
        assert scene.scene_center == (1.0, 1.0, 1.0)

    def test_duplicate_id_names_the_id(self, tmp_path):
        objs = [
            {"id": 5, "category": "chair", "center": [0, 0, 0], "size": [1, 1, 1], "rgb": [1, 1, 1]},
            {"id": 5, "category": "desk", "center": [1, 0, 0], "size": [1, 1, 1], "rgb": [1, 1, 1]},
        ]
        path = tmp_path / "scene.json"
        path.write_text(json.dumps({"scene_id": "s1", "objects": objs}))
        with pytest.raises(DetectionSchemaError, match="duplicate id 5"):
            load_detections(path)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "scene.json"
        path.write_text('{"scene_id": "s1",\n "objects": [}')
        with pytest.raises(DetectionParseError, match="line 2"):
            load_detections(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DetectionParseError):
            load_detections(tmp_path / "nope.json")

    def test_all_records_ingested(self, tmp_path):
        # Oracle: an independent JSON walk counting entries and ids.
        rng = random.Random(11)
        scene = random_scene(rng, n_objects=20)
        path = tmp_path / "scene.json"
        raw = scene_to_detection_dict(scene)
        path.write_text(json.dumps(raw))
        loaded = load_detections(path)
        walked_ids = [entry["id"] for entry in json.loads(path.read_text())["objects"]]
        assert len(walked_ids) == 20
        assert [o.id for o in loaded.objects] == walked_ids

    def test_missing_field_reported(self, tmp_path):
        path = tmp_path / "scene.json"
        path.write_text(json.dumps({
            "scene_id": "s1",
            "objects": [{"id": 0, "category": "chair", "center": [0, 0, 0], "size": [1, 1, 1]}],
        }))
        with pytest.raises(DetectionSchemaError, match="rgb"):
            load_detections(path)


class TestRenderTranscript:
    def test_contains_expected_object_line(self, office_scene):
        text = render_transcript(office_scene)
        assert "chair, id=19, ctr=[" in text
        assert text.splitlines()[0].startswith("scene0592: Scene center: [")

    def test_empty_id_set_renders_header_only(self, office_scene):
        text = render_transcript(office_scene, ids=set())
        assert len(text.splitlines()) == 1

    def test_filtered_render_line_count(self, office_scene):
        ids = {8, 15, 19}
        text = render_transcript(office_scene, ids=ids)
        assert len(text.splitlines()) == 1 + len(ids)

    def test_unknown_id_named_in_error(self, office_scene):
        with pytest.raises(UnknownObjectError, match="999"):
            render_transcript(office_scene, ids={19, 999})

    def test_deterministic(self, office_scene):
        assert render_transcript(office_scene) == render_transcript(office_scene)

    def test_order_preserved_regardless_of_id_order(self, office_scene):
        text = render_transcript(office_scene, ids={49, 0, 18})
        lines = text.splitlines()[1:]
        assert [line.split("id=")[1].split(",")[0] for line in lines] == ["0", "18", "49"]


class TestParseTranscript:
    def test_round_trip(self, office_scene):
        assert parse_transcript(render_transcript(office_scene)) == office_scene.quantized()

    def test_missing_size_field_rejected(self, office_scene):
        text = render_transcript(office_scene)
        broken = text.replace("size=", "sz=", 1)
        with pytest.raises(TranscriptParseError, match="line 2"):
            parse_transcript(broken)

    def test_prompt_style_block(self):
        text = (
            "scene0592: Scene center: [-1.00, -1.50, 0.60]; objs list:\n"
            "monitor, id=0, ctr=[-3.40, -2.40, 1.10], size=[0.55, 0.12, 0.35], rgb=[20, 20, 22];\n"
            "box, id=5, ctr=[1.50, -4.50, 0.25], size=[0.50, 0.45, 0.50], rgb=[150, 120, 80];\n"
            "copier, id=6, ctr=[1.60, -3.20, 0.60], size=[0.70, 0.65, 1.20], rgb=[210, 210, 208];\n"
            "floor, id=7, ctr=[-1.00, -1.50, 0.05], size=[6.00, 7.00, 0.10], rgb=[120, 120, 120];\n"
            "wall, id=8, ctr=[-4.00, -1.50, 1.25], size=[0.10, 7.00, 2.50], rgb=[200, 200, 198];\n"
            "armchair, id=15, ctr=[1.20, 1.00, 0.50], size=[0.80, 0.85, 1.00], rgb=[140, 20, 25];\n"
            "chair, id=19, ctr=[0.80, -0.60, 0.45], size=[0.55, 0.60, 0.90], rgb=[90, 40, 35];\n"
        )
        scene = parse_transcript(text)
        assert scene.ids == {0, 5, 6, 7, 8, 15, 19}
        assert scene.scene_id == "scene0592"

    def test_empty_text_rejected(self):
        with pytest.raises(TranscriptParseError):
            parse_transcript("\n\n")

    @given(st.integers(0, 2**32 - 1))
    def test_random_scene_round_trip(self, seed):
        scene = random_scene(random.Random(seed))
        assert parse_transcript(render_transcript(scene)) == scene.quantized()


def test_quantize_matches_renderer_formatting():
    for value in (0.005, -0.004999, 2.675, 1.0 / 3.0, -1.115):
        assert quantize(value) == float(f"{value:.2f}")


def test_load_tasks(tmp_path):
    path = tmp_path / "tasks.jsonl"
    rows = [
        {"task_id": "a", "scene_id": "s", "utterance": "the chair", "gt_object_id": 3,
         "distractor_count": 0, "view_dependent": False},
        {"task_id": "b", "scene_id": "s", "utterance": "the desk",
         "gt_bbox": {"center": [0, 0, 0], "size": [1, 1, 1]}},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    tasks = load_tasks(path)
    assert len(tasks) == 2
    assert tasks[0].gt_object_id == 3
    assert tasks[1].gt_bbox == Aabb((0, 0, 0), (1, 1, 1))
    assert tasks[1].gt_object_id is None
