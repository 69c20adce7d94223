import json

import pytest
from hypothesis import HealthCheck, settings

from sceneground.scene import ObjectRecord, SceneTranscript, GroundingTask

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("ci")


def office_objects() -> tuple[ObjectRecord, ...]:
    """An office scene: two walls, floor, three chairs (18 in the corner
    between the white and yellow desks), an armchair, desks, clutter."""
    return (
        ObjectRecord(0, "monitor", (-3.40, -2.40, 1.10), (0.55, 0.12, 0.35), (20, 20, 22)),
        ObjectRecord(5, "box", (1.50, -4.50, 0.25), (0.50, 0.45, 0.50), (150, 120, 80)),
        ObjectRecord(6, "copier", (1.60, -3.20, 0.60), (0.70, 0.65, 1.20), (210, 210, 208)),
        ObjectRecord(7, "floor", (-1.00, -1.50, 0.05), (6.00, 7.00, 0.10), (120, 120, 120)),
        ObjectRecord(8, "wall", (-4.00, -1.50, 1.25), (0.10, 7.00, 2.50), (200, 200, 198)),
        ObjectRecord(9, "wall", (-1.00, -5.00, 1.25), (6.00, 0.10, 2.50), (198, 199, 200)),
        ObjectRecord(15, "armchair", (1.20, 1.00, 0.50), (0.80, 0.85, 1.00), (140, 20, 25)),
        ObjectRecord(18, "chair", (-2.98, -3.31, 0.39), (0.53, 0.61, 0.81), (60, 58, 50)),
        ObjectRecord(19, "chair", (0.80, -0.60, 0.45), (0.55, 0.60, 0.90), (90, 40, 35)),
        ObjectRecord(20, "desk", (-3.40, -2.50, 0.40), (1.20, 0.70, 0.80), (230, 228, 225)),
        ObjectRecord(21, "desk", (-2.00, -4.30, 0.40), (1.40, 0.70, 0.80), (235, 200, 60)),
        ObjectRecord(49, "chair", (-3.60, -4.40, 0.40), (0.50, 0.55, 0.85), (70, 66, 60)),
    )


@pytest.fixture
def office_scene() -> SceneTranscript:
    return SceneTranscript("scene0592", (-1.00, -1.50, 0.60), office_objects())


@pytest.fixture
def corner_task() -> GroundingTask:
    return GroundingTask(
        task_id="t-corner",
        scene_id="scene0592",
        utterance="the chair in the corner of the room, between the white and yellow desks",
        gt_object_id=18,
        distractor_count=2,
        view_dependent=False,
    )


def scene_to_detection_dict(scene: SceneTranscript, with_center: bool = True) -> dict:
    data = {
        "scene_id": scene.scene_id,
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "center": list(o.center),
                "size": list(o.size),
                "rgb": list(o.rgb),
            }
            for o in scene.objects
        ],
    }
    if with_center:
        data["scene_center"] = list(scene.scene_center)
    return data


@pytest.fixture
def office_scene_file(tmp_path, office_scene):
    path = tmp_path / "scene0592.json"
    path.write_text(json.dumps(scene_to_detection_dict(office_scene)), encoding="utf-8")
    return path
