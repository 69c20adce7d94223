import json

import pytest

from sceneground.cli import main
from sceneground.engine import format_answer

from conftest import scene_to_detection_dict


@pytest.fixture
def workspace(tmp_path, office_scene):
    """Scenes dir + tasks file + output dir for CLI runs."""
    scenes_dir = tmp_path / "scenes"
    scenes_dir.mkdir()
    (scenes_dir / "scene0592.json").write_text(
        json.dumps(scene_to_detection_dict(office_scene)), encoding="utf-8"
    )
    tasks = [
        {"task_id": "t1", "scene_id": "scene0592",
         "utterance": "the chair in the corner of the room, between the white and yellow desks",
         "gt_object_id": 18, "distractor_count": 2, "view_dependent": False},
        {"task_id": "t2", "scene_id": "scene0592", "utterance": "the copier",
         "gt_object_id": 6, "distractor_count": 0, "view_dependent": False},
    ]
    tasks_path = tmp_path / "tasks.jsonl"
    tasks_path.write_text("\n".join(json.dumps(t) for t in tasks) + "\n", encoding="utf-8")
    return tmp_path


def write_script(tmp_path, responses, name="script.json"):
    path = tmp_path / name
    path.write_text(json.dumps(responses), encoding="utf-8")
    return path


class TestTranscribe:
    def test_full_scene(self, workspace, capsys):
        code = main(["transcribe", str(workspace / "scenes" / "scene0592.json")])
        out = capsys.readouterr().out
        assert code == 0
        assert "chair, id=19, ctr=[" in out
        assert len(out.strip().splitlines()) == 13  # header + 12 objects

    def test_filtered_by_utterance(self, workspace, capsys):
        code = main([
            "transcribe", str(workspace / "scenes" / "scene0592.json"),
            "--utterance", "the chair in the corner of the room, between white and yellow desks",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "chair, id=18" in out
        assert "wall, id=8" in out
        assert "copier" not in out
        assert "monitor" not in out

    def test_missing_file_exits_2(self, workspace, capsys):
        code = main(["transcribe", str(workspace / "nope.json")])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestGround:
    def test_scripted_prediction_and_trace(self, workspace, capsys):
        script = write_script(workspace, [
            "Checking.\n```python\nprint(sorted(OBJECTS))\n```",
            format_answer(18),
        ])
        out_dir = workspace / "out"
        code = main([
            "ground", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--task-id", "t1",
            "--out", str(out_dir),
        ])
        assert code == 0
        assert capsys.readouterr().out.strip() == "18"
        lines = (out_dir / "traces.jsonl").read_text().strip().splitlines()
        assert len(lines) == 1
        trace = json.loads(lines[0])
        assert trace["task_id"] == "t1"
        assert trace["outcome"] == "answered"

    def test_unknown_task_id_exits_2(self, workspace, capsys):
        script = write_script(workspace, [format_answer(18)])
        code = main([
            "ground", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--task-id", "missing",
        ])
        assert code == 2

    def test_no_answer_exits_1(self, workspace, capsys):
        script = write_script(workspace, ["thinking...", "still thinking..."])
        code = main([
            "ground", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--task-id", "t1", "--max-rounds", "2",
        ])
        assert code == 1

    def test_bbox_protocol_prints_box(self, workspace, capsys):
        script = write_script(workspace, [format_answer(19)])
        code = main([
            "ground", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--task-id", "t1", "--protocol", "scanrefer",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert out.strip() == "center=[0.80, -0.60, 0.45], size=[0.55, 0.60, 0.90]"


class TestEval:
    def _run(self, workspace, out_name="eval"):
        script = write_script(workspace, [format_answer(18), format_answer(6)], name=f"{out_name}.json")
        out_dir = workspace / out_name
        code = main([
            "eval", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--out", str(out_dir),
        ])
        return code, out_dir

    def test_deterministic_report(self, workspace, capsys):
        code_a, dir_a = self._run(workspace, "eval_a")
        code_b, dir_b = self._run(workspace, "eval_b")
        assert code_a == code_b == 0
        report_a = (dir_a / "report.json").read_text()
        report_b = (dir_b / "report.json").read_text()
        assert report_a == report_b
        report = json.loads(report_a)
        assert report["accuracy"]["overall"] == 1.0
        assert report["counts"]["overall"] == [2, 2]

    def test_report_bucket_identity(self, workspace, capsys):
        _code, out_dir = self._run(workspace)
        report = json.loads((out_dir / "report.json").read_text())
        counts = report["counts"]
        assert counts["overall"][0] == counts["easy"][0] + counts["hard"][0]
        assert counts["overall"][1] == counts["easy"][1] + counts["hard"][1]
        assert counts["overall"][1] == counts["view_dep"][1] + counts["view_ind"][1]

    def test_table_printed(self, workspace, capsys):
        self._run(workspace)
        out = capsys.readouterr().out
        assert "Overall" in out and "View Ind." in out

    def test_partial_failure_still_completes(self, workspace, capsys):
        # Script covers only the first task; the second aborts and scores 0.
        script = write_script(workspace, [format_answer(18)])
        out_dir = workspace / "eval_partial"
        code = main([
            "eval", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--out", str(out_dir),
        ])
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert report["counts"]["overall"] == [1, 2]

    def test_subset_with_seed(self, workspace, capsys):
        script = write_script(workspace, [format_answer(18)])
        out_dir = workspace / "eval_subset"
        code = main([
            "eval", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--subset", "1", "--seed", "7",
            "--out", str(out_dir),
        ])
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert report["counts"]["overall"][1] == 1


class TestBuildFinetune:
    def test_dataset_and_stats(self, workspace, capsys):
        script = write_script(workspace, [
            format_answer(18),        # t1 correct
            format_answer(49),        # t2 wrong (gt 6)
            "The copier is object 6; I mistook the box for it.",
            "Object 6 is the copier by the east side.\n" + format_answer(6),
        ])
        out_dir = workspace / "ft"
        code = main([
            "build-finetune", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
            "--backend", f"scripted:{script}",
            "--out", str(out_dir),
        ])
        assert code == 0
        stats = json.loads((out_dir / "stats.json").read_text())
        assert stats == {"correct_first_try": 1, "self_corrected": 1, "dropped": 0, "records": 2}
        lines = (out_dir / "finetune.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2

    def test_byte_identical_rerun(self, workspace):
        responses = [format_answer(18), format_answer(6)]
        for name in ("ft_a", "ft_b"):
            script = write_script(workspace, responses, name=f"{name}.json")
            main([
                "build-finetune", "--tasks", str(workspace / "tasks.jsonl"),
                "--scenes", str(workspace / "scenes"),
                "--backend", f"scripted:{script}",
                "--out", str(workspace / name),
            ])
        assert (workspace / "ft_a" / "finetune.jsonl").read_bytes() == \
            (workspace / "ft_b" / "finetune.jsonl").read_bytes()


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, workspace, capsys):
        script = write_script(workspace, [format_answer(18), format_answer(6)])
        config = {
            "tasks": str(workspace / "tasks.jsonl"),
            "scenes": str(workspace / "scenes"),
            "backend": f"scripted:{script}",
            "out": str(workspace / "from_config"),
        }
        config_path = workspace / "config.json"
        config_path.write_text(json.dumps(config))
        code = main(["--config", str(config_path), "eval"])
        assert code == 0
        assert (workspace / "from_config" / "report.json").exists()

    def test_missing_backend_is_config_error(self, workspace, capsys):
        code = main([
            "eval", "--tasks", str(workspace / "tasks.jsonl"),
            "--scenes", str(workspace / "scenes"),
        ])
        assert code == 2
