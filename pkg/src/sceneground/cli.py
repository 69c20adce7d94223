"""Command-line entry point.

Subcommands:
  transcribe      print a scene transcript (filtered when an utterance is given)
  ground          resolve one task and print the prediction
  eval            score a task file under a benchmark protocol
  build-finetune  build the self-correction fine-tuning dataset

Exit codes: 0 success, 1 task failure (no answer / dataset validation),
2 input or configuration error.

Backends are written as `scripted:PATH` (a JSON list of canned assistant
responses, consumed in order) or `live:BASE_URL` together with --model; the
API key is read from the environment ($OPENAI_API_KEY by default), never from
config files. A JSON config file can supply any flag's default; explicit
flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping, Sequence

from .engine import EngineConfig, ground, trace_to_dict
from .errors import SceneGroundError
from .evaluate import sample_subset, score_referit3d, score_scanrefer, write_report
from .filtering import filter_lexical, load_lexicon
from .llm import HttpChatClient, LlmClient, RateLimiter, ScriptedClient
from .sandbox import InProcessSandbox, ShimSandbox, shim_available
from .scene import (
    GroundingTask,
    SceneTranscript,
    load_detections,
    load_tasks,
    render_transcript,
)
from .selfcorrect import build_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TASK_FAILURE = 1
EXIT_INPUT_ERROR = 2


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneGroundError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SceneGroundError(f"config file {path} must contain a JSON object")
    return data


def _resolve(args: argparse.Namespace, config: Mapping, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _build_backend(backend_spec: str | None, model: str | None, jobs: int) -> tuple[LlmClient, int]:
    """Client plus the effective parallelism (scripted backends serialize)."""
    if not backend_spec:
        raise SceneGroundError("no backend configured; pass --backend scripted:PATH or live:URL")
    kind, _, rest = backend_spec.partition(":")
    if kind == "scripted":
        if not rest:
            raise SceneGroundError("scripted backend needs a path: scripted:PATH")
        # A scripted backend replays one shared response list; parallel
        # consumption would interleave nondeterministically.
        if jobs > 1:
            logger.warning("scripted backend forces --jobs 1 for determinism")
        return ScriptedClient.from_file(rest), 1
    if kind == "live":
        if not rest:
            raise SceneGroundError("live backend needs a base URL: live:https://...")
        if not model:
            raise SceneGroundError("live backend needs --model")
        limiter = RateLimiter(requests_per_minute=60.0)
        return HttpChatClient(rest, model, rate_limiter=limiter), jobs
    raise SceneGroundError(f"unknown backend kind {kind!r} (use scripted: or live:)")


def _load_scenes(path: str) -> dict[str, SceneTranscript]:
    """Load one detection file or every *.json in a directory."""
    p = Path(path)
    if p.is_dir():
        scenes = {}
        for file in sorted(p.glob("*.json")):
            scene = load_detections(file)
            scenes[scene.scene_id] = scene
        if not scenes:
            raise SceneGroundError(f"no *.json detection files in {p}")
        return scenes
    scene = load_detections(p)
    return {scene.scene_id: scene}


def _engine_config(args: argparse.Namespace, config: Mapping) -> EngineConfig:
    return EngineConfig(
        mode=_resolve(args, config, "mode", "principles"),
        max_rounds=int(_resolve(args, config, "max_rounds", 10)),
        filter_mode=_resolve(args, config, "filter", "lexical"),
        answer_type="bbox" if _resolve(args, config, "protocol", "referit3d") == "scanrefer" else "id",
    )


def _make_sandbox(args: argparse.Namespace, config: Mapping):
    use_shim = bool(_resolve(args, config, "shim", False))
    if use_shim:
        if not shim_available():
            raise SceneGroundError("--shim requested but no interpreter shim is available")
        return ShimSandbox()
    return InProcessSandbox()


def cmd_transcribe(args: argparse.Namespace, config: Mapping) -> int:
    scene = load_detections(args.scene)
    lexicon = load_lexicon(args.lexicon) if args.lexicon else None
    if args.utterance:
        result = filter_lexical(scene, args.utterance, lexicon)
        print(render_transcript(scene, result.kept_ids))
    else:
        print(render_transcript(scene))
    return EXIT_OK


def _select_task(tasks: Sequence[GroundingTask], task_id: str | None) -> GroundingTask:
    if task_id is None:
        return tasks[0]
    for task in tasks:
        if task.task_id == task_id:
            return task
    raise SceneGroundError(f"no task with id {task_id!r}")


def cmd_ground(args: argparse.Namespace, config: Mapping) -> int:
    tasks = load_tasks(_require(args, config, "tasks"))
    scenes = _load_scenes(_require(args, config, "scenes"))
    task = _select_task(tasks, args.task_id)
    if task.scene_id not in scenes:
        raise SceneGroundError(f"task {task.task_id}: scene {task.scene_id} not loaded")
    llm, _jobs = _build_backend(
        _resolve(args, config, "backend"), _resolve(args, config, "model"), 1
    )
    engine_config = _engine_config(args, config)
    sandbox = _make_sandbox(args, config)
    try:
        prediction, trace = ground(task, scenes[task.scene_id], llm, engine_config, sandbox)
    finally:
        sandbox.close()
    out_dir = _resolve(args, config, "out")
    if out_dir:
        out_path = Path(out_dir) / "traces.jsonl"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(trace_to_dict(trace), ensure_ascii=False) + "\n")
    if prediction is None:
        print(f"task {task.task_id}: no answer ({trace.outcome})", file=sys.stderr)
        return EXIT_TASK_FAILURE
    if engine_config.answer_type == "bbox":
        center = ", ".join(f"{v:.2f}" for v in prediction.center)
        size = ", ".join(f"{v:.2f}" for v in prediction.size)
        print(f"center=[{center}], size=[{size}]")
    else:
        print(prediction)
    return EXIT_OK


def _require(args: argparse.Namespace, config: Mapping, key: str) -> str:
    value = _resolve(args, config, key)
    if value is None:
        raise SceneGroundError(f"missing required option --{key.replace('_', '-')}")
    return value


def _ground_one(task, scenes, llm, engine_config, sandbox):
    try:
        return ground(task, scenes[task.scene_id], llm, engine_config, sandbox)
    except SceneGroundError as exc:
        logger.warning("task %s failed: %s", task.task_id, exc)
        return None, None


def cmd_eval(args: argparse.Namespace, config: Mapping) -> int:
    tasks = load_tasks(_require(args, config, "tasks"))
    scenes = _load_scenes(_require(args, config, "scenes"))
    protocol = _resolve(args, config, "protocol", "referit3d")
    subset = _resolve(args, config, "subset")
    seed = int(_resolve(args, config, "seed", 0))
    if subset is not None:
        tasks = sample_subset(tasks, int(subset), seed)
    missing = [t.task_id for t in tasks if t.scene_id not in scenes]
    if missing:
        raise SceneGroundError(f"task {missing[0]}: scene not loaded")
    llm, jobs = _build_backend(
        _resolve(args, config, "backend"),
        _resolve(args, config, "model"),
        int(_resolve(args, config, "jobs", 1)),
    )
    engine_config = _engine_config(args, config)
    sandbox = _make_sandbox(args, config)
    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(
                    pool.map(lambda t: _ground_one(t, scenes, llm, engine_config, sandbox), tasks)
                )
        else:
            results = [_ground_one(t, scenes, llm, engine_config, sandbox) for t in tasks]
    finally:
        sandbox.close()

    predictions = {t.task_id: r[0] for t, r in zip(tasks, results)}
    traces = [r[1] for r in results if r[1] is not None]
    if protocol == "scanrefer":
        report = score_scanrefer(predictions, tasks)
    else:
        report = score_referit3d(predictions, tasks)

    out_dir = Path(_resolve(args, config, "out", "eval_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(report, out_dir / "report.json", out_dir / "report.txt")
    with (out_dir / "traces.jsonl").open("w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_dict(trace), ensure_ascii=False) + "\n")
    print(report.render_table())
    print(f"report written to {out_dir}")
    return EXIT_OK


def cmd_build_finetune(args: argparse.Namespace, config: Mapping) -> int:
    tasks = load_tasks(_require(args, config, "tasks"))
    scenes = _load_scenes(_require(args, config, "scenes"))
    llm, _jobs = _build_backend(
        _resolve(args, config, "backend"), _resolve(args, config, "model"), 1
    )
    engine_config = _engine_config(args, config)
    sandbox = _make_sandbox(args, config)
    out_dir = Path(_resolve(args, config, "out", "finetune_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        stats = build_dataset(
            tasks, scenes, llm, engine_config, out_dir / "finetune.jsonl", sandbox
        )
    finally:
        sandbox.close()
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(stats))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneground",
        description="Resolve natural-language references to objects in 3D scenes.",
    )
    parser.add_argument("--config", help="JSON file supplying defaults for any flag")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tr = sub.add_parser("transcribe", help="print a scene transcript")
    p_tr.add_argument("scene", help="detection JSON file")
    p_tr.add_argument("--utterance", help="filter the transcript for this utterance")
    p_tr.add_argument("--lexicon", help="synonym lexicon JSON (defaults to the bundled one)")
    p_tr.set_defaults(func=cmd_transcribe)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--tasks", help="task JSONL file")
        p.add_argument("--scenes", help="detection JSON file or directory of them")
        p.add_argument("--backend", help="scripted:PATH or live:BASE_URL")
        p.add_argument("--model", help="model name for the live backend")
        p.add_argument("--mode", choices=["principles", "no_principles"])
        p.add_argument("--max-rounds", dest="max_rounds", type=int)
        p.add_argument("--filter", choices=["lexical", "llm"])
        p.add_argument("--protocol", choices=["referit3d", "scanrefer"])
        p.add_argument("--shim", action="store_true", default=None,
                       help="run snippets in the interpreter-shim subprocess")
        p.add_argument("--out", help="output directory")

    p_gr = sub.add_parser("ground", help="resolve one task")
    add_run_flags(p_gr)
    p_gr.add_argument("--task-id", dest="task_id", help="task to run (default: first)")
    p_gr.set_defaults(func=cmd_ground)

    p_ev = sub.add_parser("eval", help="score a task file")
    add_run_flags(p_ev)
    p_ev.add_argument("--subset", type=int, help="evaluate a seeded random subset of this size")
    p_ev.add_argument("--seed", type=int, help="subset sampling seed (default 0)")
    p_ev.add_argument("--jobs", type=int, help="parallel grounding sessions (default 1)")
    p_ev.set_defaults(func=cmd_eval)

    p_ft = sub.add_parser("build-finetune", help="build the self-correction dataset")
    add_run_flags(p_ft)
    p_ft.set_defaults(func=cmd_build_finetune)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config_file(args.config)
        return args.func(args, config)
    except SceneGroundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
