"""Code-execution sessions for the reasoning loop.

Two interchangeable sandboxes implement the same surface:

* :class:`InProcessSandbox` executes snippets with ``exec`` in a per-session
  namespace inside the current process. It is the default and keeps the whole
  pipeline runnable without any external executable, but it cannot interrupt
  a runaway snippet, so timeouts are advisory there.
* :class:`ShimSandbox` drives one interpreter-shim subprocess per session over
  a newline-delimited JSON protocol and enforces timeouts by killing and
  restarting the shim.

Within a session the namespace accumulates across snippets, so a function
defined in round one is callable in round three; sessions are fully isolated
from each other. Stdout/stderr are captured per snippet and truncated to a
4 KiB cap with a marker.

Wire protocol (one JSON object per line, both directions):
  request:  {"id": str, "code": str, "reset": bool}
  response: {"id": str, "stdout": str, "stderr": str, "status": "ok|error|timeout"}
"""

from __future__ import annotations

import builtins
import contextlib
import io
import json
import logging
import os
import queue
import shlex
import shutil
import subprocess
import sys
import threading
import time
import traceback
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import SandboxProtocolError, SceneGroundError, ShimUnavailableError
from .helpers import HELPERS
from .scene import SceneTranscript, quantize

logger = logging.getLogger(__name__)

OUTPUT_LIMIT = 4096
TRUNCATION_MARKER = "\n...[output truncated]"
DEFAULT_TIMEOUT = 10.0
MAX_TIMEOUT = 60.0

#: Environment variable naming the shim command (parsed with shlex).
SHIM_ENV_VAR = "SCENEGROUND_SHIM"


@dataclass(frozen=True)
class ExecRequest:
    """One snippet to run in a named session."""

    session_id: str
    code: str
    timeout: float = DEFAULT_TIMEOUT
    reset: bool = False

    def __post_init__(self) -> None:
        if not self.code and not self.reset:
            raise SceneGroundError("ExecRequest.code must be non-empty unless reset is set")
        if not (0.0 < self.timeout <= MAX_TIMEOUT):
            raise SceneGroundError(
                f"ExecRequest.timeout must be in (0, {MAX_TIMEOUT}], got {self.timeout}"
            )


@dataclass(frozen=True)
class ExecResult:
    stdout: str
    stderr: str
    status: str  # "ok" | "error" | "timeout"
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def truncate_output(text: str, limit: int = OUTPUT_LIMIT) -> str:
    if len(text) <= limit:
        return text
    return text[:limit] + TRUNCATION_MARKER


def format_exec_result(result: ExecResult) -> str:
    """Render an ExecResult for a conversation turn. Deliberately excludes
    wall_time so traces stay byte-identical across runs."""
    parts = [f"status: {result.status}"]
    if result.stdout:
        parts.append("stdout:\n" + result.stdout)
    if result.stderr:
        parts.append("stderr:\n" + result.stderr)
    if not result.stdout and not result.stderr:
        parts.append("(no output)")
    return "\n".join(parts)


class Sandbox:
    """Common surface for both sandbox flavors."""

    def execute(self, request: ExecRequest) -> ExecResult:
        raise NotImplementedError

    def close_session(self, session_id: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def __enter__(self) -> "Sandbox":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _user_traceback() -> str:
    """Traceback of the current exception with the executor's own frame
    stripped, so the model only sees its code's frames."""
    etype, value, tb = sys.exc_info()
    if tb is not None and tb.tb_next is not None:
        tb = tb.tb_next
    return "".join(traceback.format_exception(etype, value, tb))


class InProcessSandbox(Sandbox):
    """Executes snippets with exec() in per-session namespaces.

    Used as the fallback executor when no interpreter shim is installed and
    throughout the test suite, where determinism matters more than isolation.
    Timeouts are not enforced here.
    """

    def __init__(self, output_limit: int = OUTPUT_LIMIT):
        self._output_limit = output_limit
        self._namespaces: dict[str, dict] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        # redirect_stdout swaps process-global state, so snippet execution is
        # serialized across sessions; real concurrency comes from ShimSandbox,
        # where every session owns a process.
        self._exec_lock = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _namespace(self, session_id: str) -> dict:
        if session_id not in self._namespaces:
            self._namespaces[session_id] = {"__builtins__": builtins, **HELPERS}
        return self._namespaces[session_id]

    def execute(self, request: ExecRequest) -> ExecResult:
        with self._session_lock(request.session_id):
            if request.reset:
                self._namespaces.pop(request.session_id, None)
            namespace = self._namespace(request.session_id)
            if not request.code:
                return ExecResult("", "", "ok", 0.0)
            out, err = io.StringIO(), io.StringIO()
            status = "ok"
            start = time.perf_counter()
            with self._exec_lock:
                try:
                    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
                        exec(compile(request.code, "<sandbox>", "exec"), namespace)
                except BaseException:
                    status = "error"
                    err.write(_user_traceback())
            wall = time.perf_counter() - start
            return ExecResult(
                stdout=truncate_output(out.getvalue(), self._output_limit),
                stderr=truncate_output(err.getvalue(), self._output_limit),
                status=status,
                wall_time=wall,
            )

    def close_session(self, session_id: str) -> None:
        with self._registry_lock:
            self._namespaces.pop(session_id, None)
            self._locks.pop(session_id, None)

    def close(self) -> None:
        with self._registry_lock:
            self._namespaces.clear()
            self._locks.clear()


def default_shim_command() -> list[str]:
    """Resolve the interpreter-shim command.

    Order: $SCENEGROUND_SHIM, a `pyshim` executable on PATH, then the pyshim
    module if importable. Raises ShimUnavailableError when none resolves.
    """
    env_cmd = os.environ.get(SHIM_ENV_VAR)
    if env_cmd:
        return shlex.split(env_cmd)
    exe = shutil.which("pyshim")
    if exe:
        return [exe]
    try:
        import importlib.util

        if importlib.util.find_spec("pyshim") is not None:
            return [sys.executable, "-m", "pyshim"]
    except (ImportError, ValueError):
        pass
    raise ShimUnavailableError(
        "no interpreter shim found: set $SCENEGROUND_SHIM, put `pyshim` on PATH, "
        "or install the pyshim package"
    )


def shim_available() -> bool:
    try:
        default_shim_command()
    except ShimUnavailableError:
        return False
    return True


class _ShimProcess:
    """One shim subprocess plus a reader thread feeding a line queue."""

    def __init__(self, command: Sequence[str]):
        self._command = list(command)
        self.proc = subprocess.Popen(
            self._command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._counter = 0

    def _read_loop(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def next_request_id(self) -> str:
        self._counter += 1
        return f"r{self._counter}"

    def send(self, payload: dict) -> None:
        assert self.proc.stdin is not None
        self.proc.stdin.write(json.dumps(payload) + "\n")
        self.proc.stdin.flush()

    def receive(self, timeout: float) -> str | None:
        """Next response line, or None on EOF; raises queue.Empty on timeout."""
        return self._lines.get(timeout=timeout)

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:  # pragma: no cover - kill is forceful
            pass


class ShimSandbox(Sandbox):
    """Runs each session in its own interpreter-shim subprocess.

    Calls within one session are serialized; distinct sessions may execute
    concurrently. A snippet that outlives its timeout gets its shim killed
    (and lazily respawned), so no snippet exceeds the timeout by more than
    the kill latency.
    """

    def __init__(self, command: Sequence[str] | None = None, output_limit: int = OUTPUT_LIMIT):
        self._command = list(command) if command is not None else default_shim_command()
        self._output_limit = output_limit
        self._procs: dict[str, _ShimProcess] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _proc(self, session_id: str) -> _ShimProcess:
        proc = self._procs.get(session_id)
        if proc is None or proc.proc.poll() is not None:
            proc = _ShimProcess(self._command)
            self._procs[session_id] = proc
        return proc

    def execute(self, request: ExecRequest) -> ExecResult:
        with self._session_lock(request.session_id):
            restarted = request.session_id in self._procs and (
                self._procs[request.session_id].proc.poll() is not None
            )
            proc = self._proc(request.session_id)
            request_id = proc.next_request_id()
            start = time.perf_counter()
            try:
                proc.send({"id": request_id, "code": request.code, "reset": request.reset})
            except (BrokenPipeError, OSError):
                self._drop(request.session_id)
                return ExecResult(
                    "", "interpreter shim crashed; session restarted with a fresh namespace",
                    "error", time.perf_counter() - start,
                )
            try:
                line = proc.receive(timeout=request.timeout)
            except queue.Empty:
                self._drop(request.session_id)
                wall = time.perf_counter() - start
                return ExecResult(
                    "",
                    f"execution timed out after {request.timeout:.1f}s; interpreter "
                    "restarted (session state cleared)",
                    "timeout",
                    max(wall, request.timeout),
                )
            wall = time.perf_counter() - start
            if line is None:
                self._drop(request.session_id)
                return ExecResult(
                    "", "interpreter shim crashed; session restarted with a fresh namespace",
                    "error", wall,
                )
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                self._drop(request.session_id)
                raise SandboxProtocolError(f"shim sent a non-JSON line: {line[:120]!r}") from exc
            if payload.get("id") != request_id:
                self._drop(request.session_id)
                raise SandboxProtocolError(
                    f"shim response id {payload.get('id')!r} does not match request {request_id!r}"
                )
            status = payload.get("status", "error")
            if status not in ("ok", "error", "timeout"):
                raise SandboxProtocolError(f"shim sent unknown status {status!r}")
            stderr = str(payload.get("stderr", ""))
            if restarted:
                note = "[note: interpreter was restarted; session state had been reset]"
                stderr = note + ("\n" + stderr if stderr else "")
            return ExecResult(
                stdout=truncate_output(str(payload.get("stdout", "")), self._output_limit),
                stderr=truncate_output(stderr, self._output_limit),
                status=status,
                wall_time=wall,
            )

    def _drop(self, session_id: str) -> None:
        proc = self._procs.pop(session_id, None)
        if proc is not None:
            proc.kill()

    def close_session(self, session_id: str) -> None:
        with self._session_lock(session_id):
            self._drop(session_id)
        with self._registry_lock:
            self._locks.pop(session_id, None)

    def close(self) -> None:
        with self._registry_lock:
            for session_id in list(self._procs):
                self._drop(session_id)
            self._locks.clear()


def default_sandbox(prefer_shim: bool = False, **kwargs) -> Sandbox:
    """ShimSandbox when requested and resolvable, else the in-process one."""
    if prefer_shim and shim_available():
        return ShimSandbox(**kwargs)
    if prefer_shim:
        logger.warning("interpreter shim unavailable; falling back to in-process execution")
    return InProcessSandbox()


def context_snippet(scene: SceneTranscript, kept_ids: Iterable[int]) -> str:
    """Code that defines OBJECTS and SCENE_CENTER for the filtered scene.

    Values are rounded exactly as the rendered transcript is, so what the
    model reads and what its code computes over cannot disagree.
    """
    kept = set(kept_ids)
    unknown = kept - scene.ids
    if unknown:
        from .errors import UnknownObjectError

        raise UnknownObjectError(
            f"scene {scene.scene_id} has no object with id {sorted(unknown)[0]}"
        )
    lines = ["OBJECTS = {"]
    for obj in scene.objects:
        if obj.id not in kept:
            continue
        q = obj.quantized()
        lines.append(
            f"    {obj.id}: {{'category': {q.category!r}, 'center': {q.center!r}, "
            f"'size': {q.size!r}, 'rgb': {q.rgb!r}}},"
        )
    lines.append("}")
    center = tuple(quantize(v) for v in scene.scene_center)
    lines.append(f"SCENE_CENTER = {center!r}")
    return "\n".join(lines)


def preload_context(
    sandbox: Sandbox,
    session_id: str,
    scene: SceneTranscript,
    kept_ids: Iterable[int],
    timeout: float = DEFAULT_TIMEOUT,
) -> ExecResult:
    """Inject the filtered object table into a session.

    Geometry helpers are already present: the in-process sandbox seeds them
    into every fresh namespace and the shim preloads its own implementation.
    """
    snippet = context_snippet(scene, kept_ids)
    return sandbox.execute(ExecRequest(session_id=session_id, code=snippet, timeout=timeout))
