"""Stdio worker that executes Python snippets in a persistent namespace.

One JSON object per line in both directions:

    request:  {"id": str, "code": str, "reset": bool}
    response: {"id": str, "stdout": str, "stderr": str, "status": "ok|error"}

The namespace persists across requests until a request carries reset=true,
which rebuilds it before executing that request's code. Geometry helpers are
preloaded; builtins are restricted (no open/input, imports limited to a
small stdlib whitelist) so user code cannot reach files or the network.
Exceptions in user code are reported in stderr and never terminate the
worker; a malformed request line gets a single status=error response.
"""

import builtins
import contextlib
import io
import json
import sys
import traceback

from .geometry import HELPERS

__version__ = "0.1.0"

OUTPUT_LIMIT = 4096
TRUNCATION_MARKER = "\n...[output truncated]"

SAFE_MODULES = frozenset({
    "bisect",
    "cmath",
    "collections",
    "dataclasses",
    "decimal",
    "fractions",
    "functools",
    "heapq",
    "itertools",
    "json",
    "math",
    "operator",
    "random",
    "re",
    "statistics",
    "string",
    "textwrap",
    "typing",
})

_REMOVED_BUILTINS = (
    "open",
    "input",
    "breakpoint",
    "help",
    "exit",
    "quit",
    "copyright",
    "credits",
    "license",
)


def _restricted_import(name, globals=None, locals=None, fromlist=(), level=0):
    root = name.split(".")[0]
    if level == 0 and root in SAFE_MODULES:
        return builtins.__import__(name, globals, locals, fromlist, level)
    raise ImportError(f"import of {name!r} is not allowed in the sandbox")


def restricted_builtins() -> dict:
    table = dict(vars(builtins))
    for name in _REMOVED_BUILTINS:
        table.pop(name, None)
    table["__import__"] = _restricted_import
    return table


def truncate(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    return text[:limit] + TRUNCATION_MARKER


class ShimSession:
    """Holds the persistent namespace and runs snippets against it."""

    def __init__(self, output_limit: int = OUTPUT_LIMIT):
        self.output_limit = output_limit
        self.namespace = self._fresh_namespace()

    @staticmethod
    def _fresh_namespace() -> dict:
        return {"__builtins__": restricted_builtins(), **HELPERS}

    def reset(self) -> None:
        self.namespace = self._fresh_namespace()

    def run(self, code: str) -> tuple[str, str, str]:
        """Execute one snippet; returns (stdout, stderr, status)."""
        if not code:
            return "", "", "ok"
        out, err = io.StringIO(), io.StringIO()
        status = "ok"
        try:
            compiled = compile(code, "<sandbox>", "exec")
            with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
                exec(compiled, self.namespace)
        except BaseException:
            status = "error"
            err.write(self._user_traceback())
        return (
            truncate(out.getvalue(), self.output_limit),
            truncate(err.getvalue(), self.output_limit),
            status,
        )

    @staticmethod
    def _user_traceback() -> str:
        etype, value, tb = sys.exc_info()
        if tb is not None and tb.tb_next is not None:
            tb = tb.tb_next  # drop the run() frame, keep the user's
        return "".join(traceback.format_exception(etype, value, tb))


def handle_line(line: str, session: ShimSession) -> dict:
    """One response per request line, echoing the id when one is present."""
    request_id = ""
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {
            "id": request_id,
            "stdout": "",
            "stderr": f"protocol error: request is not valid JSON: {exc.msg}",
            "status": "error",
        }
    if not isinstance(request, dict):
        return {
            "id": request_id,
            "stdout": "",
            "stderr": "protocol error: request must be a JSON object",
            "status": "error",
        }
    raw_id = request.get("id", "")
    if isinstance(raw_id, str):
        request_id = raw_id
    code = request.get("code", "")
    reset = request.get("reset", False)
    if not isinstance(code, str) or not isinstance(reset, bool):
        return {
            "id": request_id,
            "stdout": "",
            "stderr": "protocol error: 'code' must be a string and 'reset' a boolean",
            "status": "error",
        }
    if reset:
        session.reset()
    stdout, stderr, status = session.run(code)
    return {"id": request_id, "stdout": stdout, "stderr": stderr, "status": status}


def serve_loop(stdin=None, stdout=None, output_limit: int = OUTPUT_LIMIT) -> None:
    """Serve requests until stdin closes. Emits exactly one response per
    non-empty input line, in order, and never raises out of the loop."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    session = ShimSession(output_limit=output_limit)
    for line in stdin:
        if not line.strip():
            continue
        try:
            response = handle_line(line, session)
        except BaseException as exc:  # last-ditch: the loop must survive
            response = {
                "id": "",
                "stdout": "",
                "stderr": f"protocol error: {exc!r}",
                "status": "error",
            }
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()


def main() -> None:
    serve_loop()


if __name__ == "__main__":
    main()
