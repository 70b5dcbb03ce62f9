"""Running things: sandboxes, the PoC pipeline and the script sandbox.

A sandbox is a place where the repro command can run. The local adapter
covers plain directories; the container adapter drives a container
runtime CLI with the same surface. Everything above them is
adapter-agnostic.
"""

from __future__ import annotations

import builtins as _real_builtins
import io
import re
import shlex
import subprocess
import traceback
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .errors import SandboxUnavailable, UnknownLogName, WriteFailure
from .naming import dedupe_name
from .repo_model import read_text, write_text

DEFAULT_HEAD_LINES = 100
DEFAULT_TAIL_LINES = 100
DEFAULT_SCRIPT_OUTPUT_CAP = 8192
DEFAULT_POC_TIMEOUT = 300.0

DEFAULT_SANITIZER_SIGNATURES = (
    r"^==\d+==\s*ERROR:",
    r"^SUMMARY: ",
)

DEFAULT_COMPILE_ERROR_SIGNATURES = (
    r"^[^:\n]+:\d+(:\d+)?: (fatal )?error:",
    r"^collect2: error:",
    r"undefined reference to",
    r"\bBUILD FAILED\b",
)


@dataclass(frozen=True)
class ExecResult:
    exit_code: int
    stdout: str
    stderr: str
    timed_out: bool = False


class LocalSandbox:
    """Command execution rooted in a local directory."""

    def __init__(self, workspace: Path | str):
        self.workspace = Path(workspace)
        if not self.workspace.is_dir():
            raise SandboxUnavailable(f"workspace {workspace} is not a "
                                     f"directory")

    @property
    def descriptor(self) -> str:
        return f"local:{self.workspace}"

    def exec(self, command: str,
             timeout: float = DEFAULT_POC_TIMEOUT) -> ExecResult:
        try:
            proc = subprocess.run(command, shell=True, cwd=self.workspace,
                                  capture_output=True, text=True,
                                  timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            def _decode(raw):
                if raw is None:
                    return ""
                if isinstance(raw, bytes):
                    return raw.decode("utf-8", errors="replace")
                return raw
            return ExecResult(exit_code=124, stdout=_decode(exc.stdout),
                              stderr=_decode(exc.stderr), timed_out=True)
        return ExecResult(exit_code=proc.returncode, stdout=proc.stdout,
                          stderr=proc.stderr)

    def read_file(self, rel: str) -> str:
        return read_text(self.workspace / rel)

    def write_file(self, rel: str, text: str) -> None:
        path = self.workspace / rel
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            write_text(path, text)
        except OSError as exc:
            raise WriteFailure(f"cannot write {rel}: {exc}") from exc

    def close(self) -> None:
        pass


class ContainerSandbox:
    """The same surface against `docker`/`podman`.

    The container is started once and kept alive; commands run via exec.
    """

    def __init__(self, image: str, runtime: str = "docker",
                 workdir: str = "/workspace", start: bool = True):
        self.image = image
        self.runtime = runtime
        self.workdir = workdir
        self.container = f"vulnmend-{uuid.uuid4().hex[:12]}"
        if start:
            argv = self.start_argv()
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise SandboxUnavailable(
                    f"cannot start container from {image}: "
                    f"{proc.stderr.strip()}")

    @property
    def descriptor(self) -> str:
        return f"container:{self.image}:{self.container}"

    def start_argv(self) -> list[str]:
        return [self.runtime, "run", "-d", "--name", self.container,
                "-w", self.workdir, self.image, "sleep", "infinity"]

    def exec_argv(self, command: str) -> list[str]:
        return [self.runtime, "exec", "-w", self.workdir, self.container,
                "sh", "-c", command]

    def read_argv(self, rel: str) -> list[str]:
        return [self.runtime, "exec", self.container, "cat",
                f"{self.workdir}/{rel}"]

    def stop_argv(self) -> list[str]:
        return [self.runtime, "rm", "-f", self.container]

    def exec(self, command: str,
             timeout: float = DEFAULT_POC_TIMEOUT) -> ExecResult:
        try:
            proc = subprocess.run(self.exec_argv(command),
                                  capture_output=True, text=True,
                                  timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            return ExecResult(exit_code=124, stdout=str(exc.stdout or ""),
                              stderr=str(exc.stderr or ""), timed_out=True)
        return ExecResult(exit_code=proc.returncode, stdout=proc.stdout,
                          stderr=proc.stderr)

    def read_file(self, rel: str) -> str:
        proc = subprocess.run(self.read_argv(rel), capture_output=True,
                              text=True)
        if proc.returncode != 0:
            raise FileNotFoundError(rel)
        return proc.stdout

    def write_file(self, rel: str, text: str) -> None:
        quoted = shlex.quote(f"{self.workdir}/{rel}")
        proc = subprocess.run(
            self.exec_argv(f"cat > {quoted}"),
            input=text, capture_output=True, text=True)
        if proc.returncode != 0:
            raise WriteFailure(f"cannot write {rel}: {proc.stderr.strip()}")

    def close(self) -> None:
        subprocess.run(self.stop_argv(), capture_output=True)


# -- log plumbing ------------------------------------------------------------


class LogStore:
    """Process-lifetime store of full, untruncated run logs."""

    def __init__(self):
        self._logs: dict[str, str] = {}
        self._counts: dict[str, int] = {}

    def reserve(self, unique_name: str) -> str:
        return dedupe_name(self._counts, unique_name)

    def put(self, name: str, text: str) -> None:
        self._logs[name] = text

    def get(self, name: str) -> str:
        if name not in self._logs:
            known = ", ".join(sorted(self._logs)) or "<none>"
            raise UnknownLogName(f"no log named {name!r} (known: {known})")
        return self._logs[name]

    def names(self) -> list[str]:
        return sorted(self._logs)


def truncate_log(log: str, head_lines: int = DEFAULT_HEAD_LINES,
                 tail_lines: int = DEFAULT_TAIL_LINES,
                 name: str = "log") -> str:
    """Keep the first and last lines of a long log, with an elision
    marker naming the stored full copy."""
    lines = log.split("\n")
    if len(lines) <= head_lines + tail_lines:
        return log
    elided = len(lines) - head_lines - tail_lines
    marker = f"... [{elided} lines elided; full log stored as '{name}'] ..."
    return "\n".join(lines[:head_lines] + [marker] + lines[-tail_lines:])


_SPA_LINE_RE = re.compile(
    r'^\[SPA\] (\S+) (PASS|FAIL)(?: expr="([^"]*)")?\s*$', re.MULTILINE)


@dataclass(frozen=True)
class AssertionSummary:
    """Per-property PASS/FAIL tallies pulled from a full run log."""

    counts: tuple  # ((id, passes, fails, expr), ...) in first-seen order

    @property
    def total_evaluations(self) -> int:
        return sum(p + f for _, p, f, _ in self.counts)

    def render(self) -> str:
        if not self.counts:
            return "Safety property assertions: none evaluated."
        parts = []
        for prop_id, passes, fails, expr in self.counts:
            bit = f"{prop_id}: {passes} PASS, {fails} FAIL"
            if fails and expr:
                bit += f' (expr "{expr}")'
            parts.append(bit)
        return "Safety property assertions: " + "; ".join(parts)


def summarize_assertions(log: str) -> AssertionSummary:
    order: list[str] = []
    passes: dict[str, int] = {}
    fails: dict[str, int] = {}
    exprs: dict[str, str] = {}
    for m in _SPA_LINE_RE.finditer(log):
        prop_id, verdict, expr = m.group(1), m.group(2), m.group(3)
        if prop_id not in passes:
            order.append(prop_id)
            passes[prop_id] = 0
            fails[prop_id] = 0
        if verdict == "PASS":
            passes[prop_id] += 1
        else:
            fails[prop_id] += 1
            if expr:
                exprs[prop_id] = expr
    return AssertionSummary(counts=tuple(
        (p, passes[p], fails[p], exprs.get(p, "")) for p in order))


# -- PoC runner ---------------------------------------------------------------


@dataclass(frozen=True)
class PocResult:
    name: str
    phase: str                 # "ran" | "compile_error"
    exit_code: int
    compiled: bool
    sanitizer_triggered: bool
    timed_out: bool
    summary: AssertionSummary
    log: str                   # truncated, for observations

    def render(self) -> str:
        if self.phase == "compile_error":
            head = (f"PoC run '{self.name}': compilation FAILED "
                    f"(exit {self.exit_code}). Compiler log:")
        else:
            state = ("sanitizer TRIGGERED" if self.sanitizer_triggered
                     else "no sanitizer report")
            head = (f"PoC run '{self.name}': ran, exit {self.exit_code}, "
                    f"{state}.")
            if self.timed_out:
                head += " Note: the command hit its timeout."
        return f"{head}\n{self.summary.render()}\n{self.log}"


class PocRunner:
    """Compile-and-run of the instance's repro command, with log capture.

    One instance descriptor, one runner. Each run gets a caller-chosen
    name (deduplicated with numeric suffixes) under which the full log
    stays retrievable for the life of the process.
    """

    def __init__(self, sandbox, repro_command: str,
                 log_store: LogStore | None = None,
                 head_lines: int = DEFAULT_HEAD_LINES,
                 tail_lines: int = DEFAULT_TAIL_LINES,
                 sanitizer_signatures: Iterable[str] =
                 DEFAULT_SANITIZER_SIGNATURES,
                 compile_error_signatures: Iterable[str] =
                 DEFAULT_COMPILE_ERROR_SIGNATURES,
                 timeout: float = DEFAULT_POC_TIMEOUT):
        self.sandbox = sandbox
        self.repro_command = repro_command
        self.log_store = log_store if log_store is not None else LogStore()
        self.head_lines = head_lines
        self.tail_lines = tail_lines
        self.sanitizer_res = [re.compile(p, re.MULTILINE)
                              for p in sanitizer_signatures]
        self.compile_res = [re.compile(p, re.MULTILINE)
                            for p in compile_error_signatures]
        self.timeout = timeout

    def run_poc(self, unique_name: str) -> PocResult:
        fixed = self.log_store.reserve(unique_name)
        res = self.sandbox.exec(self.repro_command, timeout=self.timeout)
        full_log = res.stdout
        if full_log and not full_log.endswith("\n"):
            full_log += "\n"
        full_log += res.stderr
        self.log_store.put(fixed, full_log)

        sanitizer = any(rx.search(full_log) for rx in self.sanitizer_res)
        compile_error = (res.exit_code != 0 and not sanitizer
                         and any(rx.search(full_log)
                                 for rx in self.compile_res))
        # the summary always reflects the complete log, not the excerpt
        summary = summarize_assertions(full_log)
        truncated = truncate_log(full_log, self.head_lines, self.tail_lines,
                                 name=fixed)
        return PocResult(
            name=fixed,
            phase="compile_error" if compile_error else "ran",
            exit_code=res.exit_code,
            compiled=not compile_error,
            sanitizer_triggered=sanitizer,
            timed_out=res.timed_out,
            summary=summary,
            log=truncated,
        )

    def get_poc_output(self, name: str) -> str:
        return self.log_store.get(name)


# -- python script sandbox -----------------------------------------------------


class SandboxViolation(Exception):
    """Raised inside a sandboxed script when it touches the outside world."""


_SAFE_BUILTIN_NAMES = (
    "abs", "all", "any", "ascii", "bin", "bool", "bytearray", "bytes",
    "callable", "chr", "complex", "dict", "divmod", "enumerate", "filter",
    "float", "format", "frozenset", "hash", "hex", "int", "isinstance",
    "issubclass", "iter", "len", "list", "map", "max", "min", "next",
    "object", "oct", "ord", "pow", "range", "repr", "reversed", "round",
    "set", "slice", "sorted", "str", "sum", "tuple", "type", "zip",
    "ValueError", "TypeError", "KeyError", "IndexError", "AttributeError",
    "RuntimeError", "NameError", "ZeroDivisionError", "ArithmeticError",
    "StopIteration", "LookupError", "OverflowError", "Exception",
    "BaseException", "True", "False", "None", "NotImplemented",
)

_ALLOWED_IMPORTS = frozenset({
    "re", "math", "json", "string", "itertools", "functools", "collections",
    "textwrap", "struct", "binascii", "base64", "statistics",
})


@dataclass
class ScriptResult:
    output: str
    violation: str | None = None
    error: str | None = None


class PythonScriptSandbox:
    """In-process interpreter cage for agent-written helper scripts.

    Scripts get pure-computation builtins, a short import allowlist and a
    `get_poc_output(name)` bridge. File, process and network access is
    stubbed to record a violation and raise. This guards against honest
    mistakes, not a hostile adversary, which matches how the scripts are
    produced (by our own prompts) and consumed (their text output only).
    """

    def __init__(self, log_provider: Callable[[str], str] | None = None,
                 output_cap: int = DEFAULT_SCRIPT_OUTPUT_CAP):
        self.log_provider = log_provider
        self.output_cap = output_cap
        self.violations: list[str] = []

    def _violate(self, detail: str):
        self.violations.append(detail)
        raise SandboxViolation(detail)

    def _guarded_import(self, name, globals=None, locals=None, fromlist=(),
                        level=0):
        root = name.split(".")[0]
        if root in _ALLOWED_IMPORTS:
            return __import__(name, globals, locals, fromlist, level)
        self._violate(f"import of {name!r} blocked")

    def run_script(self, code: str) -> ScriptResult:
        buffer = io.StringIO()
        truncated = [False]

        def guarded_print(*args, sep=" ", end="\n", file=None, flush=False):
            if buffer.tell() >= self.output_cap:
                truncated[0] = True
                return
            print(*args, sep=sep, end=end, file=buffer)

        def blocked(what):
            def stub(*args, **kwargs):
                self._violate(f"{what} blocked")
            return stub

        safe_builtins = {name: getattr(_real_builtins, name)
                         for name in _SAFE_BUILTIN_NAMES
                         if hasattr(_real_builtins, name)}
        safe_builtins["print"] = guarded_print
        safe_builtins["__import__"] = self._guarded_import
        safe_builtins["__build_class__"] = __build_class__
        safe_builtins["__name__"] = "sandboxed_script"
        for banned in ("open", "input", "exec", "eval", "compile",
                       "breakpoint", "exit", "quit", "__loader__"):
            safe_builtins[banned] = blocked(banned)

        env = {"__builtins__": safe_builtins}
        if self.log_provider is not None:
            env["get_poc_output"] = self.log_provider

        before = len(self.violations)
        violation = None
        error = None
        try:
            exec(compile(code, "<agent-script>", "exec"), env)  # noqa: S102
        except SandboxViolation as exc:
            violation = str(exc)
        except BaseException:
            error = traceback.format_exc(limit=4)
        if violation is None and len(self.violations) > before:
            # the script swallowed the violation; it still counts
            violation = self.violations[before]

        output = buffer.getvalue()
        if len(output) > self.output_cap:
            output = (output[:self.output_cap]
                      + f"\n... [output truncated at {self.output_cap} "
                        f"bytes] ...")
        elif truncated[0]:
            output += (f"\n... [output truncated at {self.output_cap} "
                       f"bytes] ...")
        if error:
            output = output + ("\n" if output else "") + error
        return ScriptResult(output=output, violation=violation, error=error)
