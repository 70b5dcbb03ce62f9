"""Issue instances: the JSONL input format of a run.

One line per instance. Required: instance_id, issue_report, repro_command
and exactly one workspace source (a directory path or a container image).
Optional: sanitizer_log, language, verify_command. Relative workspace
paths resolve against the instances file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import SchemaViolation

_ID_OK = set("abcdefghijklmnopqrstuvwxyz"
             "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.")


@dataclass(frozen=True)
class IssueInstance:
    instance_id: str
    issue_report: str
    repro_command: str
    workspace_path: str | None = None
    workspace_image: str | None = None
    sanitizer_log: str | None = None
    language: str = "c"
    verify_command: str | None = None


def _field(obj: dict, name: str, line: int) -> str:
    value = obj.get(name)
    if not isinstance(value, str) or not value.strip():
        raise SchemaViolation(f"missing or empty field {name!r}",
                              field=name, line=line)
    return value


def parse_instance(obj: dict, line: int, base_dir: Path) -> IssueInstance:
    if not isinstance(obj, dict):
        raise SchemaViolation("instance must be a JSON object",
                              field="", line=line)
    instance_id = _field(obj, "instance_id", line)
    if not set(instance_id) <= _ID_OK:
        raise SchemaViolation(
            f"instance_id {instance_id!r} has characters outside "
            "[A-Za-z0-9._-]", field="instance_id", line=line)

    workspace = obj.get("workspace")
    if not isinstance(workspace, dict):
        raise SchemaViolation("missing workspace object",
                              field="workspace", line=line)
    path = workspace.get("path")
    image = workspace.get("image")
    if (path is None) == (image is None):
        raise SchemaViolation(
            "workspace needs exactly one of 'path' or 'image'",
            field="workspace", line=line)
    if path is not None:
        resolved = Path(path)
        if not resolved.is_absolute():
            resolved = base_dir / resolved
        if not resolved.is_dir():
            raise SchemaViolation(
                f"workspace path {str(resolved)!r} is not a directory",
                field="workspace.path", line=line)
        path = str(resolved)

    sanitizer_log = obj.get("sanitizer_log")
    if sanitizer_log is not None and not isinstance(sanitizer_log, str):
        raise SchemaViolation("sanitizer_log must be a string",
                              field="sanitizer_log", line=line)
    language = obj.get("language", "c")
    if language not in ("c", "cpp"):
        raise SchemaViolation(f"unsupported language {language!r}",
                              field="language", line=line)
    verify_command = obj.get("verify_command")
    if verify_command is not None and not isinstance(verify_command, str):
        raise SchemaViolation("verify_command must be a string",
                              field="verify_command", line=line)

    return IssueInstance(
        instance_id=instance_id,
        issue_report=_field(obj, "issue_report", line),
        repro_command=_field(obj, "repro_command", line),
        workspace_path=path,
        workspace_image=image,
        sanitizer_log=sanitizer_log,
        language=language,
        verify_command=verify_command,
    )


def load_instances(path: Path | str) -> list[IssueInstance]:
    path = Path(path)
    base_dir = path.parent
    instances = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except ValueError as exc:
                raise SchemaViolation(f"invalid JSON: {exc}", field="",
                                      line=line_no)
            instance = parse_instance(obj, line_no, base_dir)
            if instance.instance_id in seen:
                raise SchemaViolation(
                    f"duplicate instance_id {instance.instance_id!r}",
                    field="instance_id", line=line_no)
            seen.add(instance.instance_id)
            instances.append(instance)
    if not instances:
        raise SchemaViolation("no instances in file", field="", line=0)
    return instances
