"""SEARCH/REPLACE edits: parsing, application, history, diffs.

The block grammar is the conflict-marker style that code LLMs emit
reliably:

    ### relative/path.c
    <<<<<<< SEARCH
    exact lines to find
    =======
    replacement lines
    >>>>>>> REPLACE

Marker lines tolerate any run of 7 or more marker characters. Applied
edit sets become git commits in the workspace, which makes rollback an
O(1) reset instead of a bookkeeping exercise.
"""

from __future__ import annotations

import difflib
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (EmptyHistory, MalformedBlock, NoChanges,
                     SearchTextAmbiguous, SearchTextNotFound)
from .naming import dedupe_name
from .repo_model import DEFAULT_IGNORE_DIRS, read_text, write_text

_HEADER_RE = re.compile(r"^###\s+(\S.*?)\s*$")
_OPEN_RE = re.compile(r"^<{7,}\s*SEARCH\s*$")
_DIVIDER_RE = re.compile(r"^={7,}\s*$")
_CLOSE_RE = re.compile(r"^>{7,}\s*REPLACE\s*$")
_FENCE_RE = re.compile(r"^```")

_GIT_ID = ["-c", "user.name=vulnmend", "-c", "user.email=vulnmend@localhost",
           "-c", "commit.gpgsign=false"]


@dataclass(frozen=True)
class SearchReplaceEdit:
    """One block: replace `search` with `replace` in `file`."""

    file: str
    search: str
    replace: str

    def is_noop(self) -> bool:
        return _normalize_ws(self.search) == _normalize_ws(self.replace)


@dataclass(frozen=True)
class EditSet:
    name: str
    edits: tuple


@dataclass(frozen=True)
class HistoryView:
    """What the history looks like right now, for agent observations."""

    count: int
    names: tuple
    latest: str | None

    def render(self) -> str:
        if self.count == 0:
            return "Edit history: no applied edit sets."
        listing = ", ".join(self.names)
        return (f"Edit history: {self.count} applied edit set(s): "
                f"[{listing}]; most recent: {self.latest}.")


@dataclass(frozen=True)
class ApplyResult:
    fixed_name: str
    commit_id: str
    files: tuple
    history: HistoryView


def _normalize_ws(text: str) -> str:
    return "\n".join(re.sub(r"[ \t]+", " ", ln).rstrip()
                     for ln in text.split("\n"))


def _checked_path(raw: str, offset: int) -> str:
    path = raw.strip().replace("\\", "/")
    if path.startswith("/") or re.match(r"^[A-Za-z]:", path):
        raise MalformedBlock(f"absolute path {path!r} not allowed", offset)
    parts = [p for p in path.split("/") if p not in ("", ".")]
    if ".." in parts:
        raise MalformedBlock(f"path {path!r} escapes the workspace", offset)
    if not parts:
        raise MalformedBlock("empty file path", offset)
    return "/".join(parts)


def parse_edit_blocks(text: str) -> list[SearchReplaceEdit]:
    """Extract every edit block from free-form text.

    Prose and code fences around the blocks are ignored. A structural
    violation inside a block raises MalformedBlock carrying the offset of
    the block's header line.
    """
    lines = text.split("\n")
    offsets = [0]
    for ln in lines:
        offsets.append(offsets[-1] + len(ln) + 1)

    edits = []
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        if _OPEN_RE.match(line):
            raise MalformedBlock("SEARCH block without a '### <path>' header",
                                 offsets[i])
        header = _HEADER_RE.match(line)
        if not header:
            i += 1
            continue
        block_offset = offsets[i]
        path = _checked_path(header.group(1), block_offset)
        i += 1
        while i < n and (not lines[i].strip() or _FENCE_RE.match(lines[i])):
            i += 1
        if i >= n or not _OPEN_RE.match(lines[i]):
            found = lines[i] if i < n else "<end of text>"
            raise MalformedBlock(
                f"expected SEARCH opener after header, found {found!r}",
                block_offset)
        i += 1
        search_lines: list[str] = []
        while i < n and not _DIVIDER_RE.match(lines[i]):
            if _CLOSE_RE.match(lines[i]) or _OPEN_RE.match(lines[i]) \
                    or _HEADER_RE.match(lines[i]):
                raise MalformedBlock("missing ======= divider", block_offset)
            search_lines.append(lines[i])
            i += 1
        if i >= n:
            raise MalformedBlock("missing ======= divider", block_offset)
        i += 1
        replace_lines: list[str] = []
        while i < n and not _CLOSE_RE.match(lines[i]):
            if _OPEN_RE.match(lines[i]) or _DIVIDER_RE.match(lines[i]):
                raise MalformedBlock("missing REPLACE closer", block_offset)
            replace_lines.append(lines[i])
            i += 1
        if i >= n:
            raise MalformedBlock("missing REPLACE closer", block_offset)
        i += 1
        if not search_lines:
            raise MalformedBlock("empty SEARCH body", block_offset)
        edits.append(SearchReplaceEdit(file=path,
                                       search="\n".join(search_lines),
                                       replace="\n".join(replace_lines)))
    return edits


def locate_search(content: str, search: str) -> tuple[int, int, str]:
    """Find the line range covered by `search` in `content`.

    Returns (start_index, end_index, mode) over content's line list, end
    exclusive; mode is "exact" or "normalized". Exact line-sequence
    matching is tried first, then a whitespace-normalized pass.
    """
    content_lines = content.split("\n")
    search_lines = search.split("\n")
    k = len(search_lines)

    def find_all(cl, sl):
        hits = []
        for idx in range(len(cl) - k + 1):
            if cl[idx:idx + k] == sl:
                hits.append(idx)
        return hits

    hits = find_all(content_lines, search_lines)
    mode = "exact"
    if not hits:
        norm_content = [re.sub(r"[ \t]+", " ", ln).rstrip()
                        for ln in content_lines]
        norm_search = [re.sub(r"[ \t]+", " ", ln).rstrip()
                       for ln in search_lines]
        hits = find_all(norm_content, norm_search)
        mode = "normalized"
    if not hits:
        head = search_lines[0][:80]
        raise SearchTextNotFound(f"search text not found (starts {head!r})")
    if len(hits) > 1:
        raise SearchTextAmbiguous(
            f"search text matches {len(hits)} locations")
    return hits[0], hits[0] + k, mode


def apply_edits_to_text(content: str, edits: Sequence[SearchReplaceEdit]) -> str:
    """Apply several edits to one file's content, in order."""
    for edit in edits:
        start, end, _ = locate_search(content, edit.search)
        lines = content.split("\n")
        lines[start:end] = edit.replace.split("\n")
        content = "\n".join(lines)
    return content


class EditHistory:
    """Stack of applied edit sets, each one a git commit.

    The workspace is turned into a git repository on first use (an
    existing checkout is adopted as-is, with a baseline commit added only
    if the tree is dirty). Rollbacks are hard resets, so untracked build
    artifacts survive them.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._applied: list[tuple[str, str]] = []
        self._name_counts: dict[str, int] = {}
        self._assume_clean = False
        if not (self.root / ".git").exists():
            self._git("init", "-q")
        if not self._has_head() or self._dirty():
            self._git("add", "-A")
            self._git("commit", "-q", "--allow-empty", "-m", "baseline")
        self.base_commit = self._rev_parse("HEAD")
        self._assume_clean = True

    # -- git plumbing -----------------------------------------------------

    def _git(self, *args: str) -> str:
        proc = subprocess.run(["git", *_GIT_ID, "-C", str(self.root), *args],
                              capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(f"git {' '.join(args)} failed: "
                               f"{proc.stderr.strip()}")
        return proc.stdout

    def _has_head(self) -> bool:
        proc = subprocess.run(
            ["git", "-C", str(self.root), "rev-parse", "--verify", "-q",
             "HEAD"], capture_output=True, text=True)
        return proc.returncode == 0

    def _dirty(self) -> bool:
        out = self._git("status", "--porcelain", "-uno")
        return bool(out.strip())

    def _rev_parse(self, ref: str) -> str:
        return self._git("rev-parse", ref).strip()

    # -- public surface ---------------------------------------------------

    def history_view(self) -> HistoryView:
        names = tuple(name for name, _ in self._applied)
        return HistoryView(count=len(names), names=names,
                           latest=names[-1] if names else None)

    def fix_name(self, unique_name: str) -> str:
        return dedupe_name(self._name_counts, unique_name)

    def apply_edits(self, unique_name: str,
                    edits: Sequence[SearchReplaceEdit] | str) -> ApplyResult:
        if isinstance(edits, str):
            edits = parse_edit_blocks(edits)
        if not edits:
            raise NoChanges("no changes: empty edit set")
        if not self._assume_clean and self._dirty():
            raise RuntimeError("workspace has uncommitted changes outside "
                               "the edit history")

        # locate and rewrite in memory first: apply is all-or-nothing
        new_contents: dict[str, str] = {}
        by_file: dict[str, list[SearchReplaceEdit]] = {}
        for edit in edits:
            by_file.setdefault(edit.file, []).append(edit)
        for rel, file_edits in by_file.items():
            path = self.root / rel
            if not path.is_file():
                raise FileNotFoundError(rel)
            content = read_text(path)
            updated = apply_edits_to_text(content, file_edits)
            if updated != content:
                new_contents[rel] = updated
        if not new_contents:
            raise NoChanges("no changes: edits leave every file unmodified")

        fixed_name = self.fix_name(unique_name)
        for rel, content in new_contents.items():
            write_text(self.root / rel, content)
        files = sorted(new_contents)
        self._git("commit", "-q", "-m", fixed_name, "--", *files)
        commit_id = self._rev_parse("HEAD")
        self._applied.append((fixed_name, commit_id))
        self._assume_clean = True
        return ApplyResult(fixed_name=fixed_name, commit_id=commit_id,
                           files=tuple(files), history=self.history_view())

    def rollback_latest(self) -> HistoryView:
        if not self._applied:
            raise EmptyHistory("empty rollback history")
        self._applied.pop()
        target = self._applied[-1][1] if self._applied else self.base_commit
        self._git("reset", "-q", "--hard", target)
        self._assume_clean = True
        return self.history_view()

    def rollback_all(self) -> HistoryView:
        if not self._applied:
            raise EmptyHistory("empty rollback history")
        self._applied.clear()
        self._git("reset", "-q", "--hard", self.base_commit)
        self._assume_clean = True
        return self.history_view()


# -- unified diffs ---------------------------------------------------------


def _tracked_files(root: Path) -> set[str]:
    # in a git tree only tracked files count, so build artifacts dropped
    # by the PoC runner never leak into diffs
    if (root / ".git").is_dir():
        proc = subprocess.run(
            ["git", "-C", str(root), "ls-files", "-z"],
            capture_output=True, text=True)
        if proc.returncode == 0:
            return {rel for rel in proc.stdout.split("\0")
                    if rel and (root / rel).is_file()}
    out = set()
    for path in root.rglob("*"):
        if not path.is_file():
            continue
        rel = path.relative_to(root)
        if any(part in DEFAULT_IGNORE_DIRS for part in rel.parts):
            continue
        out.add(rel.as_posix())
    return out


def _range_header(start: int, length: int) -> str:
    # unified format: zero-length ranges cite the line before the gap
    if length == 1:
        return str(start + 1)
    if length == 0:
        return f"{start},0"
    return f"{start + 1},{length}"


def _emit(out: list, prefix: str, token: str) -> None:
    if token.endswith("\n"):
        out.append(prefix + token[:-1])
    else:
        out.append(prefix + token)
        out.append("\\ No newline at end of file")


def _file_hunks(old: str, new: str) -> list[str]:
    a = old.splitlines(keepends=True)
    b = new.splitlines(keepends=True)
    sm = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    out: list[str] = []
    for group in sm.get_grouped_opcodes(3):
        i1, i2 = group[0][1], group[-1][2]
        j1, j2 = group[0][3], group[-1][4]
        out.append(f"@@ -{_range_header(i1, i2 - i1)} "
                   f"+{_range_header(j1, j2 - j1)} @@")
        for tag, a1, a2, b1, b2 in group:
            if tag == "equal":
                for k in range(a1, a2):
                    _emit(out, " ", a[k])
                continue
            if tag in ("replace", "delete"):
                for k in range(a1, a2):
                    _emit(out, "-", a[k])
            if tag in ("replace", "insert"):
                for k in range(b1, b2):
                    _emit(out, "+", b[k])
    return out


def to_unified_diff(before_root: Path | str, after_root: Path | str) -> str:
    """Git-consumable unified diff between two trees.

    Covers every added, removed or modified file, in lexicographic path
    order. The empty string means the trees match.
    """
    before_root = Path(before_root)
    after_root = Path(after_root)
    before = _tracked_files(before_root)
    after = _tracked_files(after_root)

    chunks: list[str] = []
    for rel in sorted(before | after):
        old = read_text(before_root / rel) if rel in before else None
        new = read_text(after_root / rel) if rel in after else None
        if old == new:
            continue
        header = [f"diff --git a/{rel} b/{rel}"]
        if old is None:
            header.append("new file mode 100644")
            header.append("--- /dev/null")
            header.append(f"+++ b/{rel}")
        elif new is None:
            header.append("deleted file mode 100644")
            header.append(f"--- a/{rel}")
            header.append("+++ /dev/null")
        else:
            header.append(f"--- a/{rel}")
            header.append(f"+++ b/{rel}")
        hunks = _file_hunks(old or "", new or "")
        if not hunks:
            continue
        chunks.extend(header)
        chunks.extend(hunks)
    if not chunks:
        return ""
    return "\n".join(chunks) + "\n"


def iter_block_texts(edits: Iterable[SearchReplaceEdit]) -> str:
    """Render edits back into block text (the inverse of parsing)."""
    parts = []
    for e in edits:
        parts.append(f"### {e.file}")
        parts.append("<<<<<<< SEARCH")
        parts.append(e.search)
        parts.append("=======")
        parts.append(e.replace)
        parts.append(">>>>>>> REPLACE")
    return "\n".join(parts) + "\n"
