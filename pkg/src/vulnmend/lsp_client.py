"""Minimal Language Server Protocol client over stdio.

Speaks just enough JSON-RPC for definition and reference lookups:
initialize/initialized, didOpen, textDocument/definition,
textDocument/references, shutdown/exit. Positions convert between this
package's 1-based convention and LSP's 0-based one at this boundary and
nowhere else.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from pathlib import Path
from typing import Sequence
from urllib.parse import unquote, urlparse
from urllib.request import pathname2url

from .errors import BackendUnavailable
from .symbol_analysis import SymbolLocation


def _path_to_uri(path: Path) -> str:
    return "file:" + pathname2url(str(path.resolve()))


def _uri_to_path(uri: str) -> Path:
    parsed = urlparse(uri)
    return Path(unquote(parsed.path))


class LspBackend:
    """Symbol backend that proxies to a language server subprocess."""

    includes_declaration = True

    def __init__(self, root: Path | str, command: Sequence[str],
                 language_id: str = "c", timeout: float = 15.0):
        self.root = Path(root).resolve()
        self.language_id = language_id
        self.timeout = timeout
        self._next_id = 0
        self._opened: set[str] = set()
        self._responses: "queue.Queue[dict]" = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                list(command), cwd=str(self.root),
                stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL)
        except OSError as exc:
            raise BackendUnavailable(f"cannot start language server: {exc}")
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        try:
            self._request("initialize", {
                "processId": None,
                "rootUri": _path_to_uri(self.root),
                "capabilities": {},
            })
            self._notify("initialized", {})
        except BackendUnavailable:
            self._proc.kill()
            raise

    # -- framing ------------------------------------------------------------

    def _read_loop(self) -> None:
        stream = self._proc.stdout
        try:
            while True:
                length = None
                while True:
                    line = stream.readline()
                    if not line:
                        return
                    line = line.strip()
                    if not line:
                        break
                    if line.lower().startswith(b"content-length:"):
                        length = int(line.split(b":")[1])
                if length is None:
                    continue
                body = stream.read(length)
                if not body:
                    return
                try:
                    msg = json.loads(body)
                except ValueError:
                    continue
                if "id" in msg and "method" in msg:
                    # server-initiated request: acknowledge and move on
                    self._send({"jsonrpc": "2.0", "id": msg["id"],
                                "result": None})
                elif "id" in msg:
                    self._responses.put(msg)
                # notifications are dropped
        except (OSError, ValueError):
            return

    def _send(self, msg: dict) -> None:
        data = json.dumps(msg).encode()
        frame = b"Content-Length: %d\r\n\r\n%b" % (len(data), data)
        try:
            self._proc.stdin.write(frame)
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise BackendUnavailable(f"language server pipe closed: {exc}")

    def _notify(self, method: str, params: dict) -> None:
        self._send({"jsonrpc": "2.0", "method": method, "params": params})

    def _request(self, method: str, params: dict):
        self._next_id += 1
        rid = self._next_id
        self._send({"jsonrpc": "2.0", "id": rid, "method": method,
                    "params": params})
        while True:
            try:
                msg = self._responses.get(timeout=self.timeout)
            except queue.Empty:
                raise BackendUnavailable(
                    f"language server did not answer {method} within "
                    f"{self.timeout}s")
            if msg.get("id") == rid:
                if "error" in msg:
                    raise BackendUnavailable(
                        f"{method} failed: {msg['error'].get('message')}")
                return msg.get("result")
            # stale response to an abandoned request: drop it


    # -- protocol helpers ----------------------------------------------------

    def _ensure_open(self, rel: str) -> None:
        if rel in self._opened:
            return
        path = self.root / rel
        self._notify("textDocument/didOpen", {"textDocument": {
            "uri": _path_to_uri(path),
            "languageId": self.language_id,
            "version": 1,
            "text": path.read_text(encoding="utf-8",
                                   errors="surrogateescape"),
        }})
        self._opened.add(rel)

    def _doc_position(self, rel: str, line: int, col: int) -> dict:
        return {
            "textDocument": {"uri": _path_to_uri(self.root / rel)},
            "position": {"line": line - 1, "character": col - 1},
        }

    def _to_locations(self, result) -> list[SymbolLocation]:
        if result is None:
            return []
        if isinstance(result, dict):
            result = [result]
        out = []
        for item in result:
            if "targetUri" in item:  # LocationLink
                uri = item["targetUri"]
                pos = item["targetSelectionRange"]["start"]
            else:
                uri = item["uri"]
                pos = item["range"]["start"]
            path = _uri_to_path(uri)
            try:
                rel = path.resolve().relative_to(self.root).as_posix()
            except ValueError:
                rel = str(path)
            line = pos["line"] + 1
            col = pos["character"] + 1
            preview = ""
            try:
                lines = (self.root / rel).read_text(
                    encoding="utf-8", errors="surrogateescape").split("\n")
                if 1 <= line <= len(lines):
                    preview = lines[line - 1]
            except OSError:
                pass
            out.append(SymbolLocation(file=rel, line=line, col=col,
                                      preview=preview))
        out.sort(key=lambda l: (l.file, l.line, l.col))
        return out

    # -- backend surface -------------------------------------------------------

    def definition(self, file: str, line: int, col: int):
        self._ensure_open(file)
        result = self._request("textDocument/definition",
                               self._doc_position(file, line, col))
        return self._to_locations(result)

    def references(self, file: str, line: int, col: int):
        self._ensure_open(file)
        params = self._doc_position(file, line, col)
        params["context"] = {"includeDeclaration": True}
        result = self._request("textDocument/references", params)
        return self._to_locations(result)

    def shutdown(self) -> None:
        try:
            self._request("shutdown", {})
            self._notify("exit", {})
        except BackendUnavailable:
            pass
        finally:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=3)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
