"""Newline-delimited JSON bridge that lets an out-of-process agent play.

Per step the toolkit writes one request line::

    {"v": 1, "task": ..., "step_index": 0,
     "page": {"page_id": ..., "xml": ..., "screenshot_ref": null},
     "action_space": [<action>, ...], "history": [<action>, ...]}

and reads one response line ``{"v": 1, "action": <action>}``. Actions use
the ``Action.to_dict`` layout. Transports are a child process's standard
streams or a TCP connection.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
import sys
import time
from typing import Callable, Optional, Sequence

from .core import Action, GuiPage
from .episode import AgentProtocolError

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 10.0
_MAX_LINE = 16 * 1024 * 1024


class BridgeError(AgentProtocolError):
    pass


class Timeout(BridgeError):
    pass


class MalformedResponse(BridgeError):
    pass


class TransportClosed(BridgeError):
    pass


class LineTransport:
    """Line framing over a readable file descriptor with select-based timeouts."""

    def __init__(self) -> None:
        self._buf = b""

    def _fileno(self) -> int:
        raise NotImplementedError

    def _read_chunk(self) -> bytes:
        raise NotImplementedError

    def _write(self, data: bytes) -> None:
        raise NotImplementedError

    def send_line(self, line: str) -> None:
        try:
            self._write(line.encode("utf-8") + b"\n")
        except (BrokenPipeError, ConnectionError, OSError) as exc:
            raise TransportClosed(f"write failed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            left = deadline - time.monotonic()
            if left <= 0:
                raise Timeout(f"no response within {timeout:g}s")
            ready, _, _ = select.select([self._fileno()], [], [], left)
            if not ready:
                raise Timeout(f"no response within {timeout:g}s")
            chunk = self._read_chunk()
            if not chunk:
                raise TransportClosed("agent closed the stream")
            self._buf += chunk
            if len(self._buf) > _MAX_LINE:
                raise MalformedResponse("response line too long")
        line, _, self._buf = self._buf.partition(b"\n")
        return line.decode("utf-8", errors="replace")

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ProcessTransport(LineTransport):
    def __init__(self, command: str | Sequence[str], env: Optional[dict] = None):
        super().__init__()
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     stderr=subprocess.DEVNULL, env=env, bufsize=0)

    def _fileno(self) -> int:
        return self.proc.stdout.fileno()

    def _read_chunk(self) -> bytes:
        return os.read(self._fileno(), 65536)

    def _write(self, data: bytes) -> None:
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


class SocketTransport(LineTransport):
    def __init__(self, address: str | tuple[str, int], connect_timeout: float = DEFAULT_TIMEOUT):
        super().__init__()
        if isinstance(address, str):
            host, _, port = address.rpartition(":")
            address = (host or "127.0.0.1", int(port))
        self.sock = socket.create_connection(address, timeout=connect_timeout)
        self.sock.settimeout(None)

    def _fileno(self) -> int:
        return self.sock.fileno()

    def _read_chunk(self) -> bytes:
        try:
            return self.sock.recv(65536)
        except ConnectionError:
            return b""

    def _write(self, data: bytes) -> None:
        self.sock.sendall(data)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def encode_request(task: str, step_index: int, page: GuiPage, action_space: Sequence[Action],
                   history: Sequence[Action]) -> str:
    return json.dumps({
        "v": PROTOCOL_VERSION,
        "task": task,
        "step_index": step_index,
        "page": {"page_id": page.page_id, "xml": page.xml, "screenshot_ref": page.screenshot_ref},
        "action_space": [a.to_dict() for a in action_space],
        "history": [a.to_dict() for a in history],
    }, ensure_ascii=False)


def decode_response(line: str) -> Action:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"response is not JSON: {line[:80]!r}") from exc
    if not isinstance(msg, dict) or "action" not in msg:
        raise MalformedResponse("response has no 'action' field")
    if msg.get("v", PROTOCOL_VERSION) != PROTOCOL_VERSION:
        raise MalformedResponse(f"unsupported protocol version {msg.get('v')!r}")
    try:
        return Action.from_dict(msg["action"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"bad action: {exc}") from exc


class BridgeAgent:
    """Agent whose decisions come from the other end of a line transport."""

    def __init__(self, transport: LineTransport, timeout: float = DEFAULT_TIMEOUT):
        self.transport = transport
        self.timeout = timeout

    def decide(self, task, page, action_space, history):
        self.transport.send_line(encode_request(task, len(history), page, action_space, history))
        return decode_response(self.transport.recv_line(self.timeout))

    def close(self) -> None:
        self.transport.close()


def external_agent_bridge(transport: LineTransport, timeout: float = DEFAULT_TIMEOUT) -> BridgeAgent:
    return BridgeAgent(transport, timeout)


def echo_policy(request: dict) -> dict:
    """Reference agent: always answers with the first candidate action."""
    return {"v": PROTOCOL_VERSION, "action": request["action_space"][0]}


def serve_lines(reader, writer, handler: Callable[[dict], dict]) -> None:
    """Answer request lines until EOF; ``reader``/``writer`` are text streams."""
    for line in reader:
        if not line.strip():
            continue
        writer.write(json.dumps(handler(json.loads(line)), ensure_ascii=False) + "\n")
        writer.flush()


def serve_tcp_once(server: socket.socket, handler: Callable[[dict], dict] = echo_policy) -> None:
    """Accept one connection on a listening socket and serve it to EOF."""
    conn, _ = server.accept()
    with conn, conn.makefile("r", encoding="utf-8") as r, conn.makefile("w", encoding="utf-8") as w:
        serve_lines(r, w, handler)


def main() -> None:
    """``python -m guiflow.bridge``: the echo agent over stdio."""
    serve_lines(sys.stdin, sys.stdout, echo_policy)


if __name__ == "__main__":
    main()
