"""Bridge to external predictor processes.

Wire protocol: newline-delimited JSON over a TCP socket or a child process's
stdio pipe, one response per request, in order.

Request:  {"type": "predict", "scenario_id": ..., "horizon_frames": ...,
           "agents": [{"id", "kind", "history": [[10 numbers] x 11]}],
           "map": [{"id", "kind", "points": [[x, y, z], ...]}]}
Response: {"type": "prediction",
           "agents": [{"id", "modes": [{"probability",
           "trajectory": [[cx, cy, vx, vy] x horizon]} x 6]}]}
Error:    {"type": "error", "message": ...}

The client validates every mode-set invariant before handing a response to
the engine; protocol failures carry a payload excerpt for debugging.
"""

from __future__ import annotations

import json
import os
import select
import socket
import subprocess
from typing import Sequence

from .collision import MODES_PER_AGENT
from .predictor import (
    ContractViolation,
    PredictionRequest,
    PredictionResponse,
    PredictorError,
    _mode_set,
    validate_response,
)
from .scenario import TrajectorySample

DEFAULT_TIMEOUT = 30.0
_EXCERPT = 200


class BridgeError(PredictorError):
    """Base for transport and protocol failures."""


class BridgeTimeout(BridgeError):
    pass


class BridgeConnectionError(BridgeError):
    pass


class BridgeProtocolError(BridgeError):
    pass


def _excerpt(payload: str | bytes) -> str:
    text = payload.decode("utf-8", "replace") if isinstance(payload, bytes) else payload
    text = text.strip()
    return text[:_EXCERPT] + ("..." if len(text) > _EXCERPT else "")


class TcpTransport:
    """Line transport over a stream socket."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._buf = b""

    def _ensure(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection(
                    (self.host, self.port), timeout=self.timeout
                )
            except OSError as exc:
                raise BridgeConnectionError(
                    f"cannot connect to {self.host}:{self.port}: {exc}"
                ) from None
        return self._sock

    def send_line(self, line: str) -> None:
        sock = self._ensure()
        try:
            sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise BridgeConnectionError(f"send failed: {exc}") from None

    def recv_line(self) -> str:
        sock = self._ensure()
        while b"\n" not in self._buf:
            try:
                chunk = sock.recv(65536)
            except socket.timeout:
                raise BridgeTimeout(
                    f"no response from {self.host}:{self.port} "
                    f"within {self.timeout}s"
                ) from None
            except OSError as exc:
                raise BridgeConnectionError(f"recv failed: {exc}") from None
            if not chunk:
                raise BridgeConnectionError(
                    f"connection to {self.host}:{self.port} closed mid-request; "
                    f"buffered: {_excerpt(self._buf)!r}"
                )
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class StdioTransport:
    """Line transport over a spawned child process's stdin/stdout."""

    def __init__(self, argv: Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        self.argv = list(argv)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._buf = b""

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                # unbuffered pipes so select() on the fd never misses data
                self._proc = subprocess.Popen(
                    self.argv,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    bufsize=0,
                )
            except OSError as exc:
                raise BridgeConnectionError(
                    f"cannot spawn {self.argv!r}: {exc}"
                ) from None
            self._buf = b""
        return self._proc

    def send_line(self, line: str) -> None:
        proc = self._ensure()
        assert proc.stdin is not None
        try:
            proc.stdin.write(line.encode("utf-8") + b"\n")
            proc.stdin.flush()
        except (OSError, BrokenPipeError) as exc:
            raise BridgeConnectionError(f"send to {self.argv[0]} failed: {exc}") from None

    def recv_line(self) -> str:
        proc = self._ensure()
        assert proc.stdout is not None
        fd = proc.stdout.fileno()
        while b"\n" not in self._buf:
            ready, _, _ = select.select([fd], [], [], self.timeout)
            if not ready:
                raise BridgeTimeout(
                    f"no response from {self.argv[0]} within {self.timeout}s"
                )
            chunk = os.read(fd, 65536)
            if not chunk:
                raise BridgeConnectionError(
                    f"{self.argv[0]} closed its stdout; buffered: "
                    f"{_excerpt(self._buf)!r}"
                )
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None


def encode_request(request: PredictionRequest) -> str:
    """Serialize a request as one wire line (start_frame stays harness-side)."""
    doc = {
        "type": "predict",
        "scenario_id": request.scenario_id,
        "horizon_frames": request.horizon_frames,
        "agents": [
            {
                "id": a.agent_id,
                "kind": a.kind.value,
                "history": [f.as_row() for f in a.history],
            }
            for a in request.agents
        ],
        "map": [
            {"id": p.id, "kind": p.kind.value, "points": [list(pt) for pt in p.points]}
            for p in request.map_polylines
        ],
    }
    return json.dumps(doc, allow_nan=False, separators=(",", ":"))


def decode_response(line: str, request: PredictionRequest) -> PredictionResponse:
    """Parse and validate one wire response line against the request."""
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BridgeProtocolError(
            f"response is not valid JSON ({exc}); payload: {_excerpt(line)!r}"
        ) from None
    if not isinstance(doc, dict) or "type" not in doc:
        raise BridgeProtocolError(f"malformed response: {_excerpt(line)!r}")
    if doc["type"] == "error":
        raise BridgeProtocolError(
            f"predictor reported an error: {doc.get('message', '<no message>')}"
        )
    if doc["type"] != "prediction":
        raise BridgeProtocolError(
            f"unexpected message type {doc['type']!r}; payload: {_excerpt(line)!r}"
        )
    entries = doc.get("agents")
    if not isinstance(entries, list):
        raise BridgeProtocolError(f"missing agents array: {_excerpt(line)!r}")
    by_id = {}
    for entry in entries:
        if not isinstance(entry, dict) or "id" not in entry:
            raise BridgeProtocolError(f"malformed agent entry: {_excerpt(line)!r}")
        by_id[entry["id"]] = entry
    modes = []
    for i, agent_req in enumerate(request.agents):
        entry = by_id.get(agent_req.agent_id)
        if entry is None:
            raise ContractViolation(
                f"response missing agent {agent_req.agent_id!r}"
            )
        raw_modes = entry.get("modes")
        if not isinstance(raw_modes, list) or len(raw_modes) != MODES_PER_AGENT:
            got = len(raw_modes) if isinstance(raw_modes, list) else "no"
            raise ContractViolation(
                f"agent {agent_req.agent_id!r}: {got} modes, "
                f"expected {MODES_PER_AGENT}"
            )
        trajs = []
        probs = []
        for m, raw in enumerate(raw_modes):
            try:
                probs.append(float(raw["probability"]))
                traj = tuple(
                    TrajectorySample(
                        cx=float(s[0]), cy=float(s[1]), vx=float(s[2]), vy=float(s[3])
                    )
                    for s in raw["trajectory"]
                )
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise BridgeProtocolError(
                    f"agent {agent_req.agent_id!r} mode {m}: {exc}; "
                    f"payload: {_excerpt(line)!r}"
                ) from None
            trajs.append(traj)
        modes.append(_mode_set(i, trajs, probs))
    if len(by_id) != len(request.agents):
        raise ContractViolation(
            f"response names {len(by_id)} agents, request had {len(request.agents)}"
        )
    return PredictionResponse(modes=tuple(modes))


class BridgePredictor:
    """Predictor backed by an external process over the line protocol.

    One in-flight request per transport; run several instances for parallel
    ensemble variants.
    """

    name = "bridge"

    def __init__(self, transport: TcpTransport | StdioTransport, name: str | None = None):
        self.transport = transport
        if name is not None:
            self.name = name

    def predict(self, request: PredictionRequest) -> PredictionResponse:
        self.transport.send_line(encode_request(request))
        line = self.transport.recv_line()
        return validate_response(request, decode_response(line, request))

    def close(self) -> None:
        self.transport.close()
