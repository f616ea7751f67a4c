"""Child-process forecaster adapters over line-delimited JSON.

External models (foundation models, deep baselines) attach as child
processes speaking NDJSON on stdin/stdout: one compact JSON object per
line. The handshake is hello -> capabilities; afterwards forecast and
train requests are pipelined and matched to responses by id, so
adapters may answer out of order. A misbehaving adapter never blocks
the run: every request resolves within the spec timeout plus one
second of grace, and a crashed or hung adapter is restarted at most
once per run before being excluded.

Wire field names are fixed: type, id, name, protocol, start_year,
values, horizon, tag, message, plus path/params on train requests and
supports_training/deterministic in the capabilities response.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import PROTOCOL_VERSION

__all__ = [
    "AdapterSpec",
    "WireMessage",
    "WireFormatError",
    "BridgeError",
    "AdapterProtocolError",
    "CapabilityError",
    "TrainingError",
    "AdapterUnavailableError",
    "ForecastOutcome",
    "AdapterHandle",
    "start_adapter",
    "load_registry",
    "GRACE_SECONDS",
]

log = logging.getLogger(__name__)

GRACE_SECONDS = 1.0

MESSAGE_TYPES = (
    "hello",
    "capabilities",
    "forecast",
    "forecast_result",
    "train",
    "train_result",
    "error",
)

# field name -> validator; the wire vocabulary is closed
_FIELD_CHECKS = {
    "type": lambda v: isinstance(v, str),
    "id": lambda v: isinstance(v, str),
    "name": lambda v: isinstance(v, str),
    "protocol": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "start_year": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "values": lambda v: isinstance(v, list)
    and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v),
    "horizon": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "tag": lambda v: isinstance(v, str),
    "message": lambda v: isinstance(v, str),
    "path": lambda v: isinstance(v, str),
    "params": lambda v: isinstance(v, dict),
    "supports_training": lambda v: isinstance(v, bool),
    "deterministic": lambda v: isinstance(v, bool),
}


class BridgeError(Exception):
    pass


class WireFormatError(BridgeError):
    pass


class AdapterProtocolError(BridgeError):
    pass


class CapabilityError(BridgeError):
    pass


class TrainingError(BridgeError):
    pass


class AdapterUnavailableError(BridgeError):
    pass


@dataclass(frozen=True)
class WireMessage:
    """One line of the protocol; unset fields are omitted on the wire."""

    type: str
    id: str | None = None
    name: str | None = None
    protocol: int | None = None
    start_year: int | None = None
    values: tuple[float, ...] | None = None
    horizon: int | None = None
    tag: str | None = None
    message: str | None = None
    path: str | None = None
    params: Mapping | None = None
    supports_training: bool | None = None
    deterministic: bool | None = None

    def __post_init__(self) -> None:
        if self.type not in MESSAGE_TYPES:
            raise WireFormatError(f"unknown message type {self.type!r}")
        if self.values is not None:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def to_json(self) -> str:
        out = {}
        for name in _FIELD_CHECKS:
            value = getattr(self, name)
            if value is None:
                continue
            if name == "values":
                value = list(value)
            elif name == "params":
                value = dict(value)
            out[name] = value
        return json.dumps(out, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "WireMessage":
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise WireFormatError(f"not valid JSON: {line.strip()!r}") from exc
        if not isinstance(raw, dict):
            raise WireFormatError(f"expected a JSON object, got: {line.strip()!r}")
        if "type" not in raw:
            raise WireFormatError(f"message without type: {line.strip()!r}")
        for key, value in raw.items():
            check = _FIELD_CHECKS.get(key)
            if check is None:
                raise WireFormatError(f"unknown field {key!r}")
            if not check(value):
                raise WireFormatError(f"field {key!r} has invalid value {value!r}")
        if raw["type"] not in MESSAGE_TYPES:
            raise WireFormatError(f"unknown message type {raw['type']!r}")
        kwargs = dict(raw)
        if "values" in kwargs:
            kwargs["values"] = tuple(float(v) for v in kwargs["values"])
        return cls(**kwargs)


@dataclass(frozen=True)
class AdapterSpec:
    """How to launch and talk to one adapter process."""

    name: str
    command: tuple[str, ...]
    env: Mapping[str, str] = field(default_factory=dict)
    timeout: float = 30.0
    batch_size: int = 64

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("adapter name must be nonempty")
        if not self.command:
            raise ValueError("adapter command must be nonempty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        object.__setattr__(self, "command", tuple(self.command))
        object.__setattr__(self, "env", dict(self.env))


@dataclass(frozen=True)
class ForecastOutcome:
    """Result for one request id: values on success, else an error."""

    id: str
    values: np.ndarray | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.values is not None


_EOF = object()


class _ChildProcess:
    """Subprocess plus a reader thread feeding a line queue."""

    def __init__(self, spec: AdapterSpec):
        env = dict(os.environ)
        env.update(spec.env)
        try:
            self.proc = subprocess.Popen(
                spec.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                env=env,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise AdapterProtocolError(
                f"adapter {spec.name!r}: launch failed: {exc}"
            ) from exc
        self.lines: queue.Queue = queue.Queue()
        self._stdout_thread = threading.Thread(target=self._pump_stdout, daemon=True)
        self._stdout_thread.start()
        self._stderr_thread = threading.Thread(target=self._pump_stderr, daemon=True)
        self._stderr_thread.start()
        self._spec = spec

    def _pump_stdout(self) -> None:
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(_EOF)

    def _pump_stderr(self) -> None:
        for line in self.proc.stderr:
            log.debug("adapter %s stderr: %s", self._spec.name, line.rstrip())

    def read_line(self, deadline: float):
        """Next stdout line, _EOF on child exit, None on deadline."""
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return None
        try:
            return self.lines.get(timeout=remaining)
        except queue.Empty:
            return None

    def write_line(self, line: str) -> bool:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
            return True
        except (BrokenPipeError, OSError, ValueError):
            return False

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:  # pragma: no cover - defensive
            pass


class AdapterHandle:
    """Bridge to one adapter; restarts the child at most once."""

    def __init__(self, spec: AdapterSpec):
        self.spec = spec
        self.adapter_name: str | None = None
        self.supports_training = False
        self.deterministic = False
        self._restarts_left = 1
        self._dead = False
        self._train_counter = 0
        self._write_lock = threading.Lock()
        self._child = self._launch_and_handshake()

    # -- lifecycle -----------------------------------------------------

    def _launch_and_handshake(self) -> _ChildProcess:
        child = _ChildProcess(self.spec)
        deadline = time.monotonic() + self.spec.timeout + GRACE_SECONDS
        try:
            line = child.read_line(deadline)
            if line is _EOF or line is None:
                raise AdapterProtocolError(
                    f"adapter {self.spec.name!r}: no hello before "
                    f"{'exit' if line is _EOF else 'timeout'}"
                )
            try:
                hello = WireMessage.from_json(line)
            except WireFormatError as exc:
                raise AdapterProtocolError(
                    f"adapter {self.spec.name!r}: bad handshake line: {exc}"
                ) from exc
            if hello.type != "hello" or not hello.name:
                raise AdapterProtocolError(
                    f"adapter {self.spec.name!r}: expected hello, got {hello.type!r}"
                )
            if hello.protocol != PROTOCOL_VERSION:
                raise AdapterProtocolError(
                    f"adapter {self.spec.name!r}: protocol {hello.protocol} "
                    f"!= {PROTOCOL_VERSION}"
                )
            if not child.write_line(WireMessage(type="capabilities").to_json()):
                raise AdapterProtocolError(
                    f"adapter {self.spec.name!r}: died during handshake"
                )
            line = child.read_line(deadline)
            if line is _EOF or line is None:
                raise AdapterProtocolError(
                    f"adapter {self.spec.name!r}: no capabilities response"
                )
            caps = WireMessage.from_json(line)
            if caps.type != "capabilities":
                raise AdapterProtocolError(
                    f"adapter {self.spec.name!r}: expected capabilities, "
                    f"got {caps.type!r}"
                )
        except BridgeError:
            child.kill()
            raise
        self.adapter_name = hello.name
        self.supports_training = bool(caps.supports_training)
        self.deterministic = bool(caps.deterministic)
        return child

    def _recover(self, reason: str) -> None:
        """Kill the child and restart once; afterwards mark dead."""
        self._child.kill()
        if self._restarts_left > 0:
            self._restarts_left -= 1
            log.warning("adapter %s: restarting after %s", self.spec.name, reason)
            try:
                self._child = self._launch_and_handshake()
                return
            except BridgeError as exc:
                log.warning("adapter %s: restart failed: %s", self.spec.name, exc)
        self._dead = True

    def close(self) -> None:
        self._child.kill()
        self._dead = True

    def __enter__(self) -> "AdapterHandle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- requests ------------------------------------------------------

    def _ensure_alive(self) -> None:
        if self._dead:
            raise AdapterUnavailableError(
                f"adapter {self.spec.name!r} is excluded after repeated failure"
            )

    def request_forecast(
        self, batch: Sequence[Mapping], tag: str | None = None
    ) -> list[ForecastOutcome]:
        """Pipelined forecasts for a batch of {id, start_year, values, horizon}.

        Responses match requests by id in any order. Individual ids fail
        on malformed responses; a timeout, crash, or junk line fails
        every outstanding id and consumes the restart budget.
        """
        self._ensure_alive()
        if len(batch) > self.spec.batch_size:
            raise ValueError(
                f"batch of {len(batch)} exceeds batch_size {self.spec.batch_size}"
            )
        requests = {}
        for item in batch:
            rid = str(item["id"])
            if rid in requests:
                raise ValueError(f"duplicate request id {rid!r}")
            requests[rid] = WireMessage(
                type="forecast",
                id=rid,
                start_year=int(item["start_year"]),
                values=tuple(float(v) for v in item["values"]),
                horizon=int(item["horizon"]),
                tag=tag,
            )

        with self._write_lock:
            for msg in requests.values():
                if not self._child.write_line(msg.to_json()):
                    break

        outcomes: dict[str, ForecastOutcome] = {}
        outstanding = set(requests)
        deadline = time.monotonic() + self.spec.timeout + GRACE_SECONDS
        failure: str | None = None
        while outstanding:
            line = self._child.read_line(deadline)
            if line is None:
                failure = "timeout"
                break
            if line is _EOF:
                failure = "adapter exited"
                break
            try:
                msg = WireMessage.from_json(line)
            except WireFormatError as exc:
                failure = f"protocol violation: {exc}"
                break
            if msg.id is None or msg.id not in outstanding:
                log.debug("adapter %s: stale message ignored", self.spec.name)
                continue
            if msg.type == "error":
                outcomes[msg.id] = ForecastOutcome(
                    msg.id, None, msg.message or "adapter error"
                )
            elif msg.type == "forecast_result":
                horizon = requests[msg.id].horizon
                vals = msg.values
                if vals is None or len(vals) != horizon or not np.all(
                    np.isfinite(vals)
                ):
                    outcomes[msg.id] = ForecastOutcome(
                        msg.id,
                        None,
                        f"malformed response: expected {horizon} finite values",
                    )
                else:
                    outcomes[msg.id] = ForecastOutcome(msg.id, np.array(vals))
            else:
                outcomes[msg.id] = ForecastOutcome(
                    msg.id, None, f"unexpected message type {msg.type!r}"
                )
            outstanding.discard(msg.id)

        if outstanding:
            for rid in outstanding:
                outcomes[rid] = ForecastOutcome(rid, None, failure or "timeout")
            self._recover(failure or "timeout")
        return [outcomes[str(item["id"])] for item in batch]

    def request_training(self, export_path: str | Path, params: Mapping | None = None) -> str:
        """Train/fine-tune on an exported training-set CSV; returns the model tag."""
        self._ensure_alive()
        if not self.supports_training:
            raise CapabilityError(
                f"adapter {self.spec.name!r} does not support training"
            )
        self._train_counter += 1
        rid = f"train-{self._train_counter}"
        msg = WireMessage(
            type="train",
            id=rid,
            path=str(export_path),
            params=dict(params) if params else None,
        )
        with self._write_lock:
            self._child.write_line(msg.to_json())
        deadline = time.monotonic() + self.spec.timeout + GRACE_SECONDS
        while True:
            line = self._child.read_line(deadline)
            if line is None or line is _EOF:
                reason = "timeout" if line is None else "adapter exited"
                self._recover(f"training {reason}")
                raise TrainingError(f"adapter {self.spec.name!r}: training {reason}")
            try:
                msg = WireMessage.from_json(line)
            except WireFormatError as exc:
                self._recover(f"protocol violation: {exc}")
                raise TrainingError(
                    f"adapter {self.spec.name!r}: protocol violation during training"
                ) from exc
            if msg.id != rid:
                continue
            if msg.type == "train_result" and msg.tag:
                return msg.tag
            raise TrainingError(
                f"adapter {self.spec.name!r}: training failed: "
                f"{msg.message or msg.type}"
            )


def start_adapter(spec: AdapterSpec) -> AdapterHandle:
    """Launch the adapter child process and complete the handshake."""
    return AdapterHandle(spec)


def load_registry(path: str | Path) -> list[AdapterSpec]:
    """Read adapter specs from a JSON registry file.

    The file holds a list of objects with keys name, command (argv
    list), and optional env, timeout, batch_size. Names must be unique.
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError("adapter registry must be a JSON list")
    specs = []
    seen = set()
    for entry in raw:
        spec = AdapterSpec(
            name=entry["name"],
            command=tuple(entry["command"]),
            env=entry.get("env", {}),
            timeout=float(entry.get("timeout", 30.0)),
            batch_size=int(entry.get("batch_size", 64)),
        )
        if spec.name in seen:
            raise ValueError(f"duplicate adapter name {spec.name!r} in registry")
        seen.add(spec.name)
        specs.append(spec)
    return specs
