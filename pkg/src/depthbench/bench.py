"""Latency measurement harness with a fixed warmup/repetition protocol.

A runner is a persistent child process speaking a line protocol over its
standard streams: it announces ``HELLO depthbench-runner/1`` once at startup
(model loading happens before that, so load time is never measured), then
answers ``INFER <input_png> <output_png>`` requests with ``OK`` or
``ERR <message>``. Each measured run is the wall-clock time from dispatching
the request to receiving the acknowledgment; the median over the measured
runs is the headline latency. Warmup runs are executed identically but never
recorded. Paths in the protocol are whitespace-free (the harness uses its own
temporary directory).
"""

from __future__ import annotations

import json
import queue
import statistics
import subprocess
import tempfile
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from .dataset import RgbImage, save_rgb_png

HANDSHAKE = "HELLO depthbench-runner/1"
HANDSHAKE_TIMEOUT_S = 10.0
DEFAULT_INFERENCE_TIMEOUT_S = 120.0
DEFAULT_WARMUP = 3
DEFAULT_RUNS = 10

_measurement_lock = threading.Lock()  # one timed runner at a time


class SpawnFailureError(RuntimeError):
    """Runner executable could not be started."""


class HandshakeTimeoutError(RuntimeError):
    """Runner produced no handshake within the allowed window."""


class BadHandshakeError(RuntimeError):
    """Runner's first output line was not the expected handshake."""


class RunnerCrashedError(RuntimeError):
    """Runner exited mid-protocol; carries its captured stderr."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message if not stderr else f"{message}\n--- runner stderr ---\n{stderr}")
        self.stderr = stderr


class InferenceTimeoutError(RuntimeError):
    """A single inference exceeded the per-run timeout."""


class InferenceFailedError(RuntimeError):
    """Runner answered ERR for a request."""


@dataclass(frozen=True)
class TimingReport:
    warmup_runs: int
    measured_runs: int
    per_run_ms: tuple[float, ...]
    median_ms: float
    mean_ms: float
    stddev_ms: float

    @classmethod
    def from_runs(cls, warmup_runs: int, per_run_ms: list[float]) -> "TimingReport":
        return cls(
            warmup_runs=warmup_runs,
            measured_runs=len(per_run_ms),
            per_run_ms=tuple(per_run_ms),
            median_ms=statistics.median(per_run_ms),
            mean_ms=statistics.fmean(per_run_ms),
            stddev_ms=statistics.pstdev(per_run_ms),
        )

    def to_json(self) -> str:
        payload = asdict(self)
        payload["per_run_ms"] = list(self.per_run_ms)
        return json.dumps(payload, indent=2)


class InProcessRunner:
    """Times a Python callable (input_path, output_path) without a child process."""

    kind = "in_process"

    def __init__(self, infer_fn):
        self._infer_fn = infer_fn

    def infer(self, input_path: str, output_path: str, timeout_s: float) -> float:
        start = time.perf_counter()
        self._infer_fn(input_path, output_path)
        return (time.perf_counter() - start) * 1000.0

    def close(self) -> None:
        pass


class ExternalRunner:
    """Child process speaking the runner wire protocol."""

    kind = "external"

    def __init__(self, process: subprocess.Popen):
        self._process = process
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._stderr_chunks: list[str] = []
        self._eof = False
        self._stdout_thread = threading.Thread(target=self._pump_stdout, daemon=True)
        self._stderr_thread = threading.Thread(target=self._pump_stderr, daemon=True)
        self._stdout_thread.start()
        self._stderr_thread.start()

    def _pump_stdout(self) -> None:
        try:
            for line in self._process.stdout:
                self._lines.put(line.rstrip("\r\n"))
        finally:
            self._lines.put(None)

    def _pump_stderr(self) -> None:
        for line in self._process.stderr:
            self._stderr_chunks.append(line)

    def stderr_text(self) -> str:
        return "".join(self._stderr_chunks)

    def _read_line(self, timeout_s: float) -> str | None:
        if self._eof:
            return None
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            raise TimeoutError
        if line is None:
            self._eof = True
        return line

    def handshake(self) -> None:
        try:
            line = self._read_line(HANDSHAKE_TIMEOUT_S)
        except TimeoutError:
            self.close()
            raise HandshakeTimeoutError(
                f"no handshake within {HANDSHAKE_TIMEOUT_S:.0f} s"
            ) from None
        if line is None:
            stderr = self._drain_stderr()
            raise RunnerCrashedError("runner exited before the handshake", stderr)
        if line != HANDSHAKE:
            self.close()
            raise BadHandshakeError(f"expected {HANDSHAKE!r}, got {line!r}")

    def infer(self, input_path: str, output_path: str, timeout_s: float) -> float:
        start = time.perf_counter()
        try:
            self._process.stdin.write(f"INFER {input_path} {output_path}\n")
            self._process.stdin.flush()
        except (BrokenPipeError, OSError):
            raise RunnerCrashedError("runner pipe closed", self._drain_stderr()) from None
        try:
            line = self._read_line(timeout_s)
        except TimeoutError:
            self.close()
            raise InferenceTimeoutError(f"no reply within {timeout_s:.0f} s") from None
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        if line is None:
            raise RunnerCrashedError("runner exited mid-run", self._drain_stderr())
        if line == "OK":
            return elapsed_ms
        if line.startswith("ERR"):
            raise InferenceFailedError(line[3:].strip() or "runner reported an error")
        raise RunnerCrashedError(f"unexpected reply {line!r}", self._drain_stderr())

    def _drain_stderr(self) -> str:
        # give the stderr pump a moment to collect the child's last words
        if self._process.poll() is None:
            try:
                self._process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass
        self._stderr_thread.join(timeout=1)
        return self.stderr_text()

    def close(self) -> None:
        if self._process.poll() is None:
            try:
                self._process.stdin.close()
            except OSError:
                pass
            try:
                self._process.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def spawn_runner(command: list[str], workdir=None) -> ExternalRunner:
    """Start a runner process and wait for its handshake.

    Model load happens before the handshake, so it is excluded from every
    measurement. Raises SpawnFailureError, HandshakeTimeoutError or
    BadHandshakeError.
    """
    try:
        process = subprocess.Popen(
            command,
            cwd=workdir,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
    except OSError as exc:
        raise SpawnFailureError(f"cannot start {command!r}: {exc}") from exc
    runner = ExternalRunner(process)
    runner.handshake()
    return runner


def time_model(
    runner,
    input_image: RgbImage,
    warmup: int = DEFAULT_WARMUP,
    runs: int = DEFAULT_RUNS,
    timeout_s: float = DEFAULT_INFERENCE_TIMEOUT_S,
) -> TimingReport:
    """Execute ``warmup`` unmeasured then ``runs`` measured inferences.

    Per-run wall clock covers request dispatch to completion acknowledgment.
    Warmup timings are discarded and never appear in the report.
    """
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    with _measurement_lock, tempfile.TemporaryDirectory(prefix="depthbench-") as tmp:
        input_path = str(Path(tmp) / "input.png")
        output_path = str(Path(tmp) / "output.png")
        save_rgb_png(input_path, input_image)
        measured: list[float] = []
        for i in range(warmup + runs):
            elapsed_ms = runner.infer(input_path, output_path, timeout_s)
            if i >= warmup:
                measured.append(elapsed_ms)
    return TimingReport.from_runs(warmup, measured)
