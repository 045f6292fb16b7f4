import json
import statistics
import sys
import textwrap
import time

import numpy as np
import pytest

from depthbench import bench
from depthbench.dataset import RgbImage

HELLO = 'print("HELLO depthbench-runner/1", flush=True)'


@pytest.fixture
def image():
    return RgbImage(np.zeros((6, 8, 3), dtype=np.uint8))


def write_runner(tmp_path, body, name="runner.py"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return [sys.executable, str(path)]


def fixed_delay_runner(tmp_path, delay_s=0.05):
    return write_runner(
        tmp_path,
        f"""
        import sys, time
        {HELLO}
        for line in sys.stdin:
            time.sleep({delay_s})
            print("OK", flush=True)
        """,
    )


def test_fixed_delay_median(tmp_path, image):
    runner = bench.spawn_runner(fixed_delay_runner(tmp_path))
    with runner:
        report = bench.time_model(runner, image, warmup=3, runs=10)
    assert report.warmup_runs == 3
    assert report.measured_runs == 10
    assert len(report.per_run_ms) == 10
    assert 50.0 <= report.median_ms <= 60.0
    # timing never under-reports the constructed minimum latency
    assert min(report.per_run_ms) >= 50.0


def test_warmup_runs_never_measured(tmp_path, image):
    runner_cmd = write_runner(
        tmp_path,
        f"""
        import sys, time
        {HELLO}
        n = 0
        for line in sys.stdin:
            time.sleep(0.2 if n < 2 else 0.01)
            n += 1
            print("OK", flush=True)
        """,
    )
    runner = bench.spawn_runner(runner_cmd)
    with runner:
        report = bench.time_model(runner, image, warmup=2, runs=5)
    assert report.measured_runs == 5
    assert all(ms < 100.0 for ms in report.per_run_ms)


def test_single_run_statistics(tmp_path, image):
    runner = bench.spawn_runner(fixed_delay_runner(tmp_path, 0.01))
    with runner:
        report = bench.time_model(runner, image, warmup=0, runs=1)
    assert report.median_ms == report.mean_ms == report.per_run_ms[0]
    assert report.stddev_ms == 0.0


def test_statistics_recomputable(tmp_path, image):
    runner = bench.spawn_runner(fixed_delay_runner(tmp_path, 0.005))
    with runner:
        report = bench.time_model(runner, image, warmup=1, runs=6)
    runs = list(report.per_run_ms)
    assert report.median_ms == statistics.median(runs)
    assert report.mean_ms == statistics.fmean(runs)
    assert report.stddev_ms == statistics.pstdev(runs)


def test_crashing_runner_captures_stderr(tmp_path, image):
    runner_cmd = write_runner(
        tmp_path,
        f"""
        import sys
        {HELLO}
        line = sys.stdin.readline()
        print("the model exploded", file=sys.stderr, flush=True)
        sys.exit(3)
        """,
    )
    runner = bench.spawn_runner(runner_cmd)
    with runner, pytest.raises(bench.RunnerCrashedError) as info:
        bench.time_model(runner, image, warmup=0, runs=2)
    assert "the model exploded" in info.value.stderr


def test_bad_handshake(tmp_path):
    runner_cmd = write_runner(
        tmp_path,
        """
        import sys, time
        print("HELLO wrong-protocol/9", flush=True)
        time.sleep(5)
        """,
    )
    with pytest.raises(bench.BadHandshakeError):
        bench.spawn_runner(runner_cmd)


def test_spawn_failure():
    with pytest.raises(bench.SpawnFailureError):
        bench.spawn_runner(["/no/such/binary-anywhere"])


def test_handshake_timeout(tmp_path, monkeypatch):
    monkeypatch.setattr(bench, "HANDSHAKE_TIMEOUT_S", 0.3)
    runner_cmd = write_runner(
        tmp_path,
        """
        import time
        time.sleep(5)
        """,
    )
    start = time.perf_counter()
    with pytest.raises(bench.HandshakeTimeoutError):
        bench.spawn_runner(runner_cmd)
    assert time.perf_counter() - start < 3.0


def test_err_reply(tmp_path, image):
    runner_cmd = write_runner(
        tmp_path,
        f"""
        import sys
        {HELLO}
        for line in sys.stdin:
            print("ERR bad input tensor", flush=True)
        """,
    )
    runner = bench.spawn_runner(runner_cmd)
    with runner, pytest.raises(bench.InferenceFailedError, match="bad input tensor"):
        bench.time_model(runner, image, warmup=0, runs=1)


def test_inference_timeout(tmp_path, image):
    runner = bench.spawn_runner(fixed_delay_runner(tmp_path, 2.0))
    with runner, pytest.raises(bench.InferenceTimeoutError):
        bench.time_model(runner, image, warmup=0, runs=1, timeout_s=0.2)


def test_parameter_validation(tmp_path, image):
    runner = bench.InProcessRunner(lambda i, o: None)
    with pytest.raises(ValueError):
        bench.time_model(runner, image, warmup=-1, runs=1)
    with pytest.raises(ValueError):
        bench.time_model(runner, image, warmup=0, runs=0)


def test_in_process_runner(image):
    calls = []
    runner = bench.InProcessRunner(lambda i, o: calls.append((i, o)) or time.sleep(0.01))
    report = bench.time_model(runner, image, warmup=1, runs=3)
    assert runner.kind == "in_process"
    assert len(calls) == 4
    assert report.measured_runs == 3
    assert report.median_ms >= 10.0


def test_report_json(tmp_path, image):
    runner = bench.InProcessRunner(lambda i, o: None)
    report = bench.time_model(runner, image, warmup=0, runs=2)
    payload = json.loads(report.to_json())
    assert payload["measured_runs"] == 2
    assert len(payload["per_run_ms"]) == 2
    assert payload["median_ms"] == report.median_ms
