import json
import os
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from orbitdesign import cli  # noqa: E402
from orbitdesign.designer import StrategyTrace  # noqa: E402


class GaitRun:
    """Artifacts of one end-to-end CLI run."""

    def __init__(self, out: Path, exit_code: int, seconds: float):
        self.out = out
        self.exit_code = exit_code
        self.seconds = seconds  # wall clock of the whole CLI invocation
        self.report = json.loads((out / "report.json").read_text())
        self.trace = StrategyTrace.from_jsonl((out / "trace.jsonl").read_text())

    @property
    def metrics(self):
        return self.report.get("metrics", {})


def _run(scenario, tmp_path_factory):
    # ORBITDESIGN_TEST_RUNS=<dir> reuses <dir>/<scenario> from an earlier run
    reuse = os.environ.get("ORBITDESIGN_TEST_RUNS")
    if reuse and (Path(reuse) / scenario / "report.json").exists():
        out = Path(reuse) / scenario
        report = json.loads((out / "report.json").read_text())
        return GaitRun(out, report["exit_code"], report.get("metrics", {}).get("seconds", float("nan")))
    out = tmp_path_factory.mktemp("runs") / scenario
    t0 = time.perf_counter()
    code = cli.main(["design", "--scenario", scenario, "--out", str(out), "--max-minutes", "10"])
    return GaitRun(out, code, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def gait1_run(tmp_path_factory):
    return _run("gait1", tmp_path_factory)


@pytest.fixture(scope="session")
def gait2_run(tmp_path_factory):
    return _run("gait2", tmp_path_factory)
