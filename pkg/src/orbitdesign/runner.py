"""Execute the strategy from a :class:`RunConfig` and write the run directory.

Layout of a run directory::

    config.cfg          snapshot of the configuration text
    trace.jsonl         strategy trace, streamed while the run progresses
    report.json         verification report, metrics and exit status
    desired.csv         desired curve
    embedding.csv       embedding optimum (with the u_emb column)
    iterate_NN.csv      every trajectory produced by the final-state stage
    final.csv           final optimum
    plot/panel_*.csv    per-panel plot data
    figures/*.png       figures rendered from the panel data
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .config import RunConfig
from .designer import DesignProblem, DesignResult, StrategyTrace, design_orbit, embedding_input_norm
from .errors import OrbitDesignError, SolverError
from .export import emit_plot_data, export_trajectory
from .integration import Curve

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_VERIFICATION = 4
TAIL_FRACTION = 0.1


@dataclass
class RunOutcome:
    exit_code: int
    out_dir: Path
    phase: Optional[str] = None  # phase that failed, if any
    message: str = ""
    metrics: Dict[str, float] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)
    result: Optional[DesignResult] = None


def tail_max_abs(values, fraction: float = TAIL_FRACTION) -> float:
    """Largest magnitude over the last ``fraction`` of the nodes."""
    values = np.asarray(values)
    start = int(np.floor((1.0 - fraction) * (len(values) - 1)))
    return float(np.max(np.abs(values[start:])))


def run_metrics(prob: DesignProblem, res: DesignResult, seconds: float) -> Dict[str, float]:
    n_act = prob.sys.model.n_act
    return {
        "seconds": round(seconds, 3),
        "embedding_input_rms": embedding_input_norm(res.embedding, n_act),
        "embedding_terminal_error": prob.normalized_error(res.embedding.x[-1], prob.xf),
        "final_terminal_error": prob.normalized_error(res.final.x[-1], prob.xf),
        "u2_final": float(res.final.u[-1, 1]),
        "u2_tail_max_abs": tail_max_abs(res.final.u[:, 1]),
        "step3_iterates": len(res.iterates),
    }


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def run_strategy(cfg: RunConfig, out_dir=None, max_minutes: Optional[float] = None,
                 figures: Optional[bool] = None) -> RunOutcome:
    """Run all stages, write the artifacts and map the outcome to an exit code."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "config.cfg"]
    files[0].write_text(cfg.source or "")
    figures = cfg.figures if figures is None else figures
    deadline = None if max_minutes is None else time.monotonic() + 60.0 * max_minutes

    try:
        prob = cfg.design_problem()
    except (ValueError, OrbitDesignError) as exc:
        msg = f"invalid problem: {exc}"
        files.append(_write_json(out / "report.json", {"exit_code": EXIT_VALIDATION, "failed_phase": "setup",
                                                         "error": msg}))
        return RunOutcome(EXIT_VALIDATION, out, "setup", msg, files=files)

    t0 = time.perf_counter()
    with (out / "trace.jsonl").open("w") as sink:
        files.append(out / "trace.jsonl")
        trace = StrategyTrace(sink=sink, deadline=deadline)
        try:
            res = design_orbit(prob, cfg.settings, trace)
        except (SolverError, OrbitDesignError) as exc:
            phase = trace.records[-1].get("phase", "setup") if trace.records else "setup"
            traj = getattr(exc, "trajectory", None)
            if isinstance(traj, Curve) and traj.n_state == 6:
                files.append(export_trajectory(traj, out / "last_iterate.csv"))
            msg = f"{type(exc).__name__} during {phase}: {exc}"
            files.append(_write_json(out / "report.json", {"exit_code": EXIT_SOLVER, "failed_phase": phase,
                                                             "error": msg, "config": cfg.summary()}))
            return RunOutcome(EXIT_SOLVER, out, phase, msg, files=files)
    seconds = time.perf_counter() - t0

    grid = prob.grid
    desired = Curve(grid, res.desired.x, res.desired.u)
    files.append(export_trajectory(desired, out / "desired.csv"))
    files.append(export_trajectory(res.embedding, out / "embedding.csv"))
    labels = [f"iterate_{k:02d}" for k in range(len(res.iterates))]
    for label, it in zip(labels, res.iterates):
        files.append(export_trajectory(it, out / f"{label}.csv"))
    files.append(export_trajectory(res.final, out / "final.csv"))
    panels = emit_plot_data(out / "plot", desired, res.embedding, res.iterates, res.final, labels)
    files.extend(panels.values())
    if figures:
        from .plotting import render_figures  # matplotlib is only needed here

        files.extend(render_figures(panels, out / "figures", title=out.name))

    metrics = run_metrics(prob, res, seconds)
    passed = res.report.passed
    code = EXIT_OK if passed else EXIT_VERIFICATION
    phase = None if passed else "verification"
    msg = "verification passed" if passed else "verification failed: " + ", ".join(res.report.failures())
    files.append(_write_json(out / "report.json", {
        "exit_code": code,
        "failed_phase": phase,
        "verification": res.report.to_dict(),
        "metrics": metrics,
        "x0": prob.x0.tolist(),
        "xf": prob.xf.tolist(),
        "x_T": np.asarray(res.x_T).tolist(),
        "config": cfg.summary(),
    }))
    return RunOutcome(code, out, phase, msg, metrics, files, res)
