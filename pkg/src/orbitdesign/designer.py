"""Periodic-orbit design by embedding, penalty continuation and a Newton
search on the terminal target.

The strategy runs in three stages:

1. pick ``x0``, get ``x_f`` from the inverse jump map and build a desired
   curve joining them;
2. track it with the fully actuated embedding while doubling the penalty on
   the fictitious input until that input is negligible;
3. drop the fictitious input and enforce ``x(T) = x_f`` by raising the
   terminal penalty and then moving the target ``x_T`` with Newton steps on
   ``beta(x_T) = x_f``.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import IO, List, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import HybridSystem, guard_distance, inverse_jump_map, jump_map
from .errors import (ContinuationStallError, LineSearchError, MaxIterationsError, SingularSensitivityError,
                     SolverError, TimeBudgetError)
from .integration import Curve, TimeGrid, Trajectory, defect, linearize
from .pronto import CostSpec, ProntoOptions, TrackingProblem, _gain_for, eval_cost, project, pronto_solve

log = logging.getLogger(__name__)

ANGLE_SCALE = np.pi / 4
VELOCITY_SCALE = 2.0
DEFECT_TOL = 1e-6
DBETA_COND_MAX = 1e10
DBETA_REL_ACC = 1e-4


def default_state_scale(dof: int) -> np.ndarray:
    return np.concatenate([np.full(dof, ANGLE_SCALE), np.full(dof, VELOCITY_SCALE)])


@dataclass
class ContinuationSchedule:
    rho0: float = 1.0
    factor: float = 2.0
    max_steps: int = 12

    def __post_init__(self):
        if not self.rho0 > 0 or not self.factor > 1:
            raise ValueError("continuation needs rho0 > 0 and factor > 1")


@dataclass
class DesignProblem:
    """Inputs of the strategy.

    ``u_d_mode`` is ``"inverse-dynamics"`` (track the actuated part of the
    inverse-dynamics input of the desired curve) or ``"zero"``.
    ``waypoints`` optionally adds interior ``(t, q)`` knots to the desired
    spline.
    """

    sys: HybridSystem
    x0: np.ndarray
    grid: TimeGrid
    Q: np.ndarray
    R: np.ndarray
    u_d_mode: str = "inverse-dynamics"
    waypoints: Optional[list] = None
    state_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.u_d_mode not in ("inverse-dynamics", "zero"):
            raise ValueError(f"unknown u_d mode {self.u_d_mode!r}")
        if self.state_scale is None:
            self.state_scale = default_state_scale(self.sys.model.dof)
        _, self.xf = compute_boundary_states(self.sys, self.x0)
        if not np.all(np.isfinite(self.xf)):
            raise ValueError("final state from the inverse jump map is not finite")

    @property
    def T(self) -> float:
        return self.grid.T

    def normalized_error(self, x, ref) -> float:
        return float(np.max(np.abs((np.asarray(x) - ref) / self.state_scale)))


@dataclass
class StrategyTrace:
    """Line-delimited record of every strategy decision.

    ``sink`` (a text file) receives each record as it is appended so a failed
    run still leaves its trace behind.  Past ``deadline`` (a
    ``time.monotonic`` value) the next append raises :class:`TimeBudgetError`.
    """

    records: List[dict] = field(default_factory=list)
    sink: Optional[IO[str]] = None
    deadline: Optional[float] = None

    def append(self, **record):
        record = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in record.items()}
        self.records.append(record)
        line = json.dumps(record)
        log.info("%s", line)
        if self.sink is not None:
            self.sink.write(line + "\n")
            self.sink.flush()
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise TimeBudgetError(f"time budget exhausted during phase {record.get('phase')!r}")

    def phase(self, name: str) -> List[dict]:
        return [r for r in self.records if r.get("phase") == name]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "StrategyTrace":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])


@dataclass
class DesiredCurve:
    x: np.ndarray
    qdd: np.ndarray
    u_e: np.ndarray  # inverse-dynamics input of the embedded system
    u: np.ndarray  # desired actuated input


@dataclass
class VerificationReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def failures(self) -> List[str]:
        return [name for name, c in self.checks.items() if not c["passed"]]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


@dataclass
class DesignResult:
    desired: DesiredCurve
    embedding: Trajectory
    iterates: List[Trajectory]
    final: Trajectory
    x_T: np.ndarray
    trace: StrategyTrace
    report: VerificationReport


def compute_boundary_states(sys: HybridSystem, x0):
    x0 = np.asarray(x0, dtype=float)
    return x0, inverse_jump_map(sys, x0)


def build_desired_curve(prob: DesignProblem):
    """Per-joint clamped cubic spline from ``q(x0)`` to ``q(x_f)``.

    Without waypoints this is the cubic Hermite interpolant of the four
    boundary data.  Returns the state samples and the exact accelerations.
    """
    nq = prob.sys.model.dof
    t = prob.grid.t
    knots_t = [0.0]
    knots_q = [prob.x0[:nq]]
    for wp in prob.waypoints or []:
        knots_t.append(float(wp[0]))
        knots_q.append(np.asarray(wp[1:], dtype=float))
    knots_t.append(prob.T)
    knots_q.append(prob.xf[:nq])
    spline = CubicSpline(knots_t, np.vstack(knots_q), bc_type=((1, prob.x0[nq:]), (1, prob.xf[nq:])))
    x_d = np.hstack([spline(t), spline(t, 1)])
    # pin the end nodes to the boundary data exactly
    x_d[0] = prob.x0
    x_d[-1] = prob.xf
    return x_d, spline(t, 2)


def desired_embedding_input(sys: HybridSystem, x_d, qdd):
    """Inverse dynamics ``Y(q)^-1 (M q'' + C + G)`` at every node."""
    nq = sys.model.dof
    return sys.model.inverse_dynamics(x_d[:, :nq], x_d[:, nq:], qdd)


def make_desired(prob: DesignProblem) -> DesiredCurve:
    x_d, qdd = build_desired_curve(prob)
    u_e = desired_embedding_input(prob.sys, x_d, qdd)
    m = prob.sys.model.n_act
    u = u_e[:, :m].copy() if prob.u_d_mode == "inverse-dynamics" else np.zeros((len(x_d), m))
    return DesiredCurve(x_d, qdd, u_e, u)


def embedding_input_norm(traj: Curve, n_act: int) -> float:
    """RMS of the embedding inputs over the horizon."""
    ue = traj.u[:, n_act:]
    sq = np.sum(ue**2, axis=1)
    h, T = traj.grid.h, traj.grid.T
    return float(np.sqrt(h * (sq.sum() - 0.5 * (sq[0] + sq[-1])) / T))


def _solve(problem, xi, opts):
    try:
        return pronto_solve(problem, xi, opts)
    except MaxIterationsError as exc:
        log.warning("PRONTO hit the iteration cap; continuing from the last iterate")
        from .pronto import ProntoResult

        return ProntoResult(exc.trajectory, eval_cost(problem.cost, exc.trajectory), False, [])


def _initial_projection(problem: TrackingProblem, curve: Curve, opts: ProntoOptions) -> Trajectory:
    A, B = linearize(problem.dynamics, curve)
    return project(problem, curve, _gain_for(problem, A, B, opts))


def step2_embedding_continuation(prob: DesignProblem, sched: ContinuationSchedule, rho_f: float, eps_emb: float,
                                 desired: Optional[DesiredCurve] = None, opts: Optional[ProntoOptions] = None,
                                 trace: Optional[StrategyTrace] = None) -> Trajectory:
    """Double the embedding penalty until the fictitious input is below ``eps_emb``."""
    opts = opts or ProntoOptions()
    trace = trace if trace is not None else StrategyTrace()
    desired = desired or make_desired(prob)
    m = prob.sys.model.n_act
    p = prob.sys.model.n_emb
    grid = prob.grid
    spec = CostSpec(prob.Q, prob.R, Curve(grid, desired.x, desired.u), rho_emb=sched.rho0, n_emb=p,
                    rho_f=rho_f, x_T=prob.xf)
    problem = TrackingProblem(prob.sys.vector_field(embedded=True), prob.x0, spec)
    xi = _initial_projection(problem, Curve(grid, desired.x, desired.u_e), opts)
    rho = sched.rho0
    for step in range(sched.max_steps + 1):
        problem.cost = spec.replace(rho_emb=rho)
        t0 = time.perf_counter()
        res = _solve(problem, xi, opts)
        xi = res.trajectory
        norm = embedding_input_norm(xi, m)
        trace.append(phase="embedding", step=step, rho_emb=rho, rho_f=rho_f, u_emb_norm=norm,
                     terminal_error=prob.normalized_error(xi.x[-1], prob.xf), x_T=prob.xf,
                     cost=res.cost, pronto_iters=res.iterations, converged=res.converged,
                     seconds=round(time.perf_counter() - t0, 3))
        if norm < eps_emb:
            return xi
        rho *= sched.factor
    raise ContinuationStallError(f"embedding input still {norm:.3g} after {sched.max_steps} increases", xi)


def _solve_tight(problem, xi, inner) -> Trajectory:
    try:
        return _solve(problem, xi, inner).trajectory
    except LineSearchError as exc:
        # no measurable decrease left: the last iterate is as accurate as the cost allows
        return exc.trajectory


def dbeta_options(opts: ProntoOptions, step: float, scale) -> ProntoOptions:
    """Inner-solve settings for sensitivity columns.

    A column is good to ``DBETA_REL_ACC`` once the remaining terminal
    correction is that fraction of the finite-difference step.
    """
    return ProntoOptions(**{**opts.__dict__, "grad_tol": 0.0, "abs_tol": 0.0, "max_iter": 8,
                            "step_tol": DBETA_REL_ACC * step * float(np.min(scale))})


def dbeta(problem: TrackingProblem, x_T, xi_warm: Trajectory, rho_f: float, *, scale=None, step: float = 1e-4,
          beta0=None, opts: Optional[ProntoOptions] = None):
    """Forward-difference sensitivity of the optimal terminal state to the target.

    Column ``j`` perturbs ``x_T`` by ``step * scale[j]``; each evaluation is a
    PRONTO solve warm-started from ``xi_warm``.  If a perturbed solve fails
    the step is reduced once.
    """
    x_T = np.asarray(x_T, dtype=float)
    n = x_T.size
    scale = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
    inner = dbeta_options(opts or ProntoOptions(), step, scale)

    def beta(target):
        prob_j = TrackingProblem(problem.dynamics, problem.x0, problem.cost.replace(rho_f=rho_f, x_T=target),
                                 problem.divergence_bound)
        return _solve_tight(prob_j, xi_warm, inner).x[-1]

    base = beta(x_T) if beta0 is None else np.asarray(beta0, dtype=float)
    D = np.empty((n, n))
    for j in range(n):
        delta = step * scale[j]
        for attempt in range(2):
            try:
                e = np.zeros(n)
                e[j] = delta
                D[:, j] = (beta(x_T + e) - base) / delta
                break
            except SolverError:
                if attempt:
                    raise
                delta *= 0.5
    return D


def step3_enforce_final_state(prob: DesignProblem, xi_e: Trajectory, sched: ContinuationSchedule,
                              delta_f_tol: float, eps_f_tol: float, desired: Optional[DesiredCurve] = None,
                              opts: Optional[ProntoOptions] = None, trace: Optional[StrategyTrace] = None,
                              max_newton: int = 10, dbeta_step: float = 1e-4, iterates: Optional[list] = None):
    """Terminal-penalty continuation plus Newton updates of the target state.

    Returns ``(trajectory, x_T)``.  The branch follows the penalty loop
    literally: a large terminal error doubles ``rho_f``, otherwise ``x_T``
    takes a Newton step.
    """
    opts = opts or ProntoOptions()
    trace = trace if trace is not None else StrategyTrace()
    desired = desired or make_desired(prob)
    m = prob.sys.model.n_act
    grid = prob.grid
    rho_f = sched.rho0
    x_T = prob.xf.copy()
    spec = CostSpec(prob.Q, prob.R, Curve(grid, desired.x, desired.u), rho_f=rho_f, x_T=x_T)
    problem = TrackingProblem(prob.sys.vector_field(embedded=False), prob.x0, spec)
    xi = _initial_projection(problem, Curve(grid, xi_e.x, xi_e.u[:, :m]), opts)
    trace.append(phase="reprojection", cost=eval_cost(spec, xi),
                 terminal_error=prob.normalized_error(xi.x[-1], prob.xf))
    doublings = newton_steps = 0
    for i in range(sched.max_steps + max_newton + 1):
        problem.cost = spec.replace(rho_f=rho_f, x_T=x_T)
        t0 = time.perf_counter()
        res = _solve(problem, xi, opts)
        xi = res.trajectory
        if iterates is not None:
            iterates.append(xi)
        err = prob.normalized_error(xi.x[-1], prob.xf)
        record = dict(phase="rho_f", iter=i, rho_f=rho_f, x_T=x_T.copy(), terminal_error=err, cost=res.cost,
                      pronto_iters=res.iterations, converged=res.converged)
        if err < eps_f_tol:
            trace.append(action="exit", seconds=round(time.perf_counter() - t0, 3), **record)
            return xi, x_T
        if err > delta_f_tol:
            if doublings >= sched.max_steps:
                trace.append(action="stall", **record)
                raise ContinuationStallError(f"terminal error {err:.3g} after {doublings} increases of rho_f", xi)
            rho_f *= sched.factor
            doublings += 1
            trace.append(action="increase_rho_f", seconds=round(time.perf_counter() - t0, 3), **record)
        else:
            if newton_steps >= max_newton:
                trace.append(action="stall", **record)
                raise ContinuationStallError(f"terminal error {err:.3g} after {newton_steps} Newton steps", xi)
            record["phase"] = "target_newton"
            # refine beta(x_T) to the accuracy of the perturbed solves
            xi = _solve_tight(problem, xi, dbeta_options(opts, dbeta_step, prob.state_scale))
            D = dbeta(problem, x_T, xi, rho_f, scale=prob.state_scale, step=dbeta_step, beta0=xi.x[-1], opts=opts)
            cond = np.linalg.cond(D)
            if not np.isfinite(cond) or cond > DBETA_COND_MAX:
                trace.append(action="singular_dbeta", dbeta_cond=float(cond), **record)
                raise SingularSensitivityError(f"terminal-state sensitivity is singular (cond={cond:.3g})", xi)
            x_T = x_T + np.linalg.solve(D, prob.xf - xi.x[-1])
            newton_steps += 1
            trace.append(action="update_x_T", dbeta_cond=float(cond), seconds=round(time.perf_counter() - t0, 3),
                         **record)
    raise ContinuationStallError("step 3 exhausted its iteration budget", xi)


def verify_periodic_orbit(sys: HybridSystem, traj: Curve, x0, xf, eps_f_tol: float, scale=None,
                          defect_tol: float = DEFECT_TOL) -> VerificationReport:
    """Structured pass/fail checks that ``traj`` closes a one-jump orbit."""
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    scale = default_state_scale(sys.model.dof) if scale is None else np.asarray(scale)

    def norm(v):
        return float(np.max(np.abs(v / scale)))

    x_end = traj.x[-1]
    # Lipschitz factor of the jump map in normalized coordinates
    n = xf.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1e-6 * scale[j]
        J[:, j] = (sys.jump(xf + e) - sys.jump(xf - e)) / (2e-6 * scale[j]) * scale[j]
    J = J / scale[:, None]
    jump_tol = eps_f_tol * max(1.0, float(np.abs(J).sum(axis=1).max()))

    start = float(np.max(np.abs(traj.x[0] - x0)))
    terminal = norm(x_end - xf)
    closure = norm(sys.jump(x_end) - x0)
    interior = guard_distance(sys, traj.x[1:-1])
    f = sys.vector_field(embedded=traj.u.shape[1] > sys.model.n_act)
    worst_defect = float(defect(f, traj).max())
    checks = {
        "initial_state": dict(value=start, tol=1e-10, passed=start <= 1e-10),
        "terminal_state": dict(value=terminal, tol=eps_f_tol, passed=terminal < eps_f_tol),
        "jump_closure": dict(value=closure, tol=jump_tol, passed=closure < jump_tol),
        "guard_interior": dict(value=float(interior.max()), tol=0.0, passed=bool(np.all(interior < 0))),
        "defect": dict(value=worst_defect, tol=defect_tol, passed=worst_defect < defect_tol),
    }
    return VerificationReport(checks)


@dataclass
class StrategySettings:
    sched_emb: ContinuationSchedule = field(default_factory=ContinuationSchedule)
    sched_f: ContinuationSchedule = field(default_factory=ContinuationSchedule)
    eps_emb: float = 1e-2
    delta_f_tol: float = 5e-2
    eps_f_tol: float = 1e-3
    max_newton: int = 10
    dbeta_step: float = 1e-4
    pronto: ProntoOptions = field(default_factory=ProntoOptions)


def design_orbit(prob: DesignProblem, settings: Optional[StrategySettings] = None,
                 trace: Optional[StrategyTrace] = None) -> DesignResult:
    """Run all three stages and verify the result."""
    settings = settings or StrategySettings()
    trace = trace if trace is not None else StrategyTrace()
    desired = make_desired(prob)
    trace.append(phase="desired", x0=prob.x0, xf=prob.xf,
                 max_guard=float(guard_distance(prob.sys, desired.x[1:-1]).max()))
    xi_e = step2_embedding_continuation(prob, settings.sched_emb, settings.sched_f.rho0, settings.eps_emb,
                                        desired, settings.pronto, trace)
    iterates: List[Trajectory] = []
    final, x_T = step3_enforce_final_state(prob, xi_e, settings.sched_f, settings.delta_f_tol, settings.eps_f_tol,
                                           desired, settings.pronto, trace, settings.max_newton,
                                           settings.dbeta_step, iterates)
    report = verify_periodic_orbit(prob.sys, final, prob.x0, prob.xf, settings.eps_f_tol, prob.state_scale)
    trace.append(phase="verification", **report.to_dict())
    return DesignResult(desired, xi_e, iterates, final, x_T, trace, report)


def check_algorithm2_branches(trace: StrategyTrace, delta_f_tol: float) -> List[str]:
    """Violations of the step-3 branch rule found in a recorded trace."""
    problems = []
    records = [r for r in trace.records if r.get("phase") in ("rho_f", "target_newton")]
    prev_rho = -np.inf
    prev_target = None
    prev_err = None
    for r in records:
        if r["rho_f"] < prev_rho:
            problems.append(f"rho_f decreased at iter {r['iter']}")
        if prev_target is not None and not np.array_equal(prev_target, r["x_T"]) and prev_err > delta_f_tol:
            problems.append(f"x_T changed after terminal error {prev_err:.3g} > delta_f_tol (iter {r['iter']})")
        if r.get("action") == "update_x_T" and r["terminal_error"] > delta_f_tol:
            problems.append(f"Newton update with terminal error {r['terminal_error']:.3g} at iter {r['iter']}")
        prev_rho, prev_target, prev_err = r["rho_f"], r["x_T"], r["terminal_error"]
    return problems
