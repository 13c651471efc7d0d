"""Projection-operator Newton method for trajectory optimization.

A time-varying feedback ``u = mu + K (alpha - x)`` maps any bounded curve
``(alpha, mu)`` to a nearby trajectory.  The tracking cost composed with that
projection is minimized by Newton steps whose directions come from
time-varying LQ problems, so every iterate is a trajectory of the system.

Trajectories are RK4 solutions with node inputs interpolated linearly, and
the cost is a trapezoidal sum, so the search directions solve the LQ
problem of that discrete map exactly.  The projection gain itself comes
from a continuous-time Riccati equation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, expm

from .errors import (
    DivergenceError,
    IndefiniteHessianError,
    LineSearchError,
    MaxIterationsError,
    NonFiniteStateError,
    RiccatiBlowupError,
)
from .integration import Curve, Dynamics, TimeGrid, Trajectory, linearize, linearize_step

log = logging.getLogger(__name__)

RICCATI_MAX_NORM = 1e12
COST_NOISE_ULPS = 64


@dataclass
class CostSpec:
    """Weights and references of the tracking cost.

    ``R`` weights the actuated inputs; when ``n_emb > 0`` the trailing
    ``n_emb`` input columns are embedding inputs weighted by ``rho_emb**2``
    and tracked to zero.  ``desired.u`` may omit those columns.
    """

    Q: np.ndarray
    R: np.ndarray
    desired: Curve
    rho_emb: float = 0.0
    n_emb: int = 0
    rho_f: float = 0.0
    x_T: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if not np.allclose(self.Q, self.Q.T) or np.linalg.eigvalsh(self.Q).min() < -1e-12:
            raise ValueError("Q must be symmetric positive semidefinite")
        if not np.allclose(self.R, self.R.T) or np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be symmetric positive definite")
        if self.rho_emb < 0 or self.rho_f < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.n_emb > 0 and self.rho_emb <= 0:
            raise ValueError("embedding inputs need a positive penalty")
        self.x_T = self.desired.x[-1].copy() if self.x_T is None else np.asarray(self.x_T, dtype=float)

    @property
    def input_weight(self) -> np.ndarray:
        m = self.R.shape[0]
        W = np.zeros((m + self.n_emb, m + self.n_emb))
        W[:m, :m] = self.R
        W[m:, m:] = self.rho_emb**2 * np.eye(self.n_emb)
        return W

    @property
    def desired_input(self) -> np.ndarray:
        ud = self.desired.u
        width = self.R.shape[0] + self.n_emb
        if ud.shape[1] == width:
            return ud
        return np.hstack([ud, np.zeros((ud.shape[0], width - ud.shape[1]))])

    def replace(self, **changes) -> "CostSpec":
        fields = dict(Q=self.Q, R=self.R, desired=self.desired, rho_emb=self.rho_emb,
                      n_emb=self.n_emb, rho_f=self.rho_f, x_T=self.x_T)
        fields.update(changes)
        return CostSpec(**fields)


@dataclass
class TrackingProblem:
    dynamics: Dynamics
    x0: np.ndarray
    cost: CostSpec
    divergence_bound: float = 1e3

    @property
    def grid(self) -> TimeGrid:
        return self.cost.desired.grid


@dataclass
class FeedbackGain:
    """Projection gain; ``B`` is the input matrix it was designed along."""

    K: np.ndarray
    P: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.K)):
            raise RiccatiBlowupError("feedback gain is not finite")


@dataclass
class DescentDirection:
    z: np.ndarray
    v: np.ndarray
    slope: float  # Dg . zeta
    curvature: float  # D2g (zeta, zeta)
    mode: str

    @property
    def predicted_decrease(self) -> float:
        return self.slope + 0.5 * self.curvature


@dataclass
class ProntoOptions:
    grad_tol: float = 1e-4
    abs_tol: float = 0.0
    step_tol: float = 0.0  # stop once the direction moves x(T) by less than this (inf-norm)
    max_iter: int = 50
    mode: str = "newton"
    armijo_alpha: float = 0.4
    backtrack: float = 0.5
    max_halvings: int = 20
    gain_q: float = 1.0
    gain_r: float = 1.0
    gain_qf: float = 10.0


@dataclass
class ProntoResult:
    trajectory: Trajectory
    cost: float
    converged: bool
    trace: List[dict] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _mid(arr):
    return 0.5 * (arr[:-1] + arr[1:])


def _trapz(values, h):
    return h * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))


_GAUSS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


@dataclass
class LQSolution:
    """Backward sweep of a continuous time-varying LQ problem on a grid.

    ``P`` and ``r`` parameterize the costate ``lambda = P z + r``; ``K`` and
    ``v_ff`` give the optimal input ``v = v_ff - K z`` at every node.
    """

    P: np.ndarray
    r: np.ndarray
    K: np.ndarray
    v_ff: np.ndarray


def _per_node(arr, N, shape):
    arr = np.asarray(arr, dtype=float)
    return np.broadcast_to(arr, (N + 1,) + shape) if arr.ndim == len(shape) else arr


def _hamiltonian(A, B, Wxx, Wxu, Winv, a, b):
    """Generator of ``d/dt [z, lambda, 1]`` for the LQ optimality system."""
    n = A.shape[-1]
    BRi = B @ Winv
    Ah = A - BRi @ np.swapaxes(Wxu, -1, -2)
    Qh = Wxx - Wxu @ Winv @ np.swapaxes(Wxu, -1, -2)
    G = BRi @ np.swapaxes(B, -1, -2)
    H = np.zeros(A.shape[:-2] + (2 * n + 1, 2 * n + 1))
    H[..., :n, :n] = Ah
    H[..., :n, n:2 * n] = -G
    H[..., :n, -1] = -(BRi @ b[..., None])[..., 0]
    H[..., n:2 * n, :n] = -Qh
    H[..., n:2 * n, n:2 * n] = -np.swapaxes(Ah, -1, -2)
    H[..., n:2 * n, -1] = -(a - (Wxu @ Winv @ b[..., None])[..., 0])
    return H


def solve_lq(grid: TimeGrid, A, B, Wxx, Wxu, Wuu, Pf, a=None, b=None, rf=None) -> LQSolution:
    """Time-varying LQ problem by exact per-interval Hamiltonian transitions.

    Minimizes ``int 1/2 [z;v]'W[z;v] + a'z + b'v + 1/2 z(T)'Pf z(T) + rf'z(T)``
    subject to ``z' = A z + B v``.  Each interval uses a fourth-order Magnus
    exponent built from the data at the two Gauss points (linear in the node
    values), so large terminal weights and small input weights stay stable
    where an explicit Riccati integration would not.
    """
    N, h = grid.N, grid.h
    n, m = A.shape[-1], B.shape[-1]
    A = _per_node(A, N, (n, n))
    B = _per_node(B, N, (n, m))
    Wxx = _per_node(Wxx, N, (n, n))
    Wxu = _per_node(Wxu, N, (n, m))
    Winv = np.linalg.inv(_per_node(Wuu, N, (m, m)))
    a = np.zeros((N + 1, n)) if a is None else _per_node(a, N, (n,))
    b = np.zeros((N + 1, m)) if b is None else _per_node(b, N, (m,))
    rf = np.zeros(n) if rf is None else np.asarray(rf, dtype=float)

    nodes = (A, B, Wxx, Wxu, Winv, a, b)
    H1 = _hamiltonian(*((1 - _GAUSS[0]) * c[:-1] + _GAUSS[0] * c[1:] for c in nodes))
    H2 = _hamiltonian(*((1 - _GAUSS[1]) * c[:-1] + _GAUSS[1] * c[1:] for c in nodes))
    omega = 0.5 * h * (H1 + H2) + (np.sqrt(3.0) / 12.0) * h**2 * (H2 @ H1 - H1 @ H2)
    Phi = expm(-omega)  # maps [z, lambda, 1] at t_{k+1} back to t_k

    P = np.empty((N + 1, n, n))
    r = np.empty((N + 1, n))
    P[N] = Pf
    r[N] = rf
    for k in range(N - 1, -1, -1):
        F = Phi[k]
        F11, F12, f1 = F[:n, :n], F[:n, n:2 * n], F[:n, -1]
        F21, F22, f2 = F[n:2 * n, :n], F[n:2 * n, n:2 * n], F[n:2 * n, -1]
        Xk = F11 + F12 @ P[k + 1]
        Yk = F21 + F22 @ P[k + 1]
        Pk = np.linalg.solve(Xk.T, Yk.T).T
        Pk = 0.5 * (Pk + Pk.T)
        norm = np.abs(Pk).max()
        if not np.isfinite(norm) or norm > RICCATI_MAX_NORM:
            raise RiccatiBlowupError(f"Riccati solution exceeded {RICCATI_MAX_NORM:g} at node {k}")
        off = F12 @ r[k + 1] + f1
        P[k] = Pk
        r[k] = F22 @ r[k + 1] + f2 - Pk @ off
    Bt = np.swapaxes(B, 1, 2)
    K = Winv @ (Bt @ P + np.swapaxes(Wxu, 1, 2))
    v_ff = -(Winv @ ((Bt @ r[..., None])[..., 0] + b)[..., None])[..., 0]
    return LQSolution(P=P, r=r, K=K, v_ff=v_ff)


def design_gain(A, B, grid: TimeGrid, regQ, regR, regQf) -> FeedbackGain:
    """Time-varying LQR gain ``K = regR^-1 B' P`` along the linearization."""
    n, m = A.shape[-1], B.shape[-1]
    sol = solve_lq(grid, A, B, regQ, np.zeros((n, m)), regR, regQf)
    return FeedbackGain(K=sol.K, P=sol.P, B=np.asarray(B, dtype=float))


def _gain_for(problem: TrackingProblem, A, B, opts: ProntoOptions) -> FeedbackGain:
    n, m = A.shape[-1], B.shape[-1]
    return design_gain(A, B, problem.grid, opts.gain_q * np.eye(n), opts.gain_r * np.eye(m),
                       opts.gain_qf * np.eye(n))


PROJECTION_TOL = 1e-13
PROJECTION_MAX_SWEEPS = 30


def project(problem: TrackingProblem, curve: Curve, gain: FeedbackGain) -> Trajectory:
    """Closed-loop integration of ``u = mu + K (alpha - x)`` from ``problem.x0``.

    The feedback is applied at the nodes, so each step is implicit in
    ``x_{k+1}``.  It is solved by a fixed-point iteration preconditioned
    with ``(I + h/2 B K)^-1`` when the gain carries its ``B``.  The result
    is an exact trajectory of the discrete model.
    """
    f = problem.dynamics
    grid = problem.grid
    N, h = grid.N, grid.h
    alpha, mu, K = curve.x, curve.u, gain.K
    n = alpha.shape[1]
    bound = problem.divergence_bound
    if gain.B is not None:
        precond = np.linalg.inv(np.eye(n) + 0.5 * h * gain.B[1:] @ K[1:])
    else:
        precond = np.broadcast_to(np.eye(n), (N, n, n))

    x = np.empty_like(alpha)
    u = np.empty_like(mu)
    x[0] = problem.x0
    u[0] = mu[0] + K[0] @ (alpha[0] - x[0])
    for k in range(N):
        xk, uk = x[k], u[k]
        k1 = f(xk, uk)
        xn = 3.0 * (xk - x[k - 1]) + x[k - 2] if k >= 2 else xk + h * k1
        for _ in range(PROJECTION_MAX_SWEEPS):
            un = mu[k + 1] + K[k + 1] @ (alpha[k + 1] - xn)
            um = 0.5 * (uk + un)
            k2 = f(xk + 0.5 * h * k1, um)
            k3 = f(xk + 0.5 * h * k2, um)
            res = xk + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + f(xk + h * k3, un)) - xn
            if not np.all(np.isfinite(res)) or np.abs(xn).max() > bound:
                raise DivergenceError(f"projection diverged at t={grid.t[k + 1]:.4g}")
            step = precond[k] @ res
            xn = xn + step
            if np.abs(step).max() <= PROJECTION_TOL * (1.0 + np.abs(xn).max()):
                break
        else:
            raise DivergenceError(f"projection step did not settle at t={grid.t[k + 1]:.4g}")
        x[k + 1] = xn
        u[k + 1] = mu[k + 1] + K[k + 1] @ (alpha[k + 1] - xn)
    return Trajectory(grid, x, u)


def eval_cost(spec: CostSpec, curve: Curve) -> float:
    """Trapezoidal tracking cost plus terminal penalty."""
    h = curve.grid.h
    ex = curve.x - spec.desired.x
    eu = curve.u - spec.desired_input
    integrand = 0.5 * (np.einsum("ki,ij,kj->k", ex, spec.Q, ex)
                       + np.einsum("ki,ij,kj->k", eu, spec.input_weight, eu))
    eT = curve.x[-1] - spec.x_T
    return float(_trapz(integrand, h) + 0.5 * spec.rho_f**2 * eT @ eT)


def cost_gradient_terms(spec: CostSpec, curve: Curve):
    """Pointwise cost gradients ``a``, ``b`` and terminal gradient ``r_f``."""
    a = (curve.x - spec.desired.x) @ spec.Q.T
    b = (curve.u - spec.desired_input) @ spec.input_weight.T
    rf = spec.rho_f**2 * (curve.x[-1] - spec.x_T)
    return a, b, rf


def adjoint(grid: TimeGrid, A, B, K, a, b, rf):
    """Closed-loop adjoint ``-q' = (A - BK)'q + a - K'b``, ``q(T) = r_f``."""
    N, h = grid.N, grid.h
    Acl = A - B @ K
    src = a - np.einsum("kji,kj->ki", K, b)
    Am, sm = _mid(Acl), _mid(src)
    q = np.empty_like(a)
    q[N] = rf
    for k in range(N - 1, -1, -1):
        qk = q[k + 1]
        k1 = Acl[k + 1].T @ qk + src[k + 1]
        k2 = Am[k].T @ (qk + 0.5 * h * k1) + sm[k]
        k3 = Am[k].T @ (qk + 0.5 * h * k2) + sm[k]
        k4 = Acl[k].T @ (qk + h * k3) + src[k]
        q[k] = qk + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return q


def weighted_hessian(dynamics: Dynamics, x, u, q):
    """Per-node Hessian of ``q . f(x, u)`` with respect to ``(x, u)``."""
    n, m = x.shape[1], u.shape[1]
    z = np.hstack([x, u])
    d = n + m
    steps = 1e-4 * np.maximum(1.0, np.abs(z))

    def phi(dz):
        zz = z + dz
        return np.einsum("ki,ki->k", q, dynamics(zz[:, :n], zz[:, n:]))

    def e(i, scale=1.0):
        out = np.zeros_like(z)
        out[:, i] = scale * steps[:, i]
        return out

    H = np.zeros((z.shape[0], d, d))
    f0 = phi(np.zeros_like(z))
    for i in range(d):
        H[:, i, i] = (phi(e(i)) - 2 * f0 + phi(e(i, -1.0))) / steps[:, i] ** 2
        for j in range(i + 1, d):
            ei, ej = e(i), e(j)
            hij = (phi(ei + ej) - phi(ei - ej) - phi(ej - ei) + phi(-ei - ej)) / (4 * steps[:, i] * steps[:, j])
            H[:, i, j] = H[:, j, i] = hij
    return H


def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    w = np.full(grid.N + 1, grid.h)
    w[[0, -1]] *= 0.5
    return w


def directional_derivative(problem: TrackingProblem, traj: Curve, zeta: Curve, gain: FeedbackGain, steps=None):
    """``Dg(xi) . zeta`` for an arbitrary curve perturbation ``zeta``.

    ``zeta`` is first mapped to the tangent space through the linearized
    projection ``v_k = nu_k + K_k (beta_k - z_k)`` of the discrete model.
    """
    Ad, B0, B1 = linearize_step(problem.dynamics, traj) if steps is None else steps
    K = gain.K
    N = problem.grid.N
    n = traj.n_state
    z = np.zeros((N + 1, n))
    v = np.empty_like(zeta.u)
    v[0] = zeta.u[0] + K[0] @ zeta.x[0]
    for k in range(N):
        ff = zeta.u[k + 1] + K[k + 1] @ zeta.x[k + 1]
        rhs = Ad[k] @ z[k] + B0[k] @ v[k] + B1[k] @ ff
        z[k + 1] = np.linalg.solve(np.eye(n) + B1[k] @ K[k + 1], rhs)
        v[k + 1] = ff - K[k + 1] @ z[k + 1]
    a, b, rf = cost_gradient_terms(problem.cost, traj)
    w = trapezoid_weights(problem.grid)
    return float(w @ (np.einsum("ki,ki->k", a, z) + np.einsum("ki,ki->k", b, v)) + rf @ z[-1])


def solve_discrete_lq(Ad, B0, B1, W, ell, Pf, rf):
    """LQ problem of the step map ``z_{k+1} = Ad z_k + B0 v_k + B1 v_{k+1}``.

    Minimizes ``sum_k 1/2 s_k' W_k s_k + ell_k' s_k + 1/2 z_N' Pf z_N + rf' z_N``
    over ``s_k = [z_k, v_k]`` with ``z_0 = 0``.  The pair ``s_k`` is the state
    of the sweep and ``v_{k+1}`` its input.  Returns the optimal ``(z, v)``.
    """
    N, n, m = Ad.shape[0], Ad.shape[1], B0.shape[2]
    d = n + m
    F = np.zeros((N, d, d))
    F[:, :n, :n] = Ad
    F[:, :n, n:] = B0
    G = np.zeros((N, d, m))
    G[:, :n] = B1
    G[:, n:] = np.eye(m)
    P = W[N].copy()
    P[:n, :n] += Pf
    p = ell[N].copy()
    p[:n] += rf
    gains = np.empty((N, m, d))
    ff = np.empty((N, m))
    for k in range(N - 1, -1, -1):
        PG = P @ G[k]
        Hww = G[k].T @ PG
        Hws = PG.T @ F[k]
        try:
            chol = cho_factor(Hww)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteHessianError(f"LQ input block is not positive definite at node {k + 1}") from exc
        gains[k] = cho_solve(chol, Hws)
        ff[k] = -cho_solve(chol, G[k].T @ p)
        P = W[k] + F[k].T @ P @ F[k] - Hws.T @ gains[k]
        P = 0.5 * (P + P.T)
        p = ell[k] + F[k].T @ p + Hws.T @ ff[k]
        norm = np.abs(P).max()
        if not np.isfinite(norm) or norm > RICCATI_MAX_NORM:
            raise RiccatiBlowupError(f"Riccati solution exceeded {RICCATI_MAX_NORM:g} at node {k}")
    s = np.zeros((N + 1, d))
    try:
        s[0, n:] = -cho_solve(cho_factor(P[n:, n:]), p[n:])
    except np.linalg.LinAlgError as exc:
        raise IndefiniteHessianError("LQ initial input block is not positive definite") from exc
    for k in range(N):
        w = ff[k] - gains[k] @ s[k]
        s[k + 1] = F[k] @ s[k] + G[k] @ w
    return s[:, :n], s[:, n:]


def descent_direction(spec: CostSpec, traj: Trajectory, A, B, mode: str = "newton", *,
                      steps=None, dynamics: Optional[Dynamics] = None, gain: Optional[FeedbackGain] = None):
    """Minimize the second-order model ``Dg.zeta + 1/2 D2g(zeta, zeta)``.

    ``steps`` are the step-map Jacobians from :func:`linearize_step`; ``A``
    and ``B`` the node Jacobians of the vector field, used by the Newton
    term.  Returns ``(direction, predicted_decrease)``.  In Newton mode the
    weight gets the adjoint-weighted second derivatives of the dynamics; an
    LQ problem that is not strictly convex raises
    :class:`IndefiniteHessianError`.
    """
    grid = traj.grid
    n, m = traj.n_state, traj.n_input
    if steps is None:
        if dynamics is None:
            raise ValueError("need the step Jacobians or the dynamics")
        steps = linearize_step(dynamics, traj)
    a, b, rf = cost_gradient_terms(spec, traj)
    W = np.zeros((grid.N + 1, n + m, n + m))
    W[:, :n, :n] = spec.Q
    W[:, n:, n:] = spec.input_weight
    if mode == "newton":
        if dynamics is None or gain is None:
            raise ValueError("newton mode needs the dynamics and the projection gain")
        q = adjoint(grid, A, B, gain.K, a, b, rf)
        W = W + weighted_hessian(dynamics, traj.x, traj.u, q)
    elif mode != "gauss-newton":
        raise ValueError(f"unknown mode {mode!r}")
    w = trapezoid_weights(grid)
    W = W * w[:, None, None]
    ell = np.hstack([a, b]) * w[:, None]
    Pf = spec.rho_f**2 * np.eye(n)
    try:
        z, v = solve_discrete_lq(*steps, W, ell, Pf, rf)
    except RiccatiBlowupError as exc:
        if mode == "newton":
            raise IndefiniteHessianError(str(exc)) from exc
        raise
    zv = np.hstack([z, v])
    slope = float(np.einsum("ki,ki->", ell, zv) + rf @ z[-1])
    curvature = float(np.einsum("ki,kij,kj->", zv, W, zv) + z[-1] @ Pf @ z[-1])
    direction = DescentDirection(z=z, v=v, slope=slope, curvature=curvature, mode=mode)
    if mode == "newton" and direction.predicted_decrease > 0:
        raise IndefiniteHessianError("Newton model does not predict a decrease")
    return direction, direction.predicted_decrease


def line_search(problem: TrackingProblem, traj: Trajectory, direction: DescentDirection, gain: FeedbackGain,
                cost0: Optional[float] = None, opts: Optional[ProntoOptions] = None):
    """Armijo backtracking on the projected cost; returns ``(gamma, cost, trajectory)``."""
    opts = opts or ProntoOptions()
    if direction.slope >= 0:
        raise LineSearchError("direction is not a descent direction", traj)
    cost0 = eval_cost(problem.cost, traj) if cost0 is None else cost0
    gamma = 1.0
    for _ in range(opts.max_halvings + 1):
        candidate = traj.shifted(direction.z, direction.v, gamma)
        try:
            eta = project(problem, candidate, gain)
            cost = eval_cost(problem.cost, eta)
        except (DivergenceError, NonFiniteStateError):
            cost = np.inf
        if cost <= cost0 + opts.armijo_alpha * gamma * direction.slope:
            return gamma, cost, eta
        gamma *= opts.backtrack
    raise LineSearchError(f"no sufficient decrease after {opts.max_halvings} halvings", traj)


def pronto_solve(problem: TrackingProblem, xi0: Trajectory, opts: Optional[ProntoOptions] = None) -> ProntoResult:
    """Projection-operator Newton iteration from the trajectory ``xi0``.

    Stops when ``|Dg.zeta|`` falls below ``grad_tol`` times the first
    iterate's value (floored at one) or below ``abs_tol``, or when the
    direction changes the terminal state by less than ``step_tol``.
    """
    opts = opts or ProntoOptions()
    xi = xi0
    cost = eval_cost(problem.cost, xi)
    trace: List[dict] = []
    threshold = None
    for it in range(opts.max_iter):
        A, B = linearize(problem.dynamics, xi)
        steps = linearize_step(problem.dynamics, xi)
        gain = _gain_for(problem, A, B, opts)
        mode = opts.mode
        direction = None
        if mode == "newton":
            try:
                direction, _ = descent_direction(problem.cost, xi, A, B, mode, steps=steps,
                                                 dynamics=problem.dynamics, gain=gain)
            except IndefiniteHessianError:
                direction = None
            if direction is None or direction.slope >= 0:
                mode = "gauss-newton"
                direction = None
        if direction is None:
            direction, _ = descent_direction(problem.cost, xi, A, B, mode, steps=steps)
        grad = abs(direction.slope)
        if direction.slope >= 0:
            # the Gauss-Newton model is positive definite, so this is roundoff
            trace.append(dict(iter=it, cost=cost, grad=grad, gamma=0.0, mode="stationary"))
            return ProntoResult(xi, cost, True, trace)
        if threshold is None:
            threshold = max(opts.grad_tol * max(1.0, grad), opts.abs_tol)
        # below this the Armijo test cannot resolve a decrease of the cost
        noise = COST_NOISE_ULPS * np.finfo(float).eps * max(1.0, abs(cost))
        if grad < max(threshold, noise) or np.abs(direction.z[-1]).max() < opts.step_tol:
            trace.append(dict(iter=it, cost=cost, grad=grad, gamma=0.0, mode=mode))
            return ProntoResult(xi, cost, True, trace)
        try:
            gamma, cost, xi = line_search(problem, xi, direction, gain, cost, opts)
        except LineSearchError as exc:
            exc.trajectory = xi
            raise
        trace.append(dict(iter=it, cost=cost, grad=grad, gamma=gamma, mode=mode))
        log.debug("pronto iter %d cost %.6g |Dg| %.3g gamma %.3g (%s)", it, cost, grad, gamma, mode)
    raise MaxIterationsError(f"no convergence in {opts.max_iter} iterations", xi)
