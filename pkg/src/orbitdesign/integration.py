"""Fixed-step RK4 on a uniform grid, linearization along curves, and
finite-difference Jacobians.

Inputs live on the grid nodes and are linearly interpolated at the RK
stage times, so the half-step stage input is the mean of two node values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import NonFiniteStateError

Dynamics = Callable[[np.ndarray, np.ndarray], np.ndarray]

MIN_INTERVALS = 100


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < MIN_INTERVALS:
            raise ValueError(f"grid needs at least {MIN_INTERVALS} intervals, got {self.N}")
        if not self.T > 0:
            raise ValueError("horizon must be positive")

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class Curve:
    """State-input samples on every node of ``grid``."""

    grid: TimeGrid
    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        n_nodes = self.grid.N + 1
        if self.x.ndim != 2 or self.x.shape[0] != n_nodes or self.u.ndim != 2 or self.u.shape[0] != n_nodes:
            raise ValueError(f"curve samples must be 2-d arrays with {n_nodes} rows")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.u))):
            raise NonFiniteStateError("curve contains non-finite samples")

    @property
    def n_state(self) -> int:
        return self.x.shape[1]

    @property
    def n_input(self) -> int:
        return self.u.shape[1]

    def shifted(self, dx, du, gamma: float = 1.0) -> "Curve":
        return Curve(self.grid, self.x + gamma * np.asarray(dx), self.u + gamma * np.asarray(du))


class Trajectory(Curve):
    """A curve produced by integrating the dynamics; see :func:`defect`."""


def rk4_step(dynamics: Dynamics, x, h, u0, u_mid, u1):
    k1 = dynamics(x, u0)
    k2 = dynamics(x + 0.5 * h * k1, u_mid)
    k3 = dynamics(x + 0.5 * h * k2, u_mid)
    k4 = dynamics(x + h * k3, u1)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(dynamics: Dynamics, x0, input_signal: Union[np.ndarray, Callable], grid: TimeGrid) -> Trajectory:
    """Integrate ``x' = dynamics(x, u(t))`` from ``x0`` over ``grid``.

    ``input_signal`` is either an ``(N+1, m)`` array of node values or a
    callable ``t -> u``.
    """
    t, h = grid.t, grid.h
    if callable(input_signal):
        nodes = np.array([np.atleast_1d(input_signal(tk)) for tk in t], dtype=float)
        mids = np.array([np.atleast_1d(input_signal(tk + 0.5 * h)) for tk in t[:-1]], dtype=float)
    else:
        nodes = np.asarray(input_signal, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        mids = 0.5 * (nodes[:-1] + nodes[1:])
    x = np.empty((grid.N + 1, len(x0)))
    x[0] = x0
    for k in range(grid.N):
        x[k + 1] = rk4_step(dynamics, x[k], h, nodes[k], mids[k], nodes[k + 1])
        if not np.all(np.isfinite(x[k + 1])):
            raise NonFiniteStateError(f"state left R^n at t={t[k + 1]:.6g}")
    return Trajectory(grid, x, nodes)


def defect(dynamics: Dynamics, curve: Curve) -> np.ndarray:
    """Per-interval ``||x_{k+1} - Phi_h(x_k, u)||_inf`` for one RK4 step."""
    u = curve.u
    pred = rk4_step(dynamics, curve.x[:-1], curve.grid.h, u[:-1], 0.5 * (u[:-1] + u[1:]), u[1:])
    return np.max(np.abs(curve.x[1:] - pred), axis=1)


def fd_steps(z):
    return np.maximum(1e-6, 1e-7 * np.abs(z))


def finite_diff_jacobian(fn: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at ``x``."""
    x = np.asarray(x, dtype=float)
    steps = fd_steps(x)
    cols = []
    for i, hi in enumerate(steps):
        e = np.zeros_like(x)
        e[i] = hi
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * hi))
    return np.stack(cols, axis=-1)


def linearize(dynamics: Dynamics, curve: Curve):
    """Per-node Jacobians ``A = df/dx`` and ``B = df/du``.

    Uses ``dynamics.jacobian(x, u)`` when the vector field provides one,
    central differences otherwise.
    """
    x, u = curve.x, curve.u
    jac = getattr(dynamics, "jacobian", None)
    if jac is not None:
        return jac(x, u)
    n, m = x.shape[1], u.shape[1]
    A = np.empty((x.shape[0], n, n))
    B = np.empty((x.shape[0], n, m))
    for j in range(n):
        hj = fd_steps(x[:, j])
        dx = np.zeros_like(x)
        dx[:, j] = hj
        A[:, :, j] = (dynamics(x + dx, u) - dynamics(x - dx, u)) / (2 * hj[:, None])
    for j in range(m):
        hj = fd_steps(u[:, j])
        du = np.zeros_like(u)
        du[:, j] = hj
        B[:, :, j] = (dynamics(x, u + du) - dynamics(x, u - du)) / (2 * hj[:, None])
    return A, B


def linearize_step(dynamics: Dynamics, curve: Curve):
    """Jacobians of the RK4 step ``x_{k+1} = Phi(x_k, u_k, u_{k+1})``.

    Returns ``(Ad, B0, B1)`` with one block per interval.  With an analytic
    ``dynamics.jacobian`` the stage Jacobians are chained exactly; otherwise
    the step map is differenced centrally, all intervals at once.
    """
    x, u, h = curve.x[:-1], curve.u, curve.grid.h
    u0, u1 = u[:-1], u[1:]
    um = 0.5 * (u0 + u1)
    jac = getattr(dynamics, "jacobian", None)
    if jac is not None:
        eye = np.eye(x.shape[1])
        k1 = dynamics(x, u0)
        x2 = x + 0.5 * h * k1
        k2 = dynamics(x2, um)
        x3 = x + 0.5 * h * k2
        x4 = x + h * dynamics(x3, um)
        (A1, G1), (A2, G2), (A3, G3), (A4, G4) = jac(x, u0), jac(x2, um), jac(x3, um), jac(x4, u1)
        # stage derivatives with respect to x_k, u_k and u_{k+1}
        D1 = A1
        D2 = A2 @ (eye + 0.5 * h * D1)
        D3 = A3 @ (eye + 0.5 * h * D2)
        D4 = A4 @ (eye + h * D3)
        E2 = 0.5 * h * A2 @ G1 + 0.5 * G2
        E3 = 0.5 * h * A3 @ E2 + 0.5 * G3
        E4 = h * A4 @ E3
        F3 = 0.25 * h * A3 @ G2 + 0.5 * G3
        F4 = h * A4 @ F3 + G4
        Ad = eye + (h / 6.0) * (D1 + 2 * D2 + 2 * D3 + D4)
        B0 = (h / 6.0) * (G1 + 2 * E2 + 2 * E3 + E4)
        B1 = (h / 6.0) * (G2 + 2 * F3 + F4)
        return Ad, B0, B1

    def step(xx, a, b):
        return rk4_step(dynamics, xx, h, a, 0.5 * (a + b), b)

    def column(base, j, fn):
        hj = fd_steps(base[:, j])
        d = np.zeros_like(base)
        d[:, j] = hj
        return (fn(base + d) - fn(base - d)) / (2 * hj[:, None])

    n, m = x.shape[1], u.shape[1]
    Ad = np.empty((x.shape[0], n, n))
    B0 = np.empty((x.shape[0], n, m))
    B1 = np.empty((x.shape[0], n, m))
    for j in range(n):
        Ad[:, :, j] = column(x, j, lambda xx: step(xx, u0, u1))
    for j in range(m):
        B0[:, :, j] = column(u0, j, lambda uu: step(x, uu, u1))
        B1[:, :, j] = column(u1, j, lambda uu: step(x, u0, uu))
    return Ad, B0, B1
