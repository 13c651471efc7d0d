"""Underactuated mechanical systems with impacts.

A :class:`MechanicalModel` holds the second-order form

    M(q) q'' + C(q, q') + G(q) = Y_u(q) u + Y_emb(q) u_emb

and a :class:`HybridSystem` adds the first-order state-space view
``x = [q, q']`` together with a scalar guard (zero on the jump set) and the
jump map.  Every map accepts arrays with arbitrary leading batch dimensions,
so a whole time grid can be evaluated in one call.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import SingularImpactMatrixError, SingularInputMapError, SingularMassMatrixError

ArrayMap = Callable[..., np.ndarray]

GUARD_WARN_TOL = 1e-6


@dataclass(frozen=True)
class MechanicalModel:
    dof: int
    n_act: int
    mass: ArrayMap
    coriolis: ArrayMap
    gravity: ArrayMap
    input_map_actuated: ArrayMap
    input_map_embedding: ArrayMap

    def __post_init__(self):
        if not 0 < self.n_act <= self.dof:
            raise ValueError(f"need 0 < n_act <= dof, got n_act={self.n_act}, dof={self.dof}")

    @property
    def n_emb(self) -> int:
        return self.dof - self.n_act

    def input_map(self, q):
        """Stacked ``Y(q) = [Y_u(q) Y_emb(q)]``."""
        return np.concatenate([self.input_map_actuated(q), self.input_map_embedding(q)], axis=-1)

    def accelerations(self, q, qd, torque):
        """Solve ``M q'' = torque - C - G`` for the generalized accelerations."""
        rhs = torque - self.coriolis(q, qd) - self.gravity(q)
        try:
            return np.linalg.solve(self.mass(q), rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularMassMatrixError("mass matrix is singular at the requested configuration") from exc

    def inverse_dynamics(self, q, qd, qdd):
        """Full input ``u^e = Y(q)^{-1} (M q'' + C + G)`` of the embedded system."""
        tau = (self.mass(q) @ qdd[..., None])[..., 0] + self.coriolis(q, qd) + self.gravity(q)
        try:
            return np.linalg.solve(self.input_map(q), tau[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularInputMapError("stacked input map Y(q) is not invertible") from exc


@dataclass(frozen=True)
class HybridSystem:
    """Continuous flow plus one impact map.

    ``guard`` returns a signed scalar that vanishes on the jump set.  If
    ``inverse_jump`` is omitted the inverse is found by root finding.
    """

    model: MechanicalModel
    guard: Callable[[np.ndarray], np.ndarray]
    jump: Callable[[np.ndarray], np.ndarray]
    inverse_jump: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def n_state(self) -> int:
        return 2 * self.model.dof

    @property
    def n_input(self) -> int:
        return self.model.n_act

    def split(self, x):
        x = np.asarray(x, dtype=float)
        nq = self.model.dof
        if x.shape[-1] != 2 * nq:
            raise ValueError(f"state must have dimension {2 * nq}, got {x.shape[-1]}")
        return x[..., :nq], x[..., nq:]

    def _field(self, x, columns):
        # columns: (..., nq, k) generalized-force directions -> (..., n, k) state directions
        q, _ = self.split(x)
        try:
            acc = np.linalg.solve(self.model.mass(q), columns)
        except np.linalg.LinAlgError as exc:
            raise SingularMassMatrixError("mass matrix is singular at the requested configuration") from exc
        top = np.zeros(acc.shape[:-2] + (self.model.dof, acc.shape[-1]))
        return np.concatenate([top, acc], axis=-2)

    def drift(self, x):
        q, qd = self.split(x)
        qdd = self.model.accelerations(q, qd, np.zeros_like(q))
        return np.concatenate([qd, qdd], axis=-1)

    def input_field(self, x):
        q, _ = self.split(x)
        return self._field(x, self.model.input_map_actuated(q))

    def embedding_field(self, x):
        q, _ = self.split(x)
        return self._field(x, self.model.input_map_embedding(q))

    def vector_field(self, embedded: bool = False):
        """Return ``f(x, u)`` for the underactuated or the embedded system."""
        if embedded:
            return lambda x, u: embedded_dynamics(self, x, np.asarray(u)[..., : self.model.n_act],
                                                  np.asarray(u)[..., self.model.n_act:])
        return lambda x, u: continuous_dynamics(self, x, u)


def _check_input(u, size, what):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != size:
        raise ValueError(f"{what} must have dimension {size}, got {u.shape[-1]}")
    return u


def continuous_dynamics(sys: HybridSystem, x, u):
    """``f(x) + g(x) u`` evaluated through a linear solve with M(q)."""
    q, qd = sys.split(x)
    u = _check_input(u, sys.model.n_act, "input")
    torque = (sys.model.input_map_actuated(q) @ u[..., None])[..., 0]
    qdd = sys.model.accelerations(q, qd, torque)
    return np.concatenate([qd, qdd], axis=-1)


def embedded_dynamics(sys: HybridSystem, x, u, u_emb):
    """``f(x) + g(x) u + g_emb(x) u_emb`` of the fully actuated embedding."""
    q, qd = sys.split(x)
    u = _check_input(u, sys.model.n_act, "input")
    u_emb = _check_input(u_emb, sys.model.n_emb, "embedding input")
    batch = np.broadcast_shapes(u.shape[:-1], u_emb.shape[:-1])
    ue = np.concatenate([np.broadcast_to(u, batch + u.shape[-1:]),
                         np.broadcast_to(u_emb, batch + u_emb.shape[-1:])], axis=-1)
    torque = (sys.model.input_map(q) @ ue[..., None])[..., 0]
    qdd = sys.model.accelerations(q, qd, torque)
    return np.concatenate([qd, qdd], axis=-1)


def guard_distance(sys: HybridSystem, x):
    return sys.guard(np.asarray(x, dtype=float))


def jump_map(sys: HybridSystem, x_minus):
    x_minus = np.asarray(x_minus, dtype=float)
    if np.any(np.abs(guard_distance(sys, x_minus)) > GUARD_WARN_TOL):
        warnings.warn("jump map evaluated away from the jump set", RuntimeWarning, stacklevel=2)
    return sys.jump(x_minus)


def inverse_jump_map(sys: HybridSystem, x_plus):
    x_plus = np.asarray(x_plus, dtype=float)
    if sys.inverse_jump is not None:
        return sys.inverse_jump(x_plus)
    sol = optimize.root(lambda z: sys.jump(z) - x_plus, x_plus, method="hybr", options={"xtol": 1e-14})
    if not sol.success:
        raise SingularImpactMatrixError(f"could not invert the jump map: {sol.message}")
    return sol.x
