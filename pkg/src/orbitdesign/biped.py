"""Three-link compass biped with torso.

Coordinates are absolute link angles from the vertical: ``th1`` stance leg,
``th2`` swing leg, ``th3`` torso.  Inputs are the hip torques ``u1``
(stance leg/torso) and ``u2`` (swing leg/torso); the embedding adds one
torque acting directly on the torso coordinate.  All formulas accept
leading batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import HybridSystem, MechanicalModel
from .errors import SingularImpactMatrixError, SingularMassMatrixError

# leg relabelling at impact; involutory
RELABEL = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])

IMPACT_DEN_TOL = 1e-12
IMPACT_COND_MAX = 1e8


@dataclass(frozen=True)
class BipedParams:
    m: float = 5.0
    M_H: float = 15.0
    M_T: float = 10.0
    r: float = 1.0
    l: float = 0.5
    g: float = 9.81
    theta1_jmp: float = np.pi / 8

    def __post_init__(self):
        bad = [k for k in ("m", "M_H", "M_T", "r", "l", "g") if not getattr(self, k) > 0]
        if bad:
            raise ValueError(f"biped parameters must be strictly positive: {', '.join(bad)}")


def biped_mass_matrix(p: BipedParams, theta):
    th = np.asarray(theta, dtype=float)
    c12 = np.cos(th[..., 0] - th[..., 1])
    c13 = np.cos(th[..., 0] - th[..., 2])
    M = np.zeros(th.shape[:-1] + (3, 3))
    M[..., 0, 0] = (1.25 * p.m + p.M_H + p.M_T) * p.r**2
    M[..., 0, 1] = M[..., 1, 0] = -0.5 * p.m * p.r**2 * c12
    M[..., 0, 2] = M[..., 2, 0] = p.M_T * p.r * p.l * c13
    M[..., 1, 1] = 0.25 * p.m * p.r**2
    M[..., 2, 2] = p.M_T * p.l**2
    return M


def biped_coriolis(p: BipedParams, theta, dtheta):
    th = np.asarray(theta, dtype=float)
    w = np.asarray(dtheta, dtype=float)
    s12 = np.sin(th[..., 0] - th[..., 1])
    s13 = np.sin(th[..., 0] - th[..., 2])
    a = 0.5 * p.m * p.r**2 * s12
    b = p.M_T * p.r * p.l * s13
    return np.stack([-a * w[..., 1] ** 2 + b * w[..., 2] ** 2,
                     a * w[..., 0] ** 2,
                     -b * w[..., 0] ** 2], axis=-1)


def biped_gravity(p: BipedParams, theta):
    th = np.asarray(theta, dtype=float)
    return np.stack([-0.5 * p.g * (2 * p.M_H + 3 * p.m + 2 * p.M_T) * p.r * np.sin(th[..., 0]),
                     0.5 * p.g * p.m * p.r * np.sin(th[..., 1]),
                     -p.g * p.M_T * p.l * np.sin(th[..., 2])], axis=-1)


def biped_potential(p: BipedParams, theta):
    """Potential energy whose gradient is :func:`biped_gravity`."""
    th = np.asarray(theta, dtype=float)
    return (0.5 * p.g * (2 * p.M_H + 3 * p.m + 2 * p.M_T) * p.r * np.cos(th[..., 0])
            - 0.5 * p.g * p.m * p.r * np.cos(th[..., 1])
            + p.g * p.M_T * p.l * np.cos(th[..., 2]))


def biped_energy(p: BipedParams, x):
    x = np.asarray(x, dtype=float)
    th, w = x[..., :3], x[..., 3:]
    kinetic = 0.5 * np.einsum("...i,...ij,...j->...", w, biped_mass_matrix(p, th), w)
    return kinetic + biped_potential(p, th)


def biped_torque_maps(p: BipedParams | None = None):
    """Return ``(Y_u, Y_emb, Y)``; constant for this model."""
    Y_u = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
    Y_emb = np.array([[0.0], [0.0], [1.0]])
    return Y_u, Y_emb, np.hstack([Y_u, Y_emb])


def impact_matrix_A(p: BipedParams, theta_minus):
    """Post-impact joint velocities ``dth+ = A(th-) dth-`` (relabelled coordinates)."""
    th = np.asarray(theta_minus, dtype=float)
    t1, t2, t3 = th[..., 0], th[..., 1], th[..., 2]
    m, MH, MT, r, l = p.m, p.M_H, p.M_T, p.r, p.l
    cos = np.cos
    den = -3 * m - 4 * MH - 2 * MT + 2 * m * cos(2 * t1 - 2 * t2) + 2 * MT * cos(-2 * t2 + 2 * t3)
    if np.any(np.abs(den) < IMPACT_DEN_TOL):
        raise SingularImpactMatrixError("impact map denominator vanishes")
    A = np.zeros(th.shape[:-1] + (3, 3))
    A[..., 0, 0] = (2 * MT * cos(-t1 - t2 + 2 * t3) - (2 * m + 4 * MH + 2 * MT) * cos(t1 - t2)) / den
    A[..., 0, 1] = m / den
    A[..., 1, 0] = (m - (4 * m + 4 * MH + 2 * MT) * cos(2 * t1 - 2 * t2) + 2 * MT * cos(2 * t1 - 2 * t3)) / den
    A[..., 1, 1] = 2 * m * cos(t1 - t2) / den
    A[..., 2, 0] = ((2 * m * r + 2 * MH * r + 2 * MT * r) * cos(t1 - 2 * t2 + t3)
                    - 2 * MH * r * cos(-t1 + t3)
                    - (2 * m * r + 2 * MT * r) * cos(-t1 + t3)
                    + m * r * cos(-3 * t1 + 2 * t2 + t3)) / (l * den)
    A[..., 2, 1] = -r * m * cos(-t2 + t3) / (l * den)
    A[..., 2, 2] = 1.0
    return A


def biped_jump(p: BipedParams, x_minus):
    x = np.asarray(x_minus, dtype=float)
    th, w = x[..., :3], x[..., 3:]
    th_plus = th @ RELABEL.T
    w_plus = (impact_matrix_A(p, th) @ w[..., None])[..., 0]
    return np.concatenate([th_plus, w_plus], axis=-1)


def biped_inverse_jump(p: BipedParams, x_plus):
    x = np.asarray(x_plus, dtype=float)
    th_minus = x[..., :3] @ RELABEL.T
    A = impact_matrix_A(p, th_minus)
    cond = np.linalg.cond(A)
    if np.any(cond > IMPACT_COND_MAX):
        raise SingularImpactMatrixError(f"impact matrix ill conditioned (cond={np.max(cond):.3g})")
    w_minus = np.linalg.solve(A, x[..., 3:, None])[..., 0]
    return np.concatenate([th_minus, w_minus], axis=-1)


def biped_state_jacobian(p: BipedParams, x, ue):
    """Hand-derived Jacobians of the embedded state-space dynamics.

    ``ue`` is the full input ``[u1, u2, u_emb]``; returns ``(A, B)`` with
    ``B`` of width 3.  Uses ``dq''/dth_k = M^{-1}(-dM/dth_k q'' - dC/dth_k - dG/dth_k)``.
    """
    x = np.asarray(x, dtype=float)
    ue = np.asarray(ue, dtype=float)
    th, w = x[..., :3], x[..., 3:]
    _, _, Y = biped_torque_maps(p)
    M = biped_mass_matrix(p, th)
    tau = (Y @ ue[..., None])[..., 0] - biped_coriolis(p, th, w) - biped_gravity(p, th)
    qdd = np.linalg.solve(M, tau[..., None])[..., 0]

    s12 = np.sin(th[..., 0] - th[..., 1])
    s13 = np.sin(th[..., 0] - th[..., 2])
    c12 = np.cos(th[..., 0] - th[..., 1])
    c13 = np.cos(th[..., 0] - th[..., 2])
    a = 0.5 * p.m * p.r**2
    b = p.M_T * p.r * p.l
    batch = th.shape[:-1]

    # dM/dth_k
    dM = np.zeros(batch + (3, 3, 3))
    dM[..., 0, 0, 1] = dM[..., 0, 1, 0] = a * s12
    dM[..., 1, 0, 1] = dM[..., 1, 1, 0] = -a * s12
    dM[..., 0, 0, 2] = dM[..., 0, 2, 0] = -b * s13
    dM[..., 2, 0, 2] = dM[..., 2, 2, 0] = b * s13

    w1, w2, w3 = w[..., 0] ** 2, w[..., 1] ** 2, w[..., 2] ** 2
    # dC/dth: rows = C component, cols = th_k
    dC = np.zeros(batch + (3, 3))
    dC[..., 0, 0] = -a * c12 * w2 + b * c13 * w3
    dC[..., 0, 1] = a * c12 * w2
    dC[..., 0, 2] = -b * c13 * w3
    dC[..., 1, 0] = a * c12 * w1
    dC[..., 1, 1] = -a * c12 * w1
    dC[..., 2, 0] = -b * c13 * w1
    dC[..., 2, 2] = b * c13 * w1
    # dC/dw
    dCw = np.zeros(batch + (3, 3))
    dCw[..., 0, 1] = -2 * a * s12 * w[..., 1]
    dCw[..., 0, 2] = 2 * b * s13 * w[..., 2]
    dCw[..., 1, 0] = 2 * a * s12 * w[..., 0]
    dCw[..., 2, 0] = -2 * b * s13 * w[..., 0]
    dG = np.zeros(batch + (3, 3))
    dG[..., 0, 0] = -0.5 * p.g * (2 * p.M_H + 3 * p.m + 2 * p.M_T) * p.r * np.cos(th[..., 0])
    dG[..., 1, 1] = 0.5 * p.g * p.m * p.r * np.cos(th[..., 1])
    dG[..., 2, 2] = -p.g * p.M_T * p.l * np.cos(th[..., 2])

    dMqdd = np.einsum("...kij,...j->...ik", dM, qdd)
    dqdd_dth = np.linalg.solve(M, -dMqdd - dC - dG)
    dqdd_dw = np.linalg.solve(M, -dCw)
    dqdd_du = np.linalg.solve(M, np.broadcast_to(Y, batch + (3, 3)))

    A = np.zeros(batch + (6, 6))
    A[..., :3, 3:] = np.eye(3)
    A[..., 3:, :3] = dqdd_dth
    A[..., 3:, 3:] = dqdd_dw
    B = np.zeros(batch + (6, 3))
    B[..., 3:, :] = dqdd_du
    return A, B


def biped_model(p: BipedParams) -> MechanicalModel:
    Y_u, Y_emb, _ = biped_torque_maps(p)
    return MechanicalModel(
        dof=3,
        n_act=2,
        mass=lambda q: biped_mass_matrix(p, q),
        coriolis=lambda q, qd: biped_coriolis(p, q, qd),
        gravity=lambda q: biped_gravity(p, q),
        input_map_actuated=lambda q: Y_u,
        input_map_embedding=lambda q: Y_emb,
    )


def _point_rhs(p: BipedParams, x, ue):
    # scalar path for the sequential integrators; M has a structural zero at (1, 2)
    t1, t2, t3, w1, w2, w3 = x.tolist()
    u1, u2, ue3 = ue.tolist()
    s12, c12 = math.sin(t1 - t2), math.cos(t1 - t2)
    s13, c13 = math.sin(t1 - t3), math.cos(t1 - t3)
    a2 = 0.5 * p.m * p.r**2
    b2 = p.M_T * p.r * p.l
    m11 = (1.25 * p.m + p.M_H + p.M_T) * p.r**2
    m12 = -a2 * c12
    m13 = b2 * c13
    m22 = 0.25 * p.m * p.r**2
    m33 = p.M_T * p.l**2
    r1 = -u1 - (-a2 * s12 * w2 * w2 + b2 * s13 * w3 * w3) \
        + 0.5 * p.g * (2 * p.M_H + 3 * p.m + 2 * p.M_T) * p.r * math.sin(t1)
    r2 = -u2 - a2 * s12 * w1 * w1 - 0.5 * p.g * p.m * p.r * math.sin(t2)
    r3 = u1 + u2 + ue3 + b2 * s13 * w1 * w1 + p.g * p.M_T * p.l * math.sin(t3)
    det = m11 * m22 * m33 - m12 * m12 * m33 - m13 * m13 * m22
    if det == 0.0:
        raise SingularMassMatrixError("mass matrix is singular at the requested configuration")
    a1 = (r1 * m22 * m33 - m12 * r2 * m33 - m13 * m22 * r3) / det
    a2_ = (r2 - m12 * a1) / m22
    a3 = (r3 - m13 * a1) / m33
    return np.array([w1, w2, w3, a1, a2_, a3])


@dataclass(frozen=True)
class BipedSystem(HybridSystem):
    params: BipedParams = field(default_factory=BipedParams)

    def vector_field(self, embedded: bool = False):
        generic = HybridSystem.vector_field(self, embedded)
        p = self.params

        def f(x, u):
            x = np.asarray(x)
            u = np.asarray(u)
            if x.ndim == 1 and u.ndim == 1:
                ue = u if embedded else np.append(u, 0.0)
                if ue.shape != (3,) or x.shape != (6,):
                    return generic(x, u)
                return _point_rhs(p, x, ue)
            return generic(x, u)

        def jacobian(x, u):
            u = np.asarray(u, dtype=float)
            ue = u if embedded else np.concatenate([u, np.zeros(u.shape[:-1] + (1,))], axis=-1)
            A, B = biped_state_jacobian(p, x, ue)
            return A, B[..., : u.shape[-1]]

        f.jacobian = jacobian
        return f

    def energy(self, x):
        return biped_energy(self.params, x)


def make_biped_system(p: BipedParams | None = None) -> BipedSystem:
    p = p or BipedParams()
    return BipedSystem(
        model=biped_model(p),
        guard=lambda x: np.asarray(x)[..., 0] - p.theta1_jmp,
        jump=lambda x: biped_jump(p, x),
        inverse_jump=lambda x: biped_inverse_jump(p, x),
        params=p,
    )
