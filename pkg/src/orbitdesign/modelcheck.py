"""Model invariant suites for the biped, run by ``orbitdesign check-model``.

The closed-form matrices in :mod:`orbitdesign.biped` are compared with an
independent construction from point-mass kinematics: each mass sits at
``sum_i c_i (sin th_i, cos th_i)`` relative to the stance foot, so the
position Jacobians and their derivatives are exact, the mass matrix is
``sum m J^T J``, Coriolis terms follow from the Christoffel symbols and the
impact map from the impulse balance of the 5-dof model with a free stance
foot.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional

import numpy as np

from .biped import (RELABEL, BipedParams, biped_coriolis, biped_energy, biped_gravity, biped_jump,
                    biped_inverse_jump, biped_mass_matrix, biped_state_jacobian, impact_matrix_A,
                    make_biped_system)
from .integration import TimeGrid, finite_diff_jacobian, integrate

GAIT_X0_DEG = (-22.5, 22.5, 20.0, 50.0, 0.0, 90.0)
MASS_AT_ZERO = np.array([[31.25, -2.5, 5.0], [-2.5, 1.25, 0.0], [5.0, 0.0, 2.5]])


def _points(p: BipedParams):
    """``(mass, coeffs)`` per body and the swing-foot coefficients.

    ``coeffs[i]`` multiplies ``(sin th_i, cos th_i)``.
    """
    r, l = p.r, p.l
    bodies = [
        (p.m, (r / 2, 0.0, 0.0)),  # stance leg
        (p.M_H, (r, 0.0, 0.0)),  # hip
        (p.m, (r, -r / 2, 0.0)),  # swing leg
        (p.M_T, (r, 0.0, l)),  # torso
    ]
    return bodies, (r, -r, 0.0)


def _jac(coeffs, th):
    """Position Jacobian ``(..., 2, 3)`` of ``sum c_i (sin th_i, cos th_i)``."""
    c = np.asarray(coeffs)
    return np.stack([c * np.cos(th), -c * np.sin(th)], axis=-2)


def _djac(coeffs, th, k):
    """Derivative of :func:`_jac` with respect to ``th_k``."""
    c = np.asarray(coeffs)
    dJ = np.zeros(np.shape(th)[:-1] + (2, 3))
    dJ[..., 0, k] = -c[k] * np.sin(th[..., k])
    dJ[..., 1, k] = -c[k] * np.cos(th[..., k])
    return dJ


def _JtJ(J):
    return np.swapaxes(J, -1, -2) @ J


def oracle_mass_matrix(p: BipedParams, th) -> np.ndarray:
    th = np.asarray(th, dtype=float)
    bodies, _ = _points(p)
    return sum(m * _JtJ(_jac(c, th)) for m, c in bodies)


def _mass_derivative(p: BipedParams, th) -> np.ndarray:
    """``dM[..., k, :, :] = dM/dth_k``."""
    bodies, _ = _points(p)
    dM = np.zeros(th.shape[:-1] + (3, 3, 3))
    for m, c in bodies:
        J = _jac(c, th)
        for k in range(3):
            dJ = _djac(c, th, k)
            sym = np.swapaxes(dJ, -1, -2) @ J
            dM[..., k, :, :] += m * (sym + np.swapaxes(sym, -1, -2))
    return dM


def oracle_coriolis(p: BipedParams, th, w) -> np.ndarray:
    dM = _mass_derivative(p, np.asarray(th, dtype=float))
    w = np.asarray(w, dtype=float)
    # c_i = sum_jk (dM_ij/dq_k - 1/2 dM_jk/dq_i) w_j w_k
    return (np.einsum("...kij,...j,...k->...i", dM, w, w)
            - 0.5 * np.einsum("...ijk,...j,...k->...i", dM, w, w))


def oracle_potential(p: BipedParams, th):
    bodies, _ = _points(p)
    return sum(p.g * m * np.cos(th) @ np.asarray(c) for m, c in bodies)


def oracle_gravity(p: BipedParams, th) -> np.ndarray:
    bodies, _ = _points(p)
    return sum(-p.g * m * np.asarray(c) * np.sin(th) for m, c in bodies)


def oracle_impact_matrix(p: BipedParams, th) -> np.ndarray:
    """Relabelled post-impact velocity map from the 5-dof impulse balance."""
    th = np.asarray(th, dtype=float)
    batch = th.shape[:-1]
    bodies, foot = _points(p)
    eye = np.broadcast_to(np.eye(2), batch + (2, 2))
    De = sum(m * _JtJ(np.concatenate([_jac(c, th), eye], axis=-1)) for m, c in bodies)
    E = np.concatenate([_jac(foot, th), eye], axis=-1)
    K = np.zeros(batch + (7, 7))
    K[..., :5, :5] = De
    K[..., :5, 5:] = -np.swapaxes(E, -1, -2)
    K[..., 5:, :5] = E
    # stance foot at rest before impact: pre-impact generalized velocities are [dth, 0, 0]
    rhs = np.zeros(batch + (7, 3))
    rhs[..., :5, :] = De[..., :, :3]
    return RELABEL @ np.linalg.solve(K, rhs)[..., :3, :]


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    seconds: float
    lower: bool = False  # value must exceed tol instead of staying below it

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        op = ">" if self.lower else "<="
        return f"{status}  {self.name:<26} {self.value:.3e} {op} {self.tol:.1e}  ({self.seconds:.2f}s)"


def _rel(a, b, batched: bool = False) -> float:
    """Largest entrywise error relative to ``max(1, |b|)``, per sample when ``batched``."""
    a, b = np.asarray(a), np.asarray(b)
    if not batched:
        return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))
    axes = tuple(range(1, a.ndim))
    err = np.max(np.abs(a - b), axis=axes) / np.maximum(1.0, np.max(np.abs(b), axis=axes))
    return float(err.max())


def random_states(rng: np.random.Generator, n: int, angle: float = np.pi / 2, rate: float = 5.0) -> np.ndarray:
    return np.hstack([rng.uniform(-angle, angle, (n, 3)), rng.uniform(-rate, rate, (n, 3))])


def check_transcription(p: BipedParams, n_points: int = 1000, seed: int = 0) -> float:
    """Largest relative disagreement of M, C, G and A with the oracle."""
    rng = np.random.default_rng(seed)
    X = random_states(rng, n_points)
    M, C, G, A = (biped_mass_matrix(p, X[:, :3]), biped_coriolis(p, X[:, :3], X[:, 3:]),
                  biped_gravity(p, X[:, :3]), impact_matrix_A(p, X[:, :3]))
    th, w = X[:, :3], X[:, 3:]
    return max(_rel(M, oracle_mass_matrix(p, th), True), _rel(C, oracle_coriolis(p, th, w), True),
               _rel(G, oracle_gravity(p, th), True), _rel(A, oracle_impact_matrix(p, th), True))


def check_mass_at_zero(p: BipedParams) -> float:
    return float(np.max(np.abs(biped_mass_matrix(p, np.zeros(3)) - MASS_AT_ZERO)))


def check_mass_positive(p: BipedParams, n_points: int = 1000, seed: int = 1) -> float:
    """Smallest eigenvalue of M over random configurations (zero if M is not symmetric)."""
    rng = np.random.default_rng(seed)
    M = biped_mass_matrix(p, rng.uniform(-np.pi, np.pi, (n_points, 3)))
    if not np.array_equal(M, np.swapaxes(M, -1, -2)):
        return 0.0
    return float(np.linalg.eigvalsh(M).min())


def check_energy(p: BipedParams, T: float = 1.53, N: int = 2000) -> float:
    sys = make_biped_system(p)
    x0 = np.deg2rad(GAIT_X0_DEG)
    grid = TimeGrid(T, N)
    traj = integrate(sys.vector_field(), x0, np.zeros((N + 1, 2)), grid)
    E = biped_energy(p, traj.x)
    return float(np.max(np.abs(E - E[0])) / abs(E[0]))


def check_jump_roundtrip(p: BipedParams, n_points: int = 100, seed: int = 2) -> float:
    rng = np.random.default_rng(seed)
    pre = random_states(rng, n_points, angle=np.pi / 3)
    pre[:, 0] = p.theta1_jmp
    post = random_states(rng, n_points, angle=np.pi / 3)
    post[:, 1] = p.theta1_jmp
    fwd = biped_inverse_jump(p, biped_jump(p, pre))
    back = biped_jump(p, biped_inverse_jump(p, post))
    return max(float(np.max(np.abs(fwd - pre))), float(np.max(np.abs(back - post))))


def check_final_state(p: BipedParams) -> float:
    """Angle block of ``x_f`` for the gait initial state, in degrees."""
    xf = biped_inverse_jump(p, np.deg2rad(GAIT_X0_DEG))
    target = np.array([np.rad2deg(p.theta1_jmp), -np.rad2deg(p.theta1_jmp), GAIT_X0_DEG[2]])
    return float(np.max(np.abs(np.rad2deg(xf[:3]) - target)))


def check_state_jacobian(p: BipedParams, n_points: int = 20, seed: int = 3) -> float:
    """Hand-derived state Jacobians against central differences."""
    rng = np.random.default_rng(seed)
    f = make_biped_system(p).vector_field(embedded=True)
    worst = 0.0
    for x in random_states(rng, n_points):
        u = rng.normal(size=3) * 10
        A, B = biped_state_jacobian(p, x, u)
        worst = max(worst, _rel(A, finite_diff_jacobian(lambda z: f(z, u), x)),
                    _rel(B, finite_diff_jacobian(lambda v: f(x, v), u)))
    return worst


SUITES: List[tuple] = [
    # name, function, tolerance, lower bound?
    ("transcription_vs_oracle", check_transcription, 1e-10, False),
    ("mass_matrix_at_zero", check_mass_at_zero, 1e-12, False),
    ("mass_matrix_spd", check_mass_positive, 0.0, True),
    ("energy_conservation", check_energy, 1e-6, False),
    ("jump_roundtrip", check_jump_roundtrip, 1e-10, False),
    ("final_state_angles_deg", check_final_state, 1e-9, False),
    ("state_jacobian_vs_fd", check_state_jacobian, 1e-6, False),
]


def run_model_checks(p: Optional[BipedParams] = None,
                     on_result: Optional[Callable[[CheckResult], None]] = None) -> List[CheckResult]:
    p = p or BipedParams()
    results = []
    for name, fn, tol, lower in SUITES:
        t0 = time.perf_counter()
        value = fn(p)
        passed = bool(value > tol) if lower else bool(value <= tol)
        res = CheckResult(name, value, tol, passed, time.perf_counter() - t0, lower)
        results.append(res)
        if on_result:
            on_result(res)
    return results


def results_to_dicts(results: List[CheckResult]) -> List[dict]:
    return [asdict(r) for r in results]
