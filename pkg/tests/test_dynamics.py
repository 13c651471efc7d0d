import numpy as np
import pytest

from orbitdesign.biped import BipedParams, biped_mass_matrix, impact_matrix_A, make_biped_system
from orbitdesign.dynamics import (HybridSystem, MechanicalModel, continuous_dynamics, embedded_dynamics,
                                  guard_distance, inverse_jump_map, jump_map)
from orbitdesign.errors import SingularMassMatrixError
from orbitdesign.modelcheck import random_states

X0 = np.deg2rad([-22.5, 22.5, 20.0, 50.0, 0.0, 90.0])
# symbolic Lagrangian evaluated at X0 with u = 0 (independent sympy derivation, frozen)
QDD_X0 = np.array([-6.2617271099843049, -15.286683129828497, 14.914711457626340])


@pytest.fixture(scope="module")
def sys():
    return make_biped_system()


def test_rest_state_is_equilibrium(sys):
    assert np.allclose(continuous_dynamics(sys, np.zeros(6), np.zeros(2)), 0.0, atol=0)


def test_top_block_is_velocity(sys):
    x = np.array([0, 0, 0, 1.0, 2.0, 3.0])
    out = continuous_dynamics(sys, x, np.array([4.0, -7.0]))
    assert np.array_equal(out[:3], [1.0, 2.0, 3.0])


def test_accelerations_at_initial_state(sys):
    out = continuous_dynamics(sys, X0, np.zeros(2))
    assert np.allclose(out[3:], QDD_X0, rtol=1e-12, atol=1e-12)


def test_embedding_unit_torque_at_rest(sys):
    out = embedded_dynamics(sys, np.zeros(6), np.zeros(2), np.array([1.0]))
    assert np.allclose(out[3:], np.array([-8.0, -16.0, 42.0]) / 65.0, rtol=1e-13)


def test_zero_embedding_input_matches_underactuated(sys):
    rng = np.random.default_rng(5)
    for x in random_states(rng, 20):
        u = rng.normal(size=2)
        assert np.allclose(embedded_dynamics(sys, x, u, np.zeros(1)), continuous_dynamics(sys, x, u), rtol=1e-14)


def test_control_affine_consistency(sys):
    rng = np.random.default_rng(6)
    for x in random_states(rng, 100):
        u, w = rng.normal(size=2) * 20, rng.normal(size=1) * 20
        expected = sys.drift(x) + sys.input_field(x) @ u + sys.embedding_field(x) @ w
        assert np.abs(embedded_dynamics(sys, x, u, w) - expected).max() < 1e-10
        assert np.abs(embedded_dynamics(sys, x, u, w) - continuous_dynamics(sys, x, u)
                      - sys.embedding_field(x) @ w).max() < 1e-10


def test_mass_matrix_invariants():
    rng = np.random.default_rng(7)
    p = BipedParams()
    M = biped_mass_matrix(p, rng.uniform(-np.pi / 2, np.pi / 2, (100, 3)))
    assert np.abs(M - np.swapaxes(M, 1, 2)).max() < 1e-12
    assert np.linalg.eigvalsh(M).min() > 0


def test_coriolis_vanishes_at_rest(sys):
    rng = np.random.default_rng(8)
    for th in rng.uniform(-np.pi / 2, np.pi / 2, (100, 3)):
        assert np.all(sys.model.coriolis(th, np.zeros(3)) == 0.0)


def test_stacked_input_map_invertible(sys):
    assert abs(np.linalg.det(sys.model.input_map(np.zeros(3)))) > 0.5


def test_wrong_input_size_rejected(sys):
    with pytest.raises(ValueError):
        continuous_dynamics(sys, X0, np.zeros(3))
    with pytest.raises(ValueError):
        embedded_dynamics(sys, X0, np.zeros(2), np.zeros(2))


def test_singular_mass_matrix_raises():
    model = MechanicalModel(dof=2, n_act=1, mass=lambda q: np.zeros((2, 2)), coriolis=lambda q, qd: np.zeros(2),
                            gravity=lambda q: np.zeros(2), input_map_actuated=lambda q: np.array([[1.0], [0.0]]),
                            input_map_embedding=lambda q: np.array([[0.0], [1.0]]))
    toy = HybridSystem(model=model, guard=lambda x: x[0], jump=lambda x: x, inverse_jump=lambda x: x)
    with pytest.raises(SingularMassMatrixError):
        continuous_dynamics(toy, np.zeros(4), np.zeros(1))


def test_guard_distance_values(sys):
    x = X0.copy()
    assert guard_distance(sys, x) == pytest.approx(-np.pi / 4, abs=1e-15)
    x[0] = np.pi / 8
    assert guard_distance(sys, x) == 0.0


def test_guard_sign_change_brackets_crossing(sys):
    thetas = np.linspace(0.0, 0.6, 61)
    xs = np.zeros((61, 6))
    xs[:, 0] = thetas
    d = guard_distance(sys, xs)
    k = int(np.argmax(d >= 0))
    assert d[k - 1] < 0 <= d[k]
    assert thetas[k - 1] < np.pi / 8 <= thetas[k]


def test_jump_structure(sys):
    rng = np.random.default_rng(9)
    for x in random_states(rng, 20):
        x[0] = np.pi / 8
        xp = jump_map(sys, x)
        assert np.array_equal(xp[:3], x[[1, 0, 2]])
        A = impact_matrix_A(sys.params, x[:3])
        assert A[0, 2] == 0 and A[1, 2] == 0 and A[2, 2] == 1.0
        assert np.allclose(xp[3:], A @ x[3:], rtol=1e-14)


def test_jump_roundtrip_on_guard(sys):
    rng = np.random.default_rng(10)
    pre = random_states(rng, 100, angle=np.pi / 3)
    pre[:, 0] = np.pi / 8  # on the jump set
    post = random_states(rng, 100, angle=np.pi / 3)
    post[:, 1] = np.pi / 8  # images of jump-set states after relabelling
    for x in pre:
        assert np.abs(inverse_jump_map(sys, jump_map(sys, x)) - x).max() < 1e-10
    for x in post:
        assert np.abs(jump_map(sys, inverse_jump_map(sys, x)) - x).max() < 1e-10


def test_jump_off_guard_warns(sys):
    with pytest.warns(RuntimeWarning, match="jump set"):
        jump_map(sys, X0)
