import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from ldpkit.determlimit import BlowUpError, vector_field
from ldpkit.ldp import (
    ActionOptions,
    DiscretePath,
    MomentumOverflowError,
    PhasePoint,
    UnattainableVelocityError,
    hamilton_rhs,
    hamiltonian,
    integrate_hamilton,
    lagrangian,
    lagrangian_batch,
    legendre_momentum,
    minimize_action,
    path_action,
)
from ldpkit.model import birth_death_spec, hybrid_spec, ou_spec

from conftest import two_species_network


def direct_hamiltonian(spec, z, y):
    """Independent oracle: enumerate every directed channel explicitly."""
    dd = spec.drift_diffusion
    H = (dd.A0 + dd.A1 @ z) @ y + y @ dd.D @ y
    for ch in spec.channels:
        for law, sign in ((ch.forward, 1.0), (ch.backward, -1.0)):
            if law.kind == "constant":
                r = law.k
            else:
                r = law.k * np.prod(z ** law.order)
            H += r * (np.exp(sign * ch.nu @ y) - 1.0)
    return H


def test_hamiltonian_known_values(ou, bd):
    assert hamiltonian(ou, [1.0], [1.0]) == 0.0  # -1 + 1
    assert hamiltonian(bd, [1.0], [np.log(2.0)]) == pytest.approx(1.5, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(
    z=st.lists(st.floats(0.0, 4.0), min_size=2, max_size=2),
    y=st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=2),
)
def test_hamiltonian_matches_direct_sum(z, y):
    spec = two_species_network()
    z, y = np.array(z), np.array(y)
    assert hamiltonian(spec, z, y) == pytest.approx(direct_hamiltonian(spec, z, y), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(z=st.floats(0.0, 10.0))
def test_hamiltonian_vanishes_at_zero_momentum(z):
    for spec in (ou_spec(), birth_death_spec(), hybrid_spec()):
        assert hamiltonian(spec, [z], [0.0]) == 0.0


def test_hamilton_rhs_matches_finite_differences(net2):
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(20):
        z = rng.uniform(0.2, 3.0, 2)
        y = rng.uniform(-1.0, 1.0, 2)
        dz, dy = hamilton_rhs(net2, PhasePoint(z, y))
        fd_y = [(hamiltonian(net2, z, y + h * e) - hamiltonian(net2, z, y - h * e)) / (2 * h) for e in np.eye(2)]
        fd_z = [(hamiltonian(net2, z + h * e, y) - hamiltonian(net2, z - h * e, y)) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(dz, fd_y, rtol=1e-7, atol=1e-8)
        np.testing.assert_allclose(dy, -np.array(fd_z), rtol=1e-7, atol=1e-8)


def test_hamilton_rhs_ou_value(ou):
    dz, dy = hamilton_rhs(ou, PhasePoint([1.0], [0.5]))
    assert dz[0] == 0.0 and dy[0] == 0.5


def test_zero_momentum_slice_is_deterministic_limit(net2, hybrid):
    for spec, z in ((net2, [0.4, 1.3]), (hybrid, [2.7])):
        dz, dy = hamilton_rhs(spec, PhasePoint(z, np.zeros_like(z)))
        assert np.array_equal(dz, vector_field(spec, z))
        assert np.all(dy == 0)


def test_birth_death_zero_energy_manifold(bd):
    # y = ln(z/2) solves H = 0; at z = 1 the velocity is 2 e^y - z e^{-y} = 1 - 2
    z0, y0 = 1.0, np.log(0.5)
    assert abs(hamiltonian(bd, [z0], [y0])) < 1e-15
    dz, _ = hamilton_rhs(bd, PhasePoint([z0], [y0]))
    assert dz[0] == pytest.approx(-1.0, abs=1e-14)
    flow = integrate_hamilton(bd, PhasePoint([z0], [y0]), 0.5, 1e-3)
    np.testing.assert_allclose(flow.y[:, 0], np.log(flow.z[:, 0] / 2.0), atol=1e-8)
    assert flow.max_energy_drift < 1e-9


def test_birth_death_uphill_manifold_blows_up(bd):
    with pytest.raises(BlowUpError):
        integrate_hamilton(bd, PhasePoint([1.0], [np.log(0.5)]), 5.0, 1e-3)


def test_momentum_overflow_is_reported(bd):
    with pytest.raises(MomentumOverflowError):
        hamiltonian(bd, [1.0], [800.0])


def test_ou_instanton_energy(ou):
    # z'' = z on the uphill branch y = z
    flow = integrate_hamilton(ou, PhasePoint([0.1], [0.1]), 2.0, 1e-3)
    np.testing.assert_allclose(flow.z[:, 0], 0.1 * np.exp(flow.times), rtol=1e-10)


def test_legendre_ou_closed_form(ou):
    for z, v in ((1.0, 0.0), (1.0, 1.0), (-0.5, 2.0)):
        assert lagrangian(ou, [z], [v]) == pytest.approx((v + z) ** 2 / 4.0, abs=1e-12)
        assert legendre_momentum(ou, [z], [v])[0] == pytest.approx((v + z) / 2.0, abs=1e-12)


def test_legendre_matches_scalar_optimizer(bd):
    for z, v in ((1.0, 0.3), (2.5, -1.0), (0.4, 3.0)):
        res = minimize_scalar(lambda y: -(y * v - hamiltonian(bd, [z], [y])), bounds=(-20, 20), method="bounded", options={"xatol": 1e-12})
        assert lagrangian(bd, [z], [v]) == pytest.approx(-res.fun, abs=1e-9)


def test_unattainable_velocity():
    pure_birth = birth_death_spec(2.0, 0.0)
    with pytest.raises(UnattainableVelocityError):
        lagrangian(pure_birth, [1.0], [-0.5])


@settings(max_examples=150, deadline=None)
@given(z=st.floats(0.05, 5.0), v=st.floats(-3.0, 3.0))
def test_lagrangian_nonnegative_and_zero_on_flow(z, v):
    spec = hybrid_spec()
    L = lagrangian(spec, [z], [v])
    assert L >= -1e-12
    F = vector_field(spec, [z])[0]
    assert lagrangian(spec, [z], [F]) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(z=st.lists(st.floats(0.1, 3.0), min_size=2, max_size=2), y=st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2))
def test_legendre_round_trip(z, y):
    spec = two_species_network()
    z, y = np.array(z), np.array(y)
    v, _ = hamilton_rhs(spec, PhasePoint(z, y))
    np.testing.assert_allclose(legendre_momentum(spec, z, v), y, atol=1e-8)
    assert lagrangian(spec, z, v) == pytest.approx(y @ v - hamiltonian(spec, z, y), abs=1e-9)


def test_lagrangian_batch_matches_scalar(net2):
    rng = np.random.default_rng(4)
    Z = rng.uniform(0.2, 2.0, (30, 2))
    V = rng.uniform(-1.0, 1.0, (30, 2))
    batch = lagrangian_batch(net2, Z, V)
    np.testing.assert_allclose(batch, [lagrangian(net2, z, v) for z, v in zip(Z, V)], rtol=1e-12)


def test_path_action_rules_match_closed_form(ou):
    T, N = 2.0, 40
    t = np.linspace(0, T, N + 1)
    z = np.sin(t)
    dt = T / N
    v = np.diff(z) / dt
    left = np.sum((v + z[:-1]) ** 2 / 4.0) * dt
    mid = np.sum((v + 0.5 * (z[1:] + z[:-1])) ** 2 / 4.0) * dt
    path = DiscretePath(t, z)
    assert path_action(ou, path, rule="left") == pytest.approx(left, rel=1e-12)
    assert path_action(ou, path) == pytest.approx(mid, rel=1e-12)
    with pytest.raises(ValueError):
        path_action(ou, path, rule="simpson")


def test_deterministic_path_has_zero_action(ou):
    t = np.linspace(0, 3, 3001)
    # midpoint rule is exact to O(dt^2) on z = e^{-t}
    assert path_action(ou, DiscretePath(t, np.exp(-t))) < 1e-6


def test_discrete_path_validation():
    with pytest.raises(ValueError):
        DiscretePath([0.0, 1.0, 3.0], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        DiscretePath([0.1, 1.1], [0.0, 1.0])


def test_minimize_action_birth_death_uphill(bd):
    # quasipotential difference between z=2 and z=3 for relative entropy with z_ss=2
    expected = 3 * np.log(1.5) - 1.0
    res = minimize_action(bd, [2.0], [3.0], 10.0, 100, ActionOptions(gtol=1e-7))
    assert res.converged
    assert res.action == pytest.approx(expected, rel=0.02)
    assert res.history == sorted(res.history, reverse=True)


def test_minimize_action_respects_max_iters(ou):
    res = minimize_action(ou, [0.0], [1.0], 10.0, 50, ActionOptions(max_iters=3))
    assert not res.converged and res.iters == 3


@pytest.mark.parametrize("T", [1.0, 2.0, 4.0])
def test_minimum_action_matches_finite_horizon_closed_form(ou, T):
    # optimal path sinh(t)/sinh(T) costs 1 / (2 (1 - e^{-2T})), the transient rate function at z = 1
    res = minimize_action(ou, [0.0], [1.0], T, 100)
    assert res.converged
    assert res.action == pytest.approx(1.0 / (2.0 * (1.0 - np.exp(-2.0 * T))), rel=1e-3)
    t = res.path.times
    np.testing.assert_allclose(res.path.states[:, 0], np.sinh(t) / np.sinh(T), atol=1e-3)


def test_minimum_action_decreases_towards_quasipotential(ou):
    actions = [minimize_action(ou, [0.0], [1.0], T, 100).action for T in (1.0, 3.0, 6.0)]
    assert actions[0] > actions[1] > actions[2] > 0.5
    assert actions[2] == pytest.approx(0.5, rel=1e-3)
