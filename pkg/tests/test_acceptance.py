"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected in ``RESULTS`` and echoed in pytest's terminal
summary (see conftest.py).  Run directly with ``python3 tests/test_acceptance.py``.
"""
import sys
import time

import numpy as np
import pytest

from ldpkit.determlimit import OdeConfig, integrate_ode, vector_field
from ldpkit.ldp import (
    ActionOptions,
    PhasePoint,
    hamilton_rhs,
    hamiltonian,
    integrate_hamilton,
    legendre_momentum,
    minimize_action,
)
from ldpkit.master_cit import (
    MasterEquationSpec,
    affinity_coefficients,
    evolve_master,
    relative_entropy,
    stationary_distribution,
)
from ldpkit.model import birth_death_spec, hybrid_spec, make_spec, ou_spec
from ldpkit.quasipotential import (
    RelativeEntropyRate,
    gaussian_quadratic,
    lyapunov_scan,
    ou_quadratic,
    residual_scan,
    transient_hje_residual,
)
from ldpkit.simulate import SimConfig, empirical_rate_function, ensemble_histogram, ensemble_mean, sample_states
from ldpkit.thermo import cit_extension_field, cit_sigma, entropy_decomposition

sys.path.insert(0, __file__.rsplit("/", 1)[0])
from conftest import cycle_network, ou_2d  # noqa: E402

RESULTS = []

OU = ou_spec(1.0, 1.0)
BD = birth_death_spec(2.0, 1.0)


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1 ----------------------------------------------------------------------


def _ou_rate_deviation(eps, n_paths, seed):
    cfg = SimConfig(eps, 5.0, 0.01, n_paths, seed=seed)
    x = sample_states(OU, [0.0], cfg, [5.0])[0]
    hist = ensemble_histogram(x, 5.0, bins=60, ranges=[(-1.5, 1.5)], epsilon=eps)
    est = empirical_rate_function(hist, min_count=100)
    z = est.points[:, 0]
    return float(np.max(np.abs(est.phi - z**2 / 2))), z.size


@pytest.mark.slow
def test_01_ou_rate_function_convergence():
    t0 = time.perf_counter()
    dev_small, nb_small = _ou_rate_deviation(0.05, 1_000_000, seed=1)
    dev_large, nb_large = _ou_rate_deviation(0.2, 250_000, seed=2)
    elapsed = time.perf_counter() - t0
    ok = dev_small <= 0.1 and dev_small < dev_large and elapsed <= 300
    report(
        1,
        "OU rate-function convergence",
        ok,
        f"eps=0.05 max dev {dev_small:.4f} ({nb_small} bins) < eps=0.2 max dev {dev_large:.4f} ({nb_large} bins); {elapsed:.1f}s",
    )


# 2 ----------------------------------------------------------------------


def test_02_transient_ou_hje():
    t0 = time.perf_counter()
    Z, T = np.meshgrid(np.linspace(-3, 3, 10), np.linspace(0.05, 5, 10))
    res = max(abs(float(transient_hje_residual(1.0, 1.0, z, t))) for z, t in zip(Z.ravel(), T.ravel()))
    elapsed = time.perf_counter() - t0
    report(2, "transient OU HJE", res <= 1e-10 and elapsed < 1, f"max |residual| {res:.2e} on 100 (z,t) points; {elapsed:.3f}s")


# 3 ----------------------------------------------------------------------


def test_03_stationary_hje():
    t0 = time.perf_counter()
    r_bd = np.max(np.abs(residual_scan(BD, RelativeEntropyRate([2.0]), np.linspace(0.1, 5.0, 200))))
    r_ou = np.max(np.abs(residual_scan(OU, ou_quadratic(1.0, 1.0), np.linspace(-5.0, 5.0, 200))))
    elapsed = time.perf_counter() - t0
    ok = r_bd <= 1e-12 and r_ou <= 1e-12 and elapsed < 1
    report(3, "stationary HJE", ok, f"birth-death {r_bd:.2e}, OU {r_ou:.2e}; {elapsed:.3f}s")


# 4 ----------------------------------------------------------------------


def test_04_lyapunov_property():
    rng = np.random.default_rng(4)
    worst, strict = -np.inf, True
    for spec, cand, z_fp, z0s in (
        (OU, ou_quadratic(1.0, 1.0), 0.0, rng.uniform(-3.0, 3.0, 20)),
        (BD, RelativeEntropyRate([2.0]), 2.0, rng.uniform(0.05, 6.0, 20)),
    ):
        for z0 in z0s:
            traj = integrate_ode(spec, [z0], OdeConfig(10.0, 1e-2))
            scan = lyapunov_scan(spec, cand, traj)
            worst = max(worst, scan.max_dphi_dt)
            away = np.abs(traj.states[:, 0] - z_fp) > 1e-8
            strict &= bool(np.all(scan.dphi_dt[away] < 0))
    report(4, "Lyapunov property", worst <= 1e-12 and strict, f"max dphi/dt {worst:.2e}; strictly negative away from fixed points: {strict}")


# 5 ----------------------------------------------------------------------


def test_05_hamiltonian_structure():
    rng = np.random.default_rng(5)
    specs = (OU, BD, hybrid_spec())
    h0 = max(abs(hamiltonian(s, [z], [0.0])) for s in specs for z in rng.uniform(0.0, 6.0, 100))
    slice_err = 0.0
    for s in specs:
        for z in rng.uniform(0.0, 6.0, 100):
            dz, _ = hamilton_rhs(s, PhasePoint([z], [0.0]))
            slice_err = max(slice_err, float(np.max(np.abs(dz - vector_field(s, [z])))))
    drift_ou = integrate_hamilton(OU, PhasePoint([0.5], [0.3]), 5.0, 1e-3).max_energy_drift
    drift_bd = integrate_hamilton(BD, PhasePoint([1.0], [0.3]), 5.0, 1e-3).max_energy_drift
    rt = 0.0
    for s in specs:
        for z, y in zip(rng.uniform(0.1, 5.0, 1000), rng.uniform(-2.0, 2.0, 1000)):
            v, _ = hamilton_rhs(s, PhasePoint([z], [y]))
            rt = max(rt, abs(legendre_momentum(s, [z], v)[0] - y))
    ok = h0 == 0.0 and slice_err <= 1e-14 and drift_ou <= 1e-6 and drift_bd <= 1e-6 and rt <= 1e-8
    report(
        5,
        "Hamiltonian structure",
        ok,
        f"|H(z,0)| {h0:.1e}; y=0 slice vs F {slice_err:.1e}; H-drift OU {drift_ou:.1e}, birth-death {drift_bd:.1e}; "
        f"Legendre round-trip {rt:.1e}",
    )


# 6 ----------------------------------------------------------------------


def test_06_least_action():
    res = minimize_action(OU, [0.0], [1.0], 10.0, 200, ActionOptions())
    z = res.path.states[:, 0]
    dt = res.path.dt
    zdd = (z[2:] - 2 * z[1:-1] + z[:-2]) / dt**2
    ode_err = float(np.max(np.abs(zdd - z[1:-1])))
    rel = abs(res.action - 0.5) / 0.5
    report(
        6,
        "least action OU 0->1",
        rel <= 0.02 and ode_err <= 0.05,
        f"action {res.action:.6f} (rel err {rel:.1e}); max |z'' - z| {ode_err:.1e}; {res.iters} iterations",
    )


# 7 ----------------------------------------------------------------------


def test_07_entropy_decomposition():
    rng = np.random.default_rng(7)
    spec = hybrid_spec(1.0, 1.0, 2.0, 1.0)
    cand = RelativeEntropyRate([1.0])  # fixed point of -z + 2 - z
    worst_id, min_prod = 0.0, np.inf
    for z in rng.uniform(0.05, 5.0, 100):
        t = entropy_decomposition(spec, cand, [z])
        worst_id = max(worst_id, abs(t.identity_residual))
        min_prod = min(min_prod, t.entropy_production)
    # equilibrium: A = -(z - 2) and birth-death both vanish at z = 2, where U = G = phi_ss are stationary
    eq_specs = (
        (OU, ou_quadratic(1.0, 1.0), [0.0]),
        (BD, RelativeEntropyRate([2.0]), [2.0]),
        (make_spec(1, BD.channels, A0=[2.0], A1=[[-1.0]], D=[[1.0]]), RelativeEntropyRate([2.0]), [2.0]),
    )
    eq = max(max(abs(v) for v in entropy_decomposition(s, c, z).as_dict().values()) for s, c, z in eq_specs)
    ok = worst_id <= 1e-10 and min_prod >= 0 and eq == 0.0
    report(7, "entropy decomposition", ok, f"identity residual {worst_id:.1e}; min production {min_prod:.2e}; max term at equilibrium {eq:.1e}")


# 8 ----------------------------------------------------------------------


def test_08_sigma_decomposition():
    rng = np.random.default_rng(8)
    lin2 = ou_2d()
    cases = (
        (BD, RelativeEntropyRate([2.0]), lambda: rng.uniform(0.05, 6.0, 1)),
        (OU, ou_quadratic(1.0, 1.0), lambda: rng.uniform(-3.0, 3.0, 1)),
        (cycle_network(), RelativeEntropyRate([1.0, 1.0, 1.0]), lambda: rng.uniform(0.05, 3.0, 3)),
        (lin2, gaussian_quadratic(lin2), lambda: rng.normal(size=2)),
    )
    split_err, min_s1, ext_exact, max_ext = 0.0, np.inf, True, -np.inf
    for spec, cand, draw in cases:
        n = spec.dimension
        for _ in range(1000):
            z = draw()
            g = cand.gradient(z)
            F = vector_field(spec, z)
            s1, s2 = cit_sigma(spec, cand, z)
            split_err = max(split_err, abs(F @ g + s1 + s2))
            min_s1 = min(min_s1, s1)
            ext_exact &= bool(np.array_equal(cit_extension_field(spec, cand, spec.drift_diffusion.D, z), F))
            B = rng.normal(size=(n, n))
            max_ext = max(max_ext, float(cit_extension_field(spec, cand, B @ B.T, z) @ g))
    ok = split_err <= 1e-10 and min_s1 >= 0 and ext_exact and max_ext <= 1e-12
    report(
        8,
        "sigma decomposition",
        ok,
        f"|dphi/dt + s1 + s2| {split_err:.1e}; min s1 {min_s1:.2e}; M=D gives F exactly: {ext_exact}; "
        f"max dphi/dt under random PSD M {max_ext:.2e}",
    )


# 9 ----------------------------------------------------------------------


def test_09_master_equation_cit():
    two = MasterEquationSpec([[0.0, 1.0], [2.0, 0.0]])
    pi_err = float(np.max(np.abs(stationary_distribution(two) - [2 / 3, 1 / 3])))
    cycle = MasterEquationSpec([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    pi_c = stationary_distribution(cycle)
    traj = evolve_master(cycle, [0.8, 0.15, 0.05], 10.0, 1e-3)
    kl = np.array([relative_entropy(p, pi_c) for p in traj.p])
    kl_rise = float(np.max(np.diff(kl)))
    pi = np.array([0.5, 0.3, 0.2])
    s = np.array([[0.0, 0.4, 0.1], [0.4, 0.0, 0.3], [0.1, 0.3, 0.0]])
    reversible = MasterEquationSpec(s / pi[:, None])
    ps = np.random.default_rng(9).dirichlet(np.ones(3), size=1000)
    db_ok = all(affinity_coefficients(reversible, p / p.sum()).M_tilde_positive for p in ps)
    cyc_ok = all(affinity_coefficients(cycle, p / p.sum()).M_tilde_positive for p in ps)
    ok = pi_err <= 1e-12 and kl_rise <= 1e-10 and db_ok and not cyc_ok
    report(
        9,
        "master-equation CIT",
        ok,
        f"pi error {pi_err:.1e}; max KL increase {kl_rise:.1e}; M~ > 0 detailed-balanced: {db_ok}, cycle: {cyc_ok}",
    )


# 10 ---------------------------------------------------------------------


def test_10_kurtz_limit():
    t0 = time.perf_counter()
    times = [1.0, 2.0, 5.0]
    cfg = SimConfig(0.01, 5.0, 0.01, 10_000, seed=0)
    x = sample_states(BD, [0.0], cfg, times)
    ode = integrate_ode(BD, [0.0], OdeConfig(5.0, 1e-3))
    zs = []
    for j, t in enumerate(times):
        m, se = ensemble_mean(x[j])
        zs.append(float((m[0] - ode.at(t)[0]) / se[0]))
    elapsed = time.perf_counter() - t0
    ok = max(abs(z) for z in zs) <= 3 and elapsed <= 60
    report(10, "Kurtz limit", ok, "z-scores " + ", ".join(f"t={t:g}: {z:+.2f}" for t, z in zip(times, zs)) + f"; {elapsed:.1f}s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
