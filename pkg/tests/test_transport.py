import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vlasovstab.ensemble import PhaseEnsemble
from vlasovstab.flow import Trajectory, free_flow
from vlasovstab.transport import (
    CapacityError,
    Coupling,
    DegenerateInputError,
    PhaseMetricConfig,
    cost_matrix,
    dobrushin_functional,
    kinetic_q_fixed_point,
    load_coupling,
    loeper_functional,
    renormalized_functional,
    save_coupling,
    wasserstein_entropic,
    wasserstein_exact,
)

P1, P2 = PhaseMetricConfig(p=1), PhaseMetricConfig(p=2)


def _cloud(rng, n, d=2, weights=None):
    w = np.full(n, 1 / n) if weights is None else weights
    return PhaseEnsemble(rng.random((n, d)), rng.standard_normal((n, d)), w)


def brute_force(a, b, p):
    """Minimum over all permutations of the mean pair cost (equal weights)."""
    c = cost_matrix(a, b, p)
    n = len(a)
    best = min(np.sum(c[np.arange(n), list(perm)]) for perm in itertools.permutations(range(n))) / n
    return best ** (1 / p)


def lp_oracle(a, b, p):
    """Independent general-weight oracle: a dense linear program through scipy's simplex interface."""
    from scipy.optimize import linprog

    c = cost_matrix(a, b, p)
    m, n = c.shape
    A = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
    res = linprog(c.ravel(), A_eq=A, b_eq=np.concatenate([a.w, b.w]), bounds=(0, None), method="highs-ds")
    return res.fun ** (1 / p)


def test_identical_clouds():
    rng = np.random.default_rng(0)
    a = _cloud(rng, 8)
    for cfg in (P1, P2):
        dist, plan = wasserstein_exact(a, a, cfg)
        assert dist == 0.0
        np.testing.assert_array_equal(plan.source, plan.target)


def test_single_pair():
    a = PhaseEnsemble([[0.0, 0.0]], [[0.0, 0.0]], [1.0])
    b = PhaseEnsemble([[0.3, 0.0]], [[0.0, 0.0]], [1.0])
    assert abs(wasserstein_exact(a, b, P1)[0] - 0.3) < 1e-15
    assert abs(wasserstein_exact(a, b, P2)[0] - 0.3) < 1e-15


def test_torus_cost_uses_minimal_image():
    a = PhaseEnsemble([[0.05, 0.0]], [[0.0, 0.0]], [1.0])
    b = PhaseEnsemble([[0.95, 0.0]], [[0.0, 0.0]], [1.0])
    assert abs(wasserstein_exact(a, b, P1)[0] - 0.1) < 1e-15


@pytest.mark.parametrize("seed", range(5))
def test_six_particle_brute_force(seed):
    rng = np.random.default_rng(seed)
    a, b = _cloud(rng, 6), _cloud(rng, 6)
    for cfg in (P1, P2):
        assert abs(wasserstein_exact(a, b, cfg)[0] - brute_force(a, b, cfg.p)) < 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_general_weights_against_lp_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    wa = rng.random(5)
    wb = rng.random(7)
    a = _cloud(rng, 5, 3, wa / wa.sum())
    b = _cloud(rng, 7, 3, wb / wb.sum())
    for cfg in (P1, P2):
        dist, plan = wasserstein_exact(a, b, cfg)
        assert abs(dist - lp_oracle(a, b, cfg.p)) < 1e-9
        plan.check(a, b)


@given(st.integers(0, 2**31))
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = _cloud(rng, 5), _cloud(rng, 5), _cloud(rng, 5)
    for cfg in (P1, P2):
        ab = wasserstein_exact(a, b, cfg)[0]
        assert abs(ab - wasserstein_exact(b, a, cfg)[0]) < 1e-12
        assert wasserstein_exact(a, c, cfg)[0] <= ab + wasserstein_exact(b, c, cfg)[0] + 1e-10
        assert ab > 0
    w1 = wasserstein_exact(a, b, P1)[0]
    w2 = wasserstein_exact(a, b, P2)[0]
    # |dx| + |dv| <= sqrt(2) sqrt(|dx|^2 + |dv|^2) pointwise, then Jensen
    assert w1 <= np.sqrt(2) * w2 + 1e-12


def test_zero_iff_equal_as_multisets():
    rng = np.random.default_rng(3)
    a = _cloud(rng, 6)
    perm = rng.permutation(6)
    b = PhaseEnsemble(a.x[perm], a.v[perm], a.w[perm])
    assert wasserstein_exact(a, b, P2)[0] < 1e-15


def test_marginals_and_csv(tmp_path):
    rng = np.random.default_rng(4)
    a, b = _cloud(rng, 9), _cloud(rng, 9)
    _, plan = wasserstein_exact(a, b, P1)
    plan.check(a, b, tol=1e-10)
    save_coupling(plan, tmp_path / "pi.csv")
    back = load_coupling(tmp_path / "pi.csv")
    np.testing.assert_array_equal(back.source, plan.source)
    assert back.mass.tobytes() == plan.mass.tobytes()


def test_capacity():
    rng = np.random.default_rng(5)
    a, b = _cloud(rng, 6), _cloud(rng, 6)
    with pytest.raises(CapacityError, match="entropic"):
        wasserstein_exact(a, b, PhaseMetricConfig(p=1, cap=10))


def test_bad_order():
    with pytest.raises(ValueError):
        PhaseMetricConfig(p=3)


# --- entropic ------------------------------------------------------------------------


@pytest.mark.filterwarnings("ignore:Sinkhorn did not converge")
def test_entropic_identical_envelope():
    rng = np.random.default_rng(6)
    a = _cloud(rng, 32)
    prev = np.inf
    for eps in (1e-1, 1e-2, 1e-3):
        est = wasserstein_entropic(a, a, P1, epsilon=eps).distance
        assert est <= eps * np.log(32) + 1e-12
        assert est <= prev + 1e-12
        prev = est


@pytest.mark.filterwarnings("ignore:Sinkhorn did not converge")
def test_entropic_sweep_approaches_exact():
    rng = np.random.default_rng(7)
    a, b = _cloud(rng, 64), _cloud(rng, 64)
    exact = wasserstein_exact(a, b, P1)[0]
    ests = [wasserstein_entropic(a, b, P1, epsilon=eps, iters=20_000).distance for eps in (1e-1, 1e-2, 1e-3)]
    assert all(e >= exact - 1e-12 for e in ests)
    assert ests[0] >= ests[1] >= ests[2]
    assert (ests[-1] - exact) / exact < 0.02


@pytest.mark.filterwarnings("ignore:Sinkhorn did not converge")
def test_entropic_upper_bounds_translation():
    rng = np.random.default_rng(8)
    a = _cloud(rng, 16)
    b = a.replace(x=a.x + np.array([0.1, 0.0]))
    exact = wasserstein_exact(a, b, P1)[0]
    assert abs(exact - 0.1) < 1e-12
    for eps in (1e-1, 1e-2):
        res = wasserstein_entropic(a, b, P1, epsilon=eps)
        assert res.distance >= exact - 1e-12
        np.testing.assert_allclose(res.plan.sum(axis=1), a.w, atol=1e-14)
        np.testing.assert_allclose(res.plan.sum(axis=0), b.w, atol=1e-14)


def test_entropic_nonconvergence_warns():
    rng = np.random.default_rng(9)
    a, b = _cloud(rng, 16), _cloud(rng, 16)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = wasserstein_entropic(a, b, P1, epsilon=1e-4, iters=3)
    assert not res.converged
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)
    assert res.distance >= wasserstein_exact(a, b, P1)[0] - 1e-12


# --- functionals along trajectories --------------------------------------------------


def _free_traj(ens, omega, times):
    states = [free_flow(omega, t, 0.0, ens.x, ens.v) for t in times]
    return Trajectory.from_states(times, states, ens.w)


def test_functionals_at_time_zero():
    rng = np.random.default_rng(10)
    a, b = _cloud(rng, 7), _cloud(rng, 7)
    times = np.array([0.0, 0.5])
    ta, tb = _free_traj(a, 1.0, times), _free_traj(b, 1.0, times)
    w1, pi1 = wasserstein_exact(a, b, P1)
    w2, pi2 = wasserstein_exact(a, b, P2)
    assert abs(dobrushin_functional(pi1, ta, tb, 0.0) - w1) < 1e-12
    assert abs(loeper_functional(pi2, ta, tb, 0.0) - 0.5 * w2**2) < 1e-12
    assert abs(renormalized_functional(pi1, ta, tb, 1.0, 0.0) - w1) < 1e-12
    ident = Coupling.identity(a.w)
    assert dobrushin_functional(ident, ta, ta, 0.5) == 0.0
    assert loeper_functional(ident, ta, ta, 0.5) == 0.0


def test_functional_relabeling_invariance():
    rng = np.random.default_rng(11)
    a, b = _cloud(rng, 6), _cloud(rng, 6)
    times = np.array([0.0, 0.3])
    ta, tb = _free_traj(a, 2.0, times), _free_traj(b, 2.0, times)
    _, pi = wasserstein_exact(a, b, P1)
    perm = rng.permutation(6)
    inv = np.argsort(perm)
    a2 = PhaseEnsemble(a.x[perm], a.v[perm], a.w[perm])
    ta2 = _free_traj(a2, 2.0, times)
    pi2 = Coupling(inv[pi.source], pi.target, pi.mass)
    for t in times:
        assert abs(dobrushin_functional(pi, ta, tb, t) - dobrushin_functional(pi2, ta2, tb, t)) < 1e-14
        assert abs(loeper_functional(pi, ta, tb, t) - loeper_functional(pi2, ta2, tb, t)) < 1e-14


def test_renormalized_constant_under_free_flow():
    rng = np.random.default_rng(12)
    a, b = _cloud(rng, 8), _cloud(rng, 8)
    times = np.linspace(0, 3, 13)
    ta, tb = _free_traj(a, 1.7, times), _free_traj(b, 1.7, times)
    _, pi = wasserstein_exact(a, b, P1)
    q = [renormalized_functional(pi, ta, tb, 1.7, t) for t in times]
    assert np.ptp(q) < 1e-10


# --- kinetic fixed point ------------------------------------------------------------


def test_kinetic_closed_form_a_zero():
    res = kinetic_q_fixed_point(0.0, 0.2)
    assert res.value == 0.1 and res.in_regime and res.residual == 0.0


def test_kinetic_b_zero_grid_scan():
    res = kinetic_q_fixed_point(0.1, 0.0)
    assert abs(res.residual) < 1e-12
    q = np.linspace(1e-9, 1 / np.e - 1e-12, 1_000_001)
    g = q - 0.05 * np.abs(np.log(q))
    sign_changes = np.nonzero(np.diff(np.sign(g)))[0]
    assert sign_changes.size == 1
    k = sign_changes[0]
    assert q[k] <= res.value <= q[k + 1]


def test_kinetic_degenerate_and_regime():
    with pytest.raises(DegenerateInputError):
        kinetic_q_fixed_point(0.0, 0.0)
    with pytest.raises(ValueError):
        kinetic_q_fixed_point(-1.0, 0.1)
    assert not kinetic_q_fixed_point(0.5, 0.6).in_regime


@given(st.floats(0, 0.5), st.floats(0, 1))
def test_kinetic_unique_root(total, frac):
    a, b = total * frac, total * (1 - frac)
    if a + b == 0:
        return
    res = kinetic_q_fixed_point(a, b)
    assert res.in_regime
    assert abs(res.residual) < 1e-12
    q = np.geomspace(1e-300, 1 / np.e - 1e-12, 4001)
    g = q - 0.5 * (a * np.abs(np.log(q)) + b)
    assert np.count_nonzero(np.diff(np.sign(g))) <= 1
