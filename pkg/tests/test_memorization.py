import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from compkernel import duality, kernel, memorization, sphere
from compkernel.duality import Pgf
from compkernel.errors import BoundNotApplicableError, ConvergenceError

SQUARE = duality.point_mass(2)

centered_supercritical = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(
    lambda p: sum(p) > 1e-3 and sum(p[1:]) > 1e-3 and p[0] / sum(p) < 0.98
).map(lambda p: Pgf(np.concatenate([[0.0], np.asarray(p) / np.sum(p)])))


def test_path_depth_examples():
    # 0.9^(2^L) <= 0.1 first holds at L = 5.
    assert memorization.path_depth_exact(SQUARE, 0.9, 0.1) == 5
    assert 0.9 ** (2**4) > 0.1 >= 0.9 ** (2**5)
    assert memorization.path_depth_exact(SQUARE, 0.4, 0.4) == 0
    assert memorization.path_depth_exact(Pgf([0.0, 0.5, 0.0, 0.5]), 0.5, 0.4) == 1


def test_path_depth_no_descent_carries_last_value():
    with pytest.raises(ConvergenceError) as info:
        memorization.path_depth_exact(duality.point_mass(1), 0.5, 0.1)
    assert info.value.diagnostics["last_value"] == 0.5
    with pytest.raises(ConvergenceError) as info:
        memorization.path_depth_exact(Pgf([0.0, 0.999999, 0.000001]), 0.5, 0.1, max_depth=10)
    assert info.value.diagnostics["depth"] == 11


def test_bounds_sandwich_square():
    bounds = memorization.path_depth_bounds(SQUARE, 0.9, 0.1)
    # Multiplicative branch of the upper bound: log 9 / log(1 / 0.9) + 1.
    assert bounds.upper <= math.log(9) / math.log(1 / 0.9) + 1 + 1e-12
    assert bounds.lower <= 5 <= bounds.upper


def test_bounds_without_descent_raise():
    with pytest.raises(BoundNotApplicableError):
        memorization.path_depth_bounds(duality.point_mass(1), 0.9, 0.1)


def test_chain_bounds_do_not_exceed_exact():
    chain = memorization.chain_bounds(SQUARE, 0.9, 0.1)
    assert chain is not None
    assert chain.lower <= 5 <= chain.upper
    assert memorization.chain_bounds(SQUARE, 0.25, 0.1) is None


def test_s_star_square_law():
    # (1 - s^2) / (1 - s) = 1 + s >= 1.5 gives s_star = 1/2.
    assert memorization.s_star(SQUARE) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        memorization.s_star(Pgf([0.5, 0.0, 0.5]))


def test_regime_constants():
    assert memorization.small_regime_constant(0.25) == pytest.approx(min(0.1, 0.5 * (0.5 - 0.25)))
    assert memorization.small_regime_constant(0.9) == pytest.approx(0.5 * (math.sqrt(0.9) - 0.9))
    assert memorization.large_regime_constant(0.5) == pytest.approx(1.5 * math.log(40))


def test_epsilon_closeness_examples():
    rep = memorization.epsilon_closeness_depth(SQUARE, 0.3, 0.3)
    assert rep.exact == 0
    rep = memorization.epsilon_closeness_depth(SQUARE, 0.9, 0.1)
    assert rep.exact == 5
    assert rep.lower <= rep.exact <= rep.upper
    assert "path_depth_bounds" in rep.components
    with pytest.raises(ValueError):
        memorization.epsilon_closeness_depth(SQUARE, 0.9, 0.0)


def test_epsilon_closeness_nearly_linear_base():
    # A base with a_1^2 = 0.99 and a high-degree remainder contracts like
    # 0.99 s for s <= 1/2, so the depth is about log(rho / eps) / log(a_1^-2).
    g = Pgf([0.0, 0.99] + [0.0] * 7 + [0.01])
    rho, eps = 0.5, 0.1
    rep = memorization.epsilon_closeness_depth(g, rho, eps)
    formula = math.log(rho / eps) / -math.log(0.99)
    assert abs(rep.exact - formula) <= 1.0


def test_epsilon_closeness_centered_sigmoid_near_formula():
    from compkernel import hermite

    spec = hermite.center_and_normalize(hermite.project_coefficients(hermite.get_activation("sigmoid"), 20))
    g = duality.pgf_from_activation(spec)
    # G(s) / s is nondecreasing and at least a_1^2, so the linear-term formula
    # is a lower bound and G(rho) / rho gives an upper bound.
    for rho, eps in [(0.5, 0.05), (0.2, 0.02), (0.1, 0.01)]:
        exact = memorization.epsilon_closeness_depth(g, rho, eps).exact
        formula = math.log(rho / eps) / -math.log(g.prob(1))
        slowest = math.log(rho / eps) / -math.log(duality.pgf_eval(g, rho) / rho) + 1.0
        assert formula <= exact <= slowest
    # For small correlations the higher-order terms are negligible.
    exact = memorization.epsilon_closeness_depth(g, 0.1, 0.01).exact
    assert abs(exact - math.log(10) / -math.log(g.prob(1))) <= 1.0


def test_epsilon_closeness_report_json_itemizes_components():
    ds = sphere.sample_uniform_sphere(30, 50, seed=4)
    rep = memorization.epsilon_closeness_depth(SQUARE, ds, 0.01)
    d = rep.to_dict()
    assert d["epsilon"] == 0.01 and d["n"] == 30 and d["d"] == 50
    assert "regime_info" in d["components"]
    assert rep.exact == memorization.direct_closeness_depth(SQUARE, ds, 0.01)


def test_signed_data_without_symmetry_is_flagged():
    g = Pgf([0.0, 0.5, 0.5])
    ds = sphere.SphereDataset(np.array([[1.0, 0.0], [-0.6, 0.8]]))
    rep = memorization.epsilon_closeness_depth(g, ds, 0.05)
    assert rep.warnings
    assert "direct_signed_depth" in rep.components


def test_memorization_orthogonal_points_need_no_depth():
    ds = sphere.orthonormal_dataset(2, 5)
    rep = memorization.memorization_depth_bounds(SQUARE, ds, 0.01)
    assert rep.exact == 0
    assert (rep.lower, rep.upper) == (0.0, 0.0)


def test_memorization_kappa_range():
    ds = sphere.sample_uniform_sphere(10, 20, seed=0)
    with pytest.raises(ValueError):
        memorization.memorization_depth_bounds(SQUARE, ds, 0.0)
    with pytest.raises(ValueError):
        memorization.memorization_depth_bounds(SQUARE, ds, 1.5)
    with pytest.raises(ValueError):
        memorization.memorization_depth_bounds(SQUARE, 0.5, 0.1)


def test_memorization_upper_depth_verified_by_eigenvalues(gelu_centered_exact):
    ds = sphere.sample_uniform_sphere(50, 200, seed=11)
    kappa = 0.1
    rep = memorization.memorization_depth_bounds(gelu_centered_exact, ds, kappa)
    assert rep.lower <= rep.exact <= rep.upper
    K = kernel.build_kernel_matrix(gelu_centered_exact, ds, int(rep.upper))
    eig = np.linalg.eigvalsh(K.entries)
    assert np.all(np.abs(eig - 1.0) <= kappa)


def test_check_kappa_memorization_examples():
    assert memorization.check_kappa_memorization(np.eye(4), 1e-9).holds
    check = memorization.check_kappa_memorization(np.ones((2, 2)), 0.5)
    assert not check.holds
    assert_allclose([check.min_eigenvalue, check.max_eigenvalue], [0.0, 2.0], atol=1e-12)
    assert check.condition_surrogate == math.inf
    with pytest.raises(ValueError):
        memorization.check_kappa_memorization(np.eye(5), 0.1, max_n=4)
    with pytest.raises(ValueError):
        memorization.check_kappa_memorization(np.array([[1.0, 0.2], [0.1, 1.0]]), 0.1)


def test_gershgorin_band():
    r = np.random.default_rng(1)
    n = 6
    a = r.uniform(-1, 1, (n, n))
    delta = 0.02
    K = np.eye(n) + delta * (a + a.T) / 2
    check = memorization.check_kappa_memorization(K, (n - 1) * delta)
    assert check.holds
    assert check.deviation <= (n - 1) * delta


def test_closeness_and_memorization_implications():
    r = np.random.default_rng(5)
    for _ in range(50):
        n = int(r.integers(2, 8))
        kappa = float(r.uniform(0.05, 0.5))
        scale = float(r.uniform(0.0, 2.0)) * kappa
        a = r.uniform(-1, 1, (n, n))
        K = np.eye(n) + scale * (a + a.T) / 2
        np.fill_diagonal(K, 1.0)
        off = np.max(np.abs(K - np.eye(n)))
        holds = memorization.check_kappa_memorization(K, kappa).holds
        # kappa / n closeness is sufficient for kappa-memorization...
        if off <= kappa / n:
            assert holds
        # ...and kappa-memorization forces kappa-closeness.
        if holds:
            assert off <= kappa + 1e-12


def test_regime_interval_for_iid_data(gelu_centered_exact):
    n, d, kappa = 200, 400, 0.1
    ds = sphere.sample_uniform_sphere(n, d, seed=8)
    rep = memorization.memorization_depth_bounds(gelu_centered_exact, ds, kappa)
    small = rep.components["small_correlation_memorization"]
    assert small["lower"] <= rep.exact <= small["upper"]


def test_depth_report_json_round_trip():
    import json

    rep = memorization.epsilon_closeness_depth(SQUARE, 0.9, 0.1)
    back = json.loads(rep.to_json())
    assert back["exact"] == 5 and back["rho"] == 0.9


@settings(max_examples=100, deadline=None)
@given(centered_supercritical, st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_sandwich_property(g, x, y):
    beta, alpha = max(x, y), min(x, y)
    assume(beta - alpha > 1e-3)
    assume(duality.pgf_eval(g, beta) < beta and duality.pgf_eval(g, alpha) < alpha)
    exact = memorization.path_depth_exact(g, beta, alpha)
    bounds = memorization.path_depth_bounds(g, beta, alpha)
    assert bounds.lower <= exact + 1e-9
    assert exact <= bounds.upper + 1e-9
    chain = memorization.chain_bounds(g, beta, alpha)
    if chain is not None:
        assert chain.lower <= exact + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 0.95), st.floats(0.01, 0.19), st.floats(0.01, 0.19))
def test_closeness_depth_monotone(rho, e1, e2):
    small, big = min(e1, e2), max(e1, e2)
    assert (
        memorization.epsilon_closeness_depth(SQUARE, rho, big).exact
        <= memorization.epsilon_closeness_depth(SQUARE, rho, small).exact
    )
    assert (
        memorization.epsilon_closeness_depth(SQUARE, rho * 0.9, small).exact
        <= memorization.epsilon_closeness_depth(SQUARE, rho, small).exact
    )
