import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from compkernel import duality, hermite
from compkernel.duality import Pgf
from compkernel.errors import ConvergenceError
from compkernel.hermite import ActivationSpec

laws = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8).filter(lambda p: sum(p) > 1e-3).map(
    lambda p: duality.from_probabilities(np.asarray(p) / np.sum(p))
)


def test_pgf_validation():
    with pytest.raises(ValueError):
        Pgf([0.5, -0.1, 0.6])
    with pytest.raises(ValueError):
        Pgf([0.5, 0.4])
    with pytest.raises(ValueError):
        Pgf([])
    g = Pgf([0.5, 0.4], tail_mass=0.1)
    assert g.degree_cap == 1
    assert g.prob(7) == 0.0


def test_pgf_json_round_trip():
    g = duality.poisson(1.5)
    back = Pgf.from_json(g.to_json())
    assert_allclose(back.coefficients, g.coefficients)
    assert back.tail_mass == g.tail_mass
    assert back.family == "poisson"
    with pytest.raises(ValueError):
        Pgf.from_dict({"coefficients": [1.0], "degree_cap": 3})


def test_from_activation_examples():
    g = duality.pgf_from_activation(ActivationSpec([0.0, 1.0]))
    assert_allclose(g.coefficients, [0.0, 1.0])
    g = duality.pgf_from_activation(ActivationSpec([0.6, 0.8]))
    assert_allclose(g.coefficients, [0.36, 0.64])
    with pytest.raises(ValueError, match="not normalized"):
        duality.pgf_from_activation(ActivationSpec([1.0, 1.0]))


def test_centered_relu_linear_coefficient():
    relu = hermite.project_coefficients(hermite.get_activation("relu"), 40)
    g = duality.pgf_from_activation(hermite.center_and_normalize(relu))
    # a_1^2 / (E[relu^2] - a_0^2) = (1/4) / (1/2 - 1/(2 pi)), up to the truncated tail.
    assert g.prob(1) == pytest.approx(0.25 / (0.5 - 1 / (2 * math.pi)), abs=3e-3)
    assert g.prob(1) == pytest.approx(0.74, abs=0.01)


def test_activation_from_pgf_examples():
    spec = duality.activation_from_pgf(duality.point_mass(1))
    assert_allclose(spec.coefficients, [0.0, 1.0])
    pois = duality.poisson(1.0, degree_cap=60)
    k = np.arange(61)
    expected = np.sqrt(np.exp(-1.0) / np.array([math.factorial(int(i)) for i in k], dtype=float))
    assert_allclose(duality.activation_from_pgf(pois).coefficients, expected, rtol=1e-10)
    geo = duality.geometric(0.5, degree_cap=80)
    assert_allclose(duality.activation_from_pgf(geo).coefficients, np.sqrt(0.5 ** (np.arange(81) + 1)), rtol=1e-12)
    with pytest.raises(ValueError, match="tail"):
        duality.activation_from_pgf(duality.geometric(0.5, degree_cap=5))


def test_pgf_eval_examples():
    assert duality.pgf_eval(duality.poisson(2.0), 0.5) == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert duality.pgf_eval(duality.binomial(3, 0.4), 0.2) == pytest.approx(0.314432, abs=1e-14)
    for g in (duality.poisson(3.0), duality.geometric(0.9), duality.uniform(4), duality.binomial(5, 0.3)):
        assert duality.pgf_eval(g, 1.0) == pytest.approx(1.0, abs=1e-10)


def test_family_closed_forms():
    s = np.linspace(-1, 1, 21)
    assert_allclose(duality.pgf_eval(duality.poisson(1.7), s), np.exp(1.7 * (s - 1)), atol=1e-12)
    assert_allclose(duality.pgf_eval(duality.geometric(0.6), s), 0.4 / (1 - 0.6 * s), atol=1e-11)
    assert_allclose(duality.pgf_eval(duality.binomial(4, 0.25), s), (0.75 + 0.25 * s) ** 4, atol=1e-14)
    uni = duality.uniform(3)
    assert_allclose(duality.pgf_eval(uni, s), (1 + s + s**2 + s**3) / 4, atol=1e-14)


def test_printed_uniform_form_is_unnormalized():
    assert duality.printed_uniform_generating_function(3, 1.0) == pytest.approx(4 / 3)
    s = 0.4
    assert duality.printed_uniform_generating_function(3, s) == pytest.approx((1 - s**4) / (3 * (1 - s)))


def test_pgf_complement_precision():
    g = duality.poisson(2.0)
    u = 1e-14
    # 1 - G(1 - u) ~ mu u for tiny u.
    assert duality.pgf_complement(g, u) == pytest.approx(2.0 * u, rel=1e-9)
    u = np.linspace(0, 1, 11)
    assert_allclose(duality.pgf_complement(g, u), 1 - duality.pgf_eval(g, 1 - u), atol=1e-14)


def test_moments_examples():
    m = duality.mean_and_mustar(duality.point_mass(1))
    assert (m.mean, m.mustar) == (1.0, 0.0)
    assert duality.mean_and_mustar(duality.geometric(0.75, degree_cap=400)).mean == pytest.approx(3.0, abs=1e-9)
    m = duality.mean_and_mustar(Pgf([0.0, 0.5, 0.25, 0.25]))
    assert m.mean == pytest.approx(1.75)
    assert m.mustar == pytest.approx(0.25 * 2 * math.log(2) + 0.25 * 3 * math.log(3))
    assert duality.mean_and_mustar(Pgf([0.5, 0.4], tail_mass=0.1)).lower_bound


def test_extinction_examples():
    assert duality.extinction_probability(duality.geometric(0.75)) == pytest.approx(1 / 3, abs=1e-10)
    assert duality.extinction_probability(Pgf([0.5, 0.0, 0.5])) == 1.0
    with pytest.raises(ValueError):
        duality.extinction_probability(duality.point_mass(1))
    # Poisson(2): xi solves exp(2 (xi - 1)) = xi.
    xi = duality.extinction_probability(duality.poisson(2.0))
    assert math.exp(2 * (xi - 1)) == pytest.approx(xi, abs=1e-11)


def test_extinction_nonconvergence_reports_diagnostics():
    with pytest.raises(ConvergenceError) as info:
        duality.extinction_probability(Pgf([0.1, 0.0, 0.9]), max_iter=2)
    assert info.value.diagnostics["iterations"] == 2


def test_classify_phase_examples():
    rep = duality.classify_phase(Pgf([0.5, 0.0, 0.5]))
    assert rep.mean == 1.0 and rep.extinction == 1.0 and rep.phase == duality.SUBCRITICAL
    rep = duality.classify_phase(duality.poisson(2.0))
    assert rep.phase == duality.SUPERCRITICAL_KS
    rep = duality.classify_phase(Pgf([0.0, 0.2, 0.8]))
    assert rep.extinction == 0.0
    rep = duality.classify_phase(duality.point_mass(1))
    assert rep.extinction == 0.0 and rep.phase == duality.SUBCRITICAL


def test_resnet_examples():
    g = Pgf([0.0, 0.3, 0.7])
    assert_allclose(duality.resnet_pgf(g, 0.0).coefficients, g.coefficients)
    assert_allclose(duality.resnet_pgf(g, 1.0).coefficients, [0.0, 1.0, 0.0])
    q = duality.resnet_pgf(duality.point_mass(2), 0.5)
    assert_allclose(q.coefficients, [0.0, 0.5, 0.5])
    assert duality.mean_and_mustar(q).mean == pytest.approx(1.5)
    with pytest.raises(ValueError):
        duality.resnet_pgf(g, 1.5)
    with pytest.warns(UserWarning, match="centered"):
        duality.resnet_pgf(Pgf([0.5, 0.5]), 0.5)


def test_symmetry_examples():
    assert duality.check_pgf_symmetry(Pgf([0.3, 0.0, 0.7])).holds
    assert duality.check_pgf_symmetry(Pgf([0.0, 0.3, 0.0, 0.7])).holds
    check = duality.check_pgf_symmetry(Pgf([0.0, 0.5, 0.5]), grid=[-0.5])
    assert not check.holds
    assert check.violation == pytest.approx(0.25)


def test_phase_table_rows_and_errors():
    rows = duality.phase_table(["relu"], truncation=10, samples=200_000, seed=1)
    assert [r.centered for r in rows] == [False, True]
    unc, cen = rows
    # Centering rescales every p_k (k >= 1) by the same factor 1 / (1 - p_0).
    assert cen.a1_squared / unc.a1_squared == pytest.approx(cen.mean / unc.mean, rel=1e-12)
    assert unc.extinction == 1.0 and cen.extinction == 0.0
    # Only four Monte-Carlo chunks here, so the jackknife error is coarse.
    assert 0 < unc.mean_se < 0.1


@settings(max_examples=60, deadline=None)
@given(laws)
def test_extinction_is_smallest_fixed_point(g):
    mu = duality.mean_and_mustar(g).mean
    # Near-critical laws converge too slowly for the fixed-point iteration.
    assume(g.prob(1) < 1.0 and abs(mu - 1.0) > 1e-3)
    xi = duality.extinction_probability(g)
    assert 0.0 <= xi <= 1.0
    assert duality.pgf_eval(g, xi) == pytest.approx(xi, abs=1e-9)
    grid = np.linspace(0, xi, 50, endpoint=False)
    assert np.all(duality.pgf_eval(g, grid) > grid - 1e-12)
    assert (xi == 1.0) == (mu <= 1.0)


@settings(max_examples=60, deadline=None)
@given(laws, st.floats(-1, 1))
def test_pgf_bounded_and_monotone(g, s):
    v = duality.pgf_eval(g, s)
    assert abs(v) <= duality.pgf_eval(g, abs(s)) + 1e-12
    assert duality.pgf_eval(g, abs(s)) <= 1.0 + 1e-12


@settings(max_examples=40, deadline=None)
@given(laws)
def test_duality_round_trip(g):
    spec = duality.activation_from_pgf(g)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        back = duality.pgf_from_activation(spec)
    assert_allclose(back.coefficients, g.coefficients, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(laws, st.floats(0.0, 1.0))
def test_resnet_mean_is_convex_combination(g, r):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        q = duality.resnet_pgf(g, r)
    mu = duality.mean_and_mustar(g).mean
    assert duality.mean_and_mustar(q).mean == pytest.approx((1 - r) * mu + r, abs=1e-12)
