import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from pxlaplace.errors import ParameterError
from pxlaplace.exponent import choose_q
from pxlaplace.grid import Grid, GridFunction
from pxlaplace.infconv import (
    f_lower_envelope,
    inf_convolve,
    jet_from_argmin,
    monotone_family_check,
    semiconcavity_check,
    semiconcavity_constant,
    sup_convolve,
)
from pxlaplace.sources import source_preset


def _kink(n=81):
    g = Grid.from_shape((-1.0, 1.0), n)
    return g, GridFunction.from_callable(g, lambda x: np.abs(x[..., 0]))


def _brute_force(u, epsilon, q):
    """Direct double loop over nodes, the definition with no shortcuts."""
    x = u.grid.axis_nodes(0)
    scale = q * epsilon ** (q - 1.0)
    out = np.empty_like(u.values)
    for i, xi in enumerate(x):
        out[i] = np.min(u.values + np.abs(xi - x) ** q / scale)
    return out


def test_matches_brute_force_1d():
    g = Grid.from_shape((0.0, 1.0), 41)
    rng = np.random.default_rng(5)
    u = GridFunction(g, np.cumsum(rng.uniform(-0.2, 0.2, g.shape)))
    for eps, q in [(0.3, 2.0), (0.1, 2.0), (0.2, 3.0)]:
        res = inf_convolve(u, eps, q)
        assert np.allclose(res.u_eps.values, _brute_force(u, eps, q), atol=1e-14)


def test_sits_below_and_touches_at_minimum():
    g, u = _kink()
    res = inf_convolve(u, 0.2)
    assert np.all(res.u_eps.values <= u.values + 1e-15)
    imin = int(np.argmin(u.values))
    assert res.u_eps.values[imin] == pytest.approx(u.values[imin])


def test_moreau_envelope_of_abs():
    # closed form for q = 2: x^2/(2 eps) inside |x| <= eps, |x| - eps/2 outside
    g, u = _kink(401)
    eps = 0.25
    res = inf_convolve(u, eps, 2.0)
    x = g.axis_nodes(0)
    exact = np.where(np.abs(x) <= eps, x**2 / (2 * eps), np.abs(x) - eps / 2)
    # nodal minimizer lags the continuum one by at most h, cost O(h^2/eps)
    assert np.max(np.abs(res.u_eps.values - exact)) < g.h**2 / eps + 1e-12


def test_r_eps_formula():
    g, u = _kink()
    eps, q = 0.2, 3.0
    res = inf_convolve(u, eps, q)
    assert res.r_eps == pytest.approx((q * eps ** (q - 1.0) * u.oscillation()) ** (1.0 / q))


def test_region_mask_excludes_margin():
    g, u = _kink(81)
    res = inf_convolve(u, 0.2)
    mask = res.region_mask()
    x = g.axis_nodes(0)
    inside = np.minimum(x + 1.0, 1.0 - x) > res.r_eps
    assert np.array_equal(mask, inside)


def test_2d_matches_1d_product_structure():
    # u depending on one coordinate only: the 2D sweep must reproduce the
    # 1D answer column by column
    g1 = Grid.from_shape((0.0, 1.0), 33)
    u1 = GridFunction.from_callable(g1, lambda x: np.abs(x[..., 0] - 0.4))
    g2 = Grid.from_shape(((0.0, 1.0), (0.0, 1.0)), (33, 33))
    u2 = GridFunction.from_callable(g2, lambda x: np.abs(x[..., 0] - 0.4))
    eps = 0.15
    r1 = inf_convolve(u1, eps)
    r2 = inf_convolve(u2, eps)
    for j in range(33):
        assert np.allclose(r2.u_eps.values[:, j], r1.u_eps.values, atol=1e-12)


def test_sup_convolve_is_negated_inf_convolve():
    g, u = _kink()
    res_sup = sup_convolve(u, 0.2)
    res_inf = inf_convolve(u.with_values(-u.values), 0.2)
    assert np.allclose(res_sup.u_eps.values, -res_inf.u_eps.values)


def test_monotone_family():
    g, u = _kink()
    report, results = monotone_family_check(u, [0.4, 0.2, 0.1, 0.05])
    assert report.all_passed
    assert len(results) == 4
    # pointwise monotone toward u from below
    for a, b in zip(results, results[1:]):
        assert np.all(a.u_eps.values <= b.u_eps.values + 1e-12)


def test_monotone_family_rejects_increasing_eps():
    g, u = _kink()
    with pytest.raises(ParameterError):
        monotone_family_check(u, [0.1, 0.2])


def test_semiconcavity_constant_q2():
    assert semiconcavity_constant(0.25, 2.0, 0.1) == pytest.approx(1.0 / (2.0 * 0.25))


def test_semiconcavity_check_on_kink():
    # |x| itself has a +infinity second difference at 0; the envelope's is
    # capped by 2C, which is the entire point of the regularization
    g, u = _kink(201)
    res = inf_convolve(u, 0.2)
    report = semiconcavity_check(res)
    assert report.all_passed


def test_jet_eta_formula():
    g, u = _kink(401)
    eps = 0.2
    res = inf_convolve(u, eps)
    jet = jet_from_argmin(res, np.array([0.5]))
    # argmin of |y| + (0.5-y)^2/(2 eps) sits at y = 0.5 - eps up to one node
    assert abs(jet.x_eps[0] - (0.5 - eps)) <= g.h + 1e-12
    expected_eta = (0.5 - jet.x_eps[0]) / eps
    assert jet.eta[0] == pytest.approx(expected_eta)
    # for q = 2 the jet curvature bound collapses to 1 / eps
    assert jet.curvature_bound == pytest.approx(1.0 / eps)


def test_choose_q_pairs_with_low_exponent():
    # subquadratic p needs a superquadratic kernel
    q = choose_q(1.5)
    g, u = _kink()
    res = inf_convolve(u, 0.2, q)
    assert res.q == q == 3.0


def test_rejects_bad_parameters():
    g, u = _kink(21)
    with pytest.raises(ParameterError):
        inf_convolve(u, -0.1)
    with pytest.raises(ParameterError):
        inf_convolve(u, 0.1, q=1.5)


def test_f_lower_envelope_constant_unchanged():
    g = Grid.from_shape((0.0, 1.0), 33)
    f = source_preset("constant", value=2.5)
    env = f_lower_envelope(f, g, 0.1)
    x = g.flat_nodes()
    t = np.zeros(len(x))
    assert np.allclose(env.evaluate(x, t, x), 2.5)


def test_f_lower_envelope_shifts_monotone_source():
    # f = sin(pi x) is increasing on [0, 1/2]; the envelope at interior x
    # is f evaluated k nodes to the left, k = floor(r_eps / h)
    g = Grid.from_shape((0.0, 1.0), 101)
    f = source_preset("sine", grid=g, amplitude=1.0, frequency=1)
    r_eps = 0.053
    env = f_lower_envelope(f, g, r_eps)
    k = int(np.floor(r_eps / g.h))
    x = np.array([[0.3]])
    t = np.zeros(1)
    direct = f.evaluate(x - k * g.h, t, x)
    assert env.evaluate(x, t, x)[0] == pytest.approx(direct[0])


@seed(13)
@settings(max_examples=15, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.5), st.floats(min_value=2.0, max_value=4.0))
def test_envelope_below_u_everywhere(eps, q):
    g = Grid.from_shape((0.0, 1.0), 41)
    rng = np.random.default_rng(3)
    u = GridFunction(g, np.cumsum(rng.uniform(-0.3, 0.3, g.shape)))
    res = inf_convolve(u, eps, q)
    assert np.all(res.u_eps.values <= u.values + 1e-14)
