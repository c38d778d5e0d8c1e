"""Modulars and Luxemburg norms for variable-exponent Lebesgue spaces.

The modular is rho(u) = int |u(x)|^{p(x)} dx (trapezoid quadrature); the
norm is the Luxemburg gauge inf{lam > 0 : rho(u/lam) <= 1}, computed by
bisection on lam.  The classical relations between modular and norm
(unit-sphere agreement, the p_minus/p_plus sandwich, Holder pairing, the
product-exponent bounds) hold for any measure, so their discrete
versions are exact up to bisection residue; the check_* routines assert
them and report margins.
"""

import numpy as np

from .errors import GridMismatchError, IterationLimitError, ParameterError
from .exponent import ExponentField
from .grid import GridFunction
from .report import CheckReport

__all__ = [
    "modular",
    "luxemburg_norm",
    "sobolev_norm",
    "check_modular_norm_relations",
    "check_holder_pairing",
    "check_product_lemma",
]


def _require_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields must live on the same grid")


def modular(u, p):
    """rho(u) = trapezoid integral of |u(x)|^{p(x)}."""
    _require_same_grid(u, p)
    with np.errstate(over="ignore"):
        dens = np.abs(u.values) ** p.values
    return u.grid.integrate(np.where(np.isfinite(dens), dens, np.inf))


def _modular_raw(absvals, pvals, weights, hd):
    # overflow -> inf, which compares correctly against 1 in the bisection
    with np.errstate(over="ignore"):
        dens = absvals**pvals
    total = hd * np.sum(weights * dens)
    return total if np.isfinite(total) else np.inf


def luxemburg_norm(u, p, tol=1e-10, max_iter=500):
    """Luxemburg norm by bisection: the lam with rho(u/lam) = 1 +- tol.

    Bracket: [machine eps, max|u| * (1 + |Omega|)], doubling the upper
    end until the modular drops below 1.  Returns 0.0 for u == 0.
    """
    _require_same_grid(u, p)
    if tol <= 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    absvals = np.abs(u.values)
    if absvals.max() == 0.0:
        return 0.0
    weights = u.grid.trapezoid_weights()
    hd = u.grid.h**u.grid.ndim
    vol = float(np.prod(u.grid.side_lengths()))

    lo = float(np.finfo(float).eps)
    if _modular_raw(absvals / lo, p.values, weights, hd) <= 1.0:
        return lo  # norm below machine resolution
    hi = float(absvals.max()) * (1.0 + vol)
    doublings = 0
    while _modular_raw(absvals / hi, p.values, weights, hd) > 1.0:
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise IterationLimitError("upper bracket for Luxemburg norm ran away", (lo, hi))

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        rho = _modular_raw(absvals / mid, p.values, weights, hd)
        if abs(rho - 1.0) <= tol:
            return mid
        if rho > 1.0:
            lo = mid
        else:
            hi = mid
    raise IterationLimitError(
        f"bisection did not reach |rho - 1| <= {tol} in {max_iter} iterations", (lo, hi)
    )


def sobolev_norm(u, p, tol=1e-10):
    """||u||_{W^{1,p(.)}} = ||u||_{L^{p(.)}} + || |Du| ||_{L^{p(.)}}.

    The gradient magnitude uses nodal central differences (one-sided at
    the boundary), which is the diagnostic-grade gradient.
    """
    _require_same_grid(u, p)
    du = GridFunction(u.grid, u.gradient_magnitude())
    return luxemburg_norm(u, p, tol=tol) + luxemburg_norm(du, p, tol=tol)


def check_modular_norm_relations(u, p, tol=1e-10, tolerance=None):
    """Assert the modular <-> norm relations for (u, p) and report margins.

    Checked: the norm and the modular sit on the same side of 1, and the
    two-sided sandwich (rho between ||u||^{p_minus} and ||u||^{p_plus},
    with the exponents swapping roles across ||u|| = 1).  The default
    tolerance scales with the magnitudes involved: 10 * tol * max(1,
    rho, ||u||^{p_plus}).
    """
    nrm = luxemburg_norm(u, p, tol=tol)
    rho = modular(u, p)
    pm, pp = p.p_minus, p.p_plus
    lo_pow, hi_pow = nrm**pm, nrm**pp
    if tolerance is None:
        tolerance = 10.0 * tol * max(1.0, rho, lo_pow, hi_pow)
    rep = CheckReport("modular-norm relations", tolerance)
    rep.note(f"norm={nrm:.12g} modular={rho:.12g} p_minus={pm:.6g} p_plus={pp:.6g}")
    rep.add("same side of 1", (nrm - 1.0) * (rho - 1.0), 0.0)
    if nrm >= 1.0:
        rep.add("rho >= norm^p_minus", rho, lo_pow)
        rep.add("rho <= norm^p_plus", hi_pow, rho)
    else:
        rep.add("rho <= norm^p_minus", lo_pow, rho)
        rep.add("rho >= norm^p_plus", rho, hi_pow)
    return rep


def check_holder_pairing(u, v, p, tol=1e-10, tolerance=None):
    """Holder inequality |int u v| <= C ||u||_{p(.)} ||v||_{p'(.)}.

    C = 1/p_minus + 1/(p')_minus, recomputed from this grid's exponent
    extremes.  The pointwise conjugate exponent field p' = p/(p-1) is
    built on the same grid; all three integrals share the trapezoid
    rule, so the inequality is measure-exact and the margin only absorbs
    bisection residue.
    """
    _require_same_grid(u, p)
    _require_same_grid(v, p)
    pc = p.conjugate()
    const = 1.0 / p.p_minus + 1.0 / pc.p_minus
    nu = luxemburg_norm(u, p, tol=tol)
    nv = luxemburg_norm(v, pc, tol=tol)
    pairing = abs(u.grid.integrate(u.values * v.values))
    bound = const * nu * nv
    if tolerance is None:
        tolerance = 10.0 * tol * max(1.0, bound)
    rep = CheckReport("Holder pairing", tolerance)
    rep.note(f"constant={const:.12g} ||u||={nu:.12g} ||v||_conj={nv:.12g}")
    rep.add("C ||u|| ||v|| >= |int u v|", bound, pairing)
    return rep


def check_product_lemma(f, p, q, tol=1e-10, tolerance=None):
    """Norm bounds linking || |f| ||_{p q} and || |f|^p ||_q.

    With a = || |f| ||_{L^{p(.)q(.)}} and b = || |f|^{p(.)} ||_{L^{q(.)}}:
    a <= 1 gives a^{p_plus} <= b <= a^{p_minus}, and a >= 1 swaps the
    exponents.  Near a = 1 both branches collapse to equalities, so the
    branch taken at a = 1 exactly is immaterial.
    """
    _require_same_grid(f, p)
    _require_same_grid(f, q)
    pq = ExponentField.from_values(p.grid, p.values * q.values)
    absf = GridFunction(f.grid, np.abs(f.values))
    with np.errstate(over="ignore"):
        fp_vals = np.abs(f.values) ** p.values
    if not np.all(np.isfinite(fp_vals)):
        raise ParameterError("|f|^p overflowed; rescale f")
    fp = GridFunction(f.grid, fp_vals)
    a = luxemburg_norm(absf, pq, tol=tol)
    b = luxemburg_norm(fp, q, tol=tol)
    pm, pp = p.p_minus, p.p_plus
    if tolerance is None:
        tolerance = 10.0 * tol * max(1.0, b, a**pm, a**pp)
    rep = CheckReport("product-exponent bounds", tolerance)
    rep.note(f"a=||f||_pq={a:.12g} b=|||f|^p||_q={b:.12g}")
    if a <= 1.0:
        rep.add("b >= a^p_plus", b, a**pp)
        rep.add("b <= a^p_minus", a**pm, b)
    else:
        rep.add("b >= a^p_minus", b, a**pm)
        rep.add("b <= a^p_plus", a**pp, b)
    return rep
