"""Strong, divergence and weak forms of the variable-exponent p-Laplacian.

Three routes to the same operator, kept deliberately separate so they
can check each other:

* strong form at a jet (x, eta, X):  -tr(A(x, eta) X) - B(x, eta) with
  A(x, xi) = |xi|^{p(x)-2} (I + (p(x)-2) xihat (x) xihat) and
  B(x, xi) = |xi|^{p(x)-2} log|xi| (xi . grad p)(x);
* conservative finite differences: fluxes |Du|^{p-2} Du on half-node
  (staggered) edges, divergence by differencing adjacent edge fluxes;
* the weak pairing  int |Du|^{p-2} Du . Dphi - int f(x, u, Du) phi,
  built from the same edge fluxes, so that summation by parts against a
  zero-trace phi reproduces the staggered divergence exactly.

Edge gradients carry a transverse component (the four-point average of
neighbouring differences) so their magnitude approximates the full
|Du| at the edge midpoint to second order.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundaryStencilError,
    DegenerateGradientError,
    GridMismatchError,
    InvalidTestFunctionError,
    ParameterError,
)

__all__ = [
    "OperatorProbe",
    "AnalyticProbe",
    "probe_preset",
    "diffusion_matrix",
    "log_drift",
    "strong_operator",
    "infinity_laplacian",
    "divergence_flux_fd",
    "neg_div_flux_field",
    "flux_pairing",
    "weak_residual",
    "strong_residual_at_jets",
]


@dataclass(frozen=True)
class OperatorProbe:
    """Second-order jet (x, eta, X) of a touching test function."""

    x: np.ndarray
    eta: np.ndarray
    hessian: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        hess = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        d = x.shape[0]
        if eta.shape != (d,) or hess.shape != (d, d):
            raise ParameterError(f"jet shapes disagree: x{x.shape} eta{eta.shape} X{hess.shape}")
        asym = np.abs(hess - hess.T).max()
        if asym > 1e-12 * (1.0 + np.abs(hess).max()):
            raise ParameterError(f"jet Hessian is not symmetric (asymmetry {asym:.3g})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "hessian", 0.5 * (hess + hess.T))


@dataclass(frozen=True)
class AnalyticProbe:
    """Twice-differentiable test function given by closed-form callables."""

    value: object
    gradient: object
    hessian: object

    def jet(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return OperatorProbe(x, self.gradient(x), self.hessian(x))


def probe_preset(name, ndim, **params):
    """Closed-form probes: quadratic, affine, radial, sine.

    quadratic: 0.5 x.M x + b.x + c   (M symmetric (d,d), b (d,), c)
    affine:    b.x + c
    radial:    a |x - c|^m           (m >= 2 keeps the Hessian finite at c)
    sine:      a sin(k.x + shift)
    """
    if name == "quadratic":
        M = np.atleast_2d(np.asarray(params.get("M", np.eye(ndim)), dtype=float))
        b = np.atleast_1d(np.asarray(params.get("b", np.zeros(ndim)), dtype=float))
        c = float(params.get("c", 0.0))
        return AnalyticProbe(
            value=lambda x: 0.5 * x @ M @ x + b @ x + c,
            gradient=lambda x: M @ x + b,
            hessian=lambda x: M.copy(),
        )
    if name == "affine":
        b = np.atleast_1d(np.asarray(params.get("b", np.ones(ndim)), dtype=float))
        c = float(params.get("c", 0.0))
        return AnalyticProbe(
            value=lambda x: b @ x + c,
            gradient=lambda x: b.copy(),
            hessian=lambda x: np.zeros((ndim, ndim)),
        )
    if name == "radial":
        a = float(params.get("a", 1.0))
        m = float(params.get("m", 2.0))
        center = np.atleast_1d(np.asarray(params.get("center", np.zeros(ndim)), dtype=float))
        if m < 2:
            raise ParameterError("radial probe needs m >= 2 for a finite Hessian")

        def grad(x):
            d = x - center
            r = np.linalg.norm(d)
            return a * m * r ** (m - 2.0) * d if r > 0 else np.zeros(ndim)

        def hess(x):
            d = x - center
            r = np.linalg.norm(d)
            if r == 0:
                return (2.0 * a * np.eye(ndim)) if m == 2.0 else np.zeros((ndim, ndim))
            eye = np.eye(ndim)
            return a * m * r ** (m - 2.0) * eye + a * m * (m - 2.0) * r ** (m - 4.0) * np.outer(d, d)

        return AnalyticProbe(
            value=lambda x: a * np.linalg.norm(x - center) ** m, gradient=grad, hessian=hess
        )
    if name == "sine":
        a = float(params.get("a", 1.0))
        k = np.atleast_1d(np.asarray(params.get("k", np.full(ndim, np.pi)), dtype=float))
        shift = float(params.get("shift", 0.0))
        return AnalyticProbe(
            value=lambda x: a * np.sin(k @ x + shift),
            gradient=lambda x: a * np.cos(k @ x + shift) * k,
            hessian=lambda x: -a * np.sin(k @ x + shift) * np.outer(k, k),
        )
    raise ParameterError(f"unknown probe preset {name!r}")


def diffusion_matrix(x, xi, p):
    """A(x, xi) = |xi|^{p(x)-2} (I + (p(x)-2) xihat (x) xihat).

    Eigenvalues: |xi|^{p-2} with multiplicity d-1 and (p-1)|xi|^{p-2}
    along xi, so the matrix is symmetric positive definite for p > 1.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    s = float(np.linalg.norm(xi))
    if s == 0.0:
        raise DegenerateGradientError("diffusion matrix needs xi != 0")
    pv, _ = p.at(x)
    hat = xi / s
    return s ** (pv - 2.0) * (np.eye(xi.shape[0]) + (pv - 2.0) * np.outer(hat, hat))


def log_drift(x, xi, p):
    """B(x, xi) = |xi|^{p(x)-2} log|xi| (xi . grad p)(x)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    s = float(np.linalg.norm(xi))
    if s == 0.0:
        raise DegenerateGradientError("log drift needs xi != 0")
    pv, dp = p.at(x)
    return float(s ** (pv - 2.0) * np.log(s) * (xi @ dp))


def strong_residual_at_jets(eta, hess, pvals, dp):
    """Vectorized -tr(A(x, eta) X) - B(x, eta) over stacked jets.

    eta (N, d), hess (N, d, d), pvals (N,), dp (N, d).  Every eta must be
    nonzero; the caller filters degenerate jets first.
    """
    eta = np.asarray(eta, dtype=float)
    hess = np.asarray(hess, dtype=float)
    s2 = np.sum(eta * eta, axis=-1)
    if np.any(s2 == 0.0):
        raise DegenerateGradientError("strong residual needs eta != 0 at every jet")
    s = np.sqrt(s2)
    common = s ** (pvals - 2.0)
    tr = np.trace(hess, axis1=-2, axis2=-1)
    quad = np.einsum("ni,nij,nj->n", eta, hess, eta) / s2
    a_term = common * (tr + (pvals - 2.0) * quad)
    b_term = common * np.log(s) * np.einsum("ni,ni->n", eta, dp)
    return -a_term - b_term


def strong_operator(phi, x, p):
    """Expanded operator -tr(A(x, Dphi) D^2phi) - B(x, Dphi) at x.

    Equals -|Dphi|^{p-2} (trace(D^2phi) + (p-2) Dinfty phi / |Dphi|^2)
    minus the drift |Dphi|^{p-2} log|Dphi| Dphi . grad p, i.e. the
    classical expansion of -div(|Dphi|^{p(x)-2} Dphi) wherever Dphi != 0.
    """
    jet = phi.jet(x) if isinstance(phi, AnalyticProbe) else phi
    s = float(np.linalg.norm(jet.eta))
    if s == 0.0:
        raise DegenerateGradientError("strong operator needs Dphi != 0 at x")
    pv, dp = p.at(jet.x if isinstance(phi, OperatorProbe) else x)
    out = strong_residual_at_jets(
        jet.eta[None, :], jet.hessian[None, :, :], np.array([pv]), dp[None, :]
    )
    return float(out[0])


def infinity_laplacian(probe):
    """Dinfty phi = X eta . eta for the jet (x, eta, X)."""
    return float(probe.eta @ probe.hessian @ probe.eta)


# ----------------------------------------------------------------------
# staggered (half-node) machinery; internal arrays are always 2D with
# 1D fields carried as a single column


def _as2d(values, ndim):
    return values if ndim == 2 else values[:, None]


def _edges_axis0(u2, p2, h):
    """Edge quantities between rows i and i+1: (g, t, s, pe).

    g is the longitudinal difference quotient, t the transverse
    derivative estimate (four-point average inside, one-sided on the
    outer columns, zero for single-column 1D data), s = |(g, t)|, pe the
    endpoint-mean exponent.
    """
    g = (u2[1:, :] - u2[:-1, :]) / h
    pe = 0.5 * (p2[1:, :] + p2[:-1, :])
    if u2.shape[1] == 1:
        t = np.zeros_like(g)
    else:
        t = np.empty_like(g)
        t[:, 1:-1] = (u2[:-1, 2:] + u2[1:, 2:] - u2[:-1, :-2] - u2[1:, :-2]) / (4.0 * h)
        t[:, 0] = (u2[:-1, 1] + u2[1:, 1] - u2[:-1, 0] - u2[1:, 0]) / (2.0 * h)
        t[:, -1] = (u2[:-1, -1] + u2[1:, -1] - u2[:-1, -2] - u2[1:, -2]) / (2.0 * h)
    return g, t, np.hypot(g, t), pe


def _flux_magnitude(s, pe, delta):
    """(delta^2 + s^2)^{(pe-2)/2}, continuously 0-extended when delta = 0."""
    if delta > 0.0:
        return (delta * delta + s * s) ** (0.5 * (pe - 2.0))
    mag = np.zeros_like(s)
    nz = s > 0.0
    mag[nz] = s[nz] ** (pe[nz] - 2.0)
    return mag


def _transverse_weights(n1):
    w = np.ones(n1)
    if n1 > 1:
        w[0] = w[-1] = 0.5
    return w


def neg_div_flux_field(u, p, delta=0.0):
    """-div(|Du|^{p(x)-2} Du) at every interior node; NaN on the boundary.

    Edge fluxes are differenced conservatively, so against zero-trace
    test functions this field is the exact summation-by-parts partner of
    flux_pairing.
    """
    if u.grid != p.grid:
        raise GridMismatchError("u and p must share a grid")
    ndim, h = u.grid.ndim, u.grid.h
    div = np.zeros(u.grid.shape)
    for axis in range(ndim):
        u2 = _as2d(np.moveaxis(u.values, axis, 0), ndim)
        p2 = _as2d(np.moveaxis(p.values, axis, 0), ndim)
        g, _, s, pe = _edges_axis0(u2, p2, h)
        flux = _flux_magnitude(s, pe, delta) * g
        dd = np.zeros_like(u2)
        dd[1:-1, :] = (flux[1:, :] - flux[:-1, :]) / h
        dd = dd if ndim == 1 else np.moveaxis(dd, 0, axis)
        div += dd.reshape(u.grid.shape)
    out = -div
    out[~u.grid.interior_mask(1)] = np.nan
    return out


def divergence_flux_fd(u, p, x, delta=0.0):
    """Conservative finite-difference -div(|Du|^{p-2} Du) at the node x.

    x must be a node at least two nodes away from the boundary so every
    stencil entry is interior data.
    """
    idx = u.grid.index_of(x)
    if u.grid.boundary_distance_nodes(idx) < 2:
        raise BoundaryStencilError(
            f"divergence stencil at {np.asarray(x)} reaches within 2 nodes of the boundary"
        )
    val = neg_div_flux_field(u, p, delta)[idx]
    return float(val)


def flux_pairing(u, w, p, delta=0.0):
    """int |Du|^{p(x)-2} Du . Dw by half-node quadrature.

    Both gradients are evaluated on staggered edges (w by plain
    difference quotients), with trapezoid weighting transverse to each
    edge family.
    """
    if u.grid != p.grid or w.grid != u.grid:
        raise GridMismatchError("u, w, p must share a grid")
    ndim, h = u.grid.ndim, u.grid.h
    total = 0.0
    for axis in range(ndim):
        u2 = _as2d(np.moveaxis(u.values, axis, 0), ndim)
        p2 = _as2d(np.moveaxis(p.values, axis, 0), ndim)
        w2 = _as2d(np.moveaxis(w.values, axis, 0), ndim)
        g, _, s, pe = _edges_axis0(u2, p2, h)
        flux = _flux_magnitude(s, pe, delta) * g
        dw = (w2[1:, :] - w2[:-1, :]) / h
        wt = h**ndim * _transverse_weights(u2.shape[1])[None, :]
        total += float(np.sum(wt * flux * dw))
    return total


def weak_residual(u, phi, p, f, delta=0.0):
    """R(phi) = int |Du|^{p-2} Du . Dphi - int f(x, u, Du) phi.

    phi must vanish identically on the boundary; R >= -tol certifies u
    as a discrete weak supersolution against phi, R <= tol the
    subsolution side.  The source integral is nodal trapezoid with the
    nodal (central-difference) gradient.
    """
    if phi.grid != u.grid:
        raise GridMismatchError("phi must live on u's grid")
    if np.any(phi.values[phi.grid.boundary_mask()] != 0.0):
        raise InvalidTestFunctionError("test function has nonzero boundary trace")
    pairing = flux_pairing(u, phi, p, delta)
    coords = u.grid.flat_nodes()
    grad = u.gradient_nodal().reshape(-1, u.grid.ndim)
    fvals = np.asarray(
        f.evaluate(coords, u.values.reshape(-1), grad), dtype=float
    ).reshape(u.grid.shape)
    return pairing - u.grid.integrate(fvals * phi.values)
