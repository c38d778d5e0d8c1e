"""Discrete inf- and sup-convolutions with power kernels.

u_eps(x) = min_y [ u(y) + |x - y|^q / (q eps^{q-1}) ], minimized over
grid nodes.  Because u_eps(x) <= u(x), any minimizer satisfies
|x - y|^q <= q eps^{q-1} osc(u), so the search may be restricted to the
closed ball of radius r_eps = (q eps^{q-1} osc(u))^{1/q} without
changing the result; 2D convolutions use that window, 1D ones take the
full pairwise minimum.  Ties go to the lexicographically smallest
minimizer, which the scan order guarantees.

The companion checks assert the standard envelope properties on the
retracted region Omega_{r(eps)} = {x : dist(x, boundary) > r_eps}:
monotone increase toward u as eps decreases, the semiconcavity bound,
and the first-order jet read off the argmin.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .grid import GridFunction
from .report import CheckReport
from .sources import SourceSpec

__all__ = [
    "ConvolutionResult",
    "ArgminJet",
    "inf_convolve",
    "sup_convolve",
    "semiconcavity_constant",
    "monotone_family_check",
    "semiconcavity_check",
    "jet_from_argmin",
    "f_lower_envelope",
]


@dataclass(frozen=True)
class ConvolutionResult:
    u: GridFunction
    u_eps: GridFunction
    argmin: np.ndarray = field(repr=False)  # node multi-indices, (*shape, ndim)
    epsilon: float
    q: float
    r_eps: float

    @property
    def grid(self):
        return self.u.grid

    def argmin_coords(self):
        """Coordinates of the per-node minimizers, shape (*shape, ndim)."""
        lows = np.array([lo for lo, _ in self.grid.bounds])
        return lows + self.grid.h * self.argmin.astype(float)

    def region_mask(self):
        """Nodes with distance to the boundary strictly greater than r_eps."""
        coords = self.grid.nodes()
        mask = np.ones(self.grid.shape, dtype=bool)
        for a, (lo, hi) in enumerate(self.grid.bounds):
            d = np.minimum(coords[..., a] - lo, hi - coords[..., a])
            mask &= d > self.r_eps
        return mask


def _check_params(epsilon, q):
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if not np.isfinite(q) or q < 2:
        raise ParameterError(f"kernel exponent q must be >= 2, got {q}")


def inf_convolve(u, epsilon, q=2.0):
    """Inf-convolution of a grid function with kernel |x-y|^q/(q eps^{q-1})."""
    _check_params(epsilon, q)
    grid = u.grid
    scale = q * epsilon ** (q - 1.0)
    r_eps = (scale * u.oscillation()) ** (1.0 / q)

    if grid.ndim == 1:
        x = grid.axis_nodes(0)
        dist = np.abs(x[:, None] - x[None, :])
        cand = u.values[None, :] + dist**q / scale
        best = np.argmin(cand, axis=1)  # first minimum = smallest y
        vals = cand[np.arange(x.size), best]
        argmin = best[:, None]
        return ConvolutionResult(u, GridFunction(grid, vals), argmin, epsilon, q, r_eps)

    h = grid.h
    k = int(np.floor(r_eps / h + 1e-12))
    vals = u.values.copy()
    n0, n1 = grid.shape
    idx0, idx1 = np.meshgrid(np.arange(n0), np.arange(n1), indexing="ij")
    arg0, arg1 = idx0.copy(), idx1.copy()
    # offsets in lexicographic order so strict improvement keeps the
    # lexicographically smallest minimizer on ties
    for o0 in range(-k, k + 1):
        for o1 in range(-k, k + 1):
            if o0 == 0 and o1 == 0:
                continue
            d = h * np.hypot(o0, o1)
            if d > r_eps * (1 + 1e-12):
                continue
            pen = d**q / scale
            dst0 = slice(max(0, -o0), min(n0, n0 - o0))
            dst1 = slice(max(0, -o1), min(n1, n1 - o1))
            src0 = slice(max(0, o0), min(n0, n0 + o0))
            src1 = slice(max(0, o1), min(n1, n1 + o1))
            cand = u.values[src0, src1] + pen
            better = cand < vals[dst0, dst1]
            vals[dst0, dst1] = np.where(better, cand, vals[dst0, dst1])
            arg0[dst0, dst1] = np.where(better, idx0[src0, src1], arg0[dst0, dst1])
            arg1[dst0, dst1] = np.where(better, idx1[src0, src1], arg1[dst0, dst1])
    argmin = np.stack([arg0, arg1], axis=-1)
    return ConvolutionResult(u, GridFunction(grid, vals), argmin, epsilon, q, r_eps)


def sup_convolve(u, epsilon, q=2.0):
    """Sup-convolution via the exact duality u^eps = -((-u)_eps)."""
    neg = inf_convolve(u.with_values(-u.values), epsilon, q)
    return ConvolutionResult(
        u,
        GridFunction(u.grid, -neg.u_eps.values),
        neg.argmin.copy(),
        epsilon,
        q,
        neg.r_eps,
    )


def semiconcavity_constant(epsilon, q, r_eps):
    """Upper bound C with D^2 u_eps <= 2C I in the retracted region."""
    _check_params(epsilon, q)
    if q == 2.0:
        return 1.0 / (2.0 * epsilon)
    return (q - 1.0) / (2.0 * epsilon) * (2.0 * r_eps) ** (q - 2.0) / epsilon ** (q - 2.0)


def monotone_family_check(u, epsilons, q=2.0, tolerance=None):
    """Monotone approximation along a strictly decreasing epsilon list.

    Asserts u_{eps_1} <= u_{eps_2} <= ... <= u nodewise, that each
    member is dominated by u, that max|u_eps - u| is non-increasing, and
    that r_eps strictly shrinks with eps.  All of these are exact
    discretely, so the default tolerance only covers roundoff.
    Returns (report, [ConvolutionResult...]).
    """
    eps = [float(e) for e in epsilons]
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])) or min(eps) <= 0:
        raise ParameterError(f"need a strictly decreasing positive epsilon list, got {eps}")
    if tolerance is None:
        tolerance = 1e-12 * (1.0 + u.oscillation())
    family = [inf_convolve(u, e, q) for e in eps]
    rep = CheckReport("inf-convolution family", tolerance)
    for res in family:
        rep.add(f"u_eps <= u (eps={res.epsilon:g})", float(np.min(u.values - res.u_eps.values)), 0.0)
    for a, b in zip(family, family[1:]):
        rep.add(
            f"monotone in eps ({a.epsilon:g} -> {b.epsilon:g})",
            float(np.min(b.u_eps.values - a.u_eps.values)),
            0.0,
        )
        dev_a = float(np.max(np.abs(a.u_eps.values - u.values)))
        dev_b = float(np.max(np.abs(b.u_eps.values - u.values)))
        rep.add(f"deviation non-increasing ({a.epsilon:g} -> {b.epsilon:g})", dev_a, dev_b)
        rep.add(f"r_eps shrinks ({a.epsilon:g} -> {b.epsilon:g})", a.r_eps, b.r_eps)
    return rep, family


def semiconcavity_check(result, tolerance=None):
    """Second differences of u_eps against 2C in the retracted region.

    Directions: every axis, plus both diagonals in 2D.  The discrete
    second difference of the kernel paraboloid equals its curvature for
    q = 2 and overshoots by O(h) otherwise, which the default tolerance
    10 h absorbs.
    """
    grid = result.grid
    if tolerance is None:
        tolerance = 10.0 * grid.h
    c2 = 2.0 * semiconcavity_constant(result.epsilon, result.q, result.r_eps)
    rep = CheckReport("semiconcavity", tolerance)
    rep.note(f"eps={result.epsilon:g} q={result.q:g} r_eps={result.r_eps:g} 2C={c2:g}")
    vals = result.u_eps.values
    region = result.region_mask() & grid.interior_mask(1)
    h2 = grid.h**2
    dirs = []
    if grid.ndim == 1:
        dirs.append(("axis 0", (vals[2:] - 2 * vals[1:-1] + vals[:-2]) / h2, region[1:-1]))
    else:
        dirs.append(
            ("axis 0", (vals[2:, :] - 2 * vals[1:-1, :] + vals[:-2, :]) / h2, region[1:-1, :])
        )
        dirs.append(
            ("axis 1", (vals[:, 2:] - 2 * vals[:, 1:-1] + vals[:, :-2]) / h2, region[:, 1:-1])
        )
        diag = (vals[2:, 2:] - 2 * vals[1:-1, 1:-1] + vals[:-2, :-2]) / (2 * h2)
        dirs.append(("diagonal +", diag, region[1:-1, 1:-1]))
        anti = (vals[2:, :-2] - 2 * vals[1:-1, 1:-1] + vals[:-2, 2:]) / (2 * h2)
        dirs.append(("diagonal -", anti, region[1:-1, 1:-1]))
    for label, dd, mask in dirs:
        if not np.any(mask):
            rep.note(f"{label}: retracted region empty, nothing to check")
            continue
        rep.add(f"second difference <= 2C ({label})", c2, float(dd[mask].max()))
    return rep


@dataclass(frozen=True)
class ArgminJet:
    """First-order jet of u_eps at x, read off the argmin x_eps."""

    x: np.ndarray
    x_eps: np.ndarray
    eta: np.ndarray
    curvature_bound: float  # D^2 u_eps <= curvature_bound * I in the jet sense


def jet_from_argmin(result, x):
    """eta = (x - x_eps) |x - x_eps|^{q-2} / eps^{q-1} and its Hessian bound.

    The bound is (q-1)/eps * |eta|^{(q-2)/(q-1)}; for q = 2 it reduces to
    1/eps independently of eta.
    """
    idx = result.grid.index_of(x)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_eps = result.argmin_coords()[idx]
    d = x - x_eps
    dist = float(np.linalg.norm(d))
    eps, q = result.epsilon, result.q
    eta = d * dist ** (q - 2.0) / eps ** (q - 1.0) if dist > 0 else np.zeros_like(d)
    if q == 2.0:
        bound = 1.0 / eps
    else:
        s = float(np.linalg.norm(eta))
        bound = (q - 1.0) / eps * s ** ((q - 2.0) / (q - 1.0))
    return ArgminJet(x, x_eps, eta, bound)


def f_lower_envelope(f, grid, r_eps):
    """Relaxed source f_eps(x, s, eta) = min_{|y-x| <= r_eps} f(y, s, eta).

    The minimum runs over grid nodes y in the closed ball (x itself
    always included), matching the search radius of the convolution that
    produced r_eps.  Growth metadata is inherited unchanged: a pointwise
    minimum can only shrink |f| where the envelope bound is one-sided.
    """
    if r_eps < 0 or not np.isfinite(r_eps):
        raise ParameterError(f"r_eps must be finite and >= 0, got {r_eps}")
    h, ndim = grid.h, grid.ndim
    k = int(np.floor(r_eps / h + 1e-12))
    if ndim == 1:
        offsets = [(o,) for o in range(-k, k + 1)]
    else:
        offsets = [(a, b) for a in range(-k, k + 1) for b in range(-k, k + 1)]
    offsets = [o for o in offsets if h * np.linalg.norm(o) <= r_eps * (1 + 1e-12)]
    lows = np.array([lo for lo, _ in grid.bounds])
    highs = np.array([hi for _, hi in grid.bounds])

    def evaluate(x, t, eta):
        x = np.asarray(x, dtype=float).reshape(-1, ndim)
        t = np.asarray(t, dtype=float).reshape(-1)
        eta = np.asarray(eta, dtype=float).reshape(-1, ndim)
        out = np.full(t.shape, np.inf)
        for o in offsets:
            y = x + h * np.asarray(o, dtype=float)
            valid = np.all((y >= lows - 1e-9 * h) & (y <= highs + 1e-9 * h), axis=1)
            if not np.any(valid):
                continue
            vals = np.asarray(f.evaluate(y[valid], t[valid], eta[valid]), dtype=float)
            out[valid] = np.minimum(out[valid], vals)
        return out

    return SourceSpec(
        evaluate=evaluate,
        gamma=f.gamma,
        phi=f.phi,
        lipschitz_eta=f.lipschitz_eta,
        monotone_t=f.monotone_t,
        x_only=f.x_only,
        label=f"lower envelope (r={r_eps:g}) of {f.label}" if f.label else "lower envelope",
    )
