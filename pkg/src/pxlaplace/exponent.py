"""Variable exponent fields p(x) on a grid.

The exponent field drives everything else: modular integrands, the
diffusion tensor, the drift term and the convolution parameter q.  It is
stored nodally together with a finite-difference gradient; validation
rejects any node with p <= 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidExponentError, ParameterError
from .grid import Grid, GridFunction

__all__ = [
    "ExponentField",
    "build_exponent_field",
    "exponent_expression",
    "log_holder_constant",
    "choose_q",
]


@dataclass(frozen=True)
class ExponentField:
    grid: Grid
    values: np.ndarray = field(repr=False)
    gradient: np.ndarray = field(repr=False)  # shape (*shape, ndim)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        gradient = np.asarray(self.gradient, dtype=float)
        if values.shape != self.grid.shape:
            raise InvalidExponentError(
                f"exponent shape {values.shape} != grid shape {self.grid.shape}"
            )
        if gradient.shape != self.grid.shape + (self.grid.ndim,):
            raise InvalidExponentError(f"gradient shape {gradient.shape} is wrong")
        bad = ~(np.isfinite(values) & (values > 1.0))
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise InvalidExponentError(
                f"exponent must be finite and > 1 everywhere; "
                f"p{idx} = {values[idx]} at x = {self.grid.coords(idx)}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gradient", gradient)

    @staticmethod
    def from_values(grid, values):
        """Wrap nodal values, attaching a central-difference gradient."""
        gf = GridFunction(grid, values)
        return ExponentField(grid, gf.values, gf.gradient_nodal())

    @property
    def p_minus(self):
        return float(self.values.min())

    @property
    def p_plus(self):
        return float(self.values.max())

    def at(self, x):
        """(p, grad p) at the node with coordinates `x`."""
        idx = self.grid.index_of(x)
        return float(self.values[idx]), self.gradient[idx].copy()

    def conjugate(self):
        """Pointwise Holder conjugate p' = p/(p-1) as a new field."""
        return ExponentField.from_values(self.grid, self.values / (self.values - 1.0))


def build_exponent_field(expression, bounds, h):
    """Sample a closed-form exponent on Grid.from_spacing(bounds, h).

    `expression` maps coordinate arrays of shape (..., ndim) to values;
    scalars broadcast.  The stored gradient is the central difference of
    the sampled values (one-sided at the boundary), so it converges at
    O(h^2) to the analytic gradient for smooth expressions.
    """
    grid = Grid.from_spacing(bounds, h)
    vals = np.asarray(expression(grid.nodes()), dtype=float)
    vals = np.broadcast_to(vals, grid.shape).copy()
    if not np.all(np.isfinite(vals)):
        raise InvalidExponentError("exponent expression produced non-finite values")
    return ExponentField.from_values(grid, vals)


def exponent_expression(preset, params=None):
    """Closed-form exponent presets usable with build_exponent_field.

    constant:   p = value                      (params: value)
    affine:     p = a + b.x                    (params: a, b per axis)
    sine-bump:  p = base + amp * prod sin(pi (x_a - lo_a)/(hi_a - lo_a))
                (params: base, amplitude, lo, hi per axis)
    """
    params = dict(params or {})
    if preset == "constant":
        value = float(params.pop("value", 2.0))
        _reject_extra(params, preset)
        return lambda x: np.full(x.shape[:-1], value)
    if preset == "affine":
        a = float(params.pop("a", 2.0))
        b = np.atleast_1d(np.asarray(params.pop("b", 0.5), dtype=float))
        _reject_extra(params, preset)
        return lambda x: a + np.sum(b * x, axis=-1)
    if preset == "sine-bump":
        base = float(params.pop("base", 2.0))
        amp = float(params.pop("amplitude", 0.5))
        lo = np.atleast_1d(np.asarray(params.pop("lo", 0.0), dtype=float))
        hi = np.atleast_1d(np.asarray(params.pop("hi", 1.0), dtype=float))
        _reject_extra(params, preset)

        def bump(x):
            t = (x - lo) / (hi - lo)
            return base + amp * np.prod(np.sin(np.pi * t), axis=-1)

        return bump
    raise ParameterError(f"unknown exponent preset {preset!r}")


def _reject_extra(params, preset):
    if params:
        raise ParameterError(f"unknown parameters for exponent preset {preset!r}: {sorted(params)}")


def log_holder_constant(p):
    """max |p(x) - p(y)| * |log|x - y|| over node pairs with 0 < |x-y| < 1/2.

    Exact over all pairs, evaluated in chunks; quadratic in the node
    count, so intended for diagnostic use on desk-scale grids.  Returns
    0.0 when no pair is closer than 1/2 (then the constant is vacuous).
    """
    coords = p.grid.flat_nodes()
    vals = p.values.reshape(-1)
    n = coords.shape[0]
    best = 0.0
    chunk = max(1, int(2e6) // max(n, 1))
    for start in range(0, n, chunk):
        block = coords[start : start + chunk]  # (m, d)
        diff = block[:, None, :] - coords[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        mask = (dist > 0.0) & (dist < 0.5)
        if not np.any(mask):
            continue
        dp = np.abs(vals[start : start + chunk, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            prod = np.where(mask, dp * np.abs(np.log(dist)), 0.0)
        best = max(best, float(prod.max()))
    return best


def choose_q(p_minus):
    """Smallest admissible convolution exponent q >= 2.

    The inf-convolution analysis needs p_minus - 2 + (q-2)/(q-1) >= 0;
    solving for equality gives q = p_minus/(p_minus - 1), so the binding
    choice is q = max(2, p_minus/(p_minus - 1)).
    """
    p_minus = float(p_minus)
    if not np.isfinite(p_minus) or p_minus <= 1.0:
        raise ParameterError(f"p_minus must be > 1, got {p_minus}")
    q = max(2.0, p_minus / (p_minus - 1.0))
    # the defining constraint must hold (exactly at the binding value)
    assert p_minus - 2.0 + (q - 2.0) / (q - 1.0) >= -1e-12
    return q
