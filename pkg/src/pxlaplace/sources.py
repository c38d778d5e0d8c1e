"""Source terms f(x, t, eta) and their structural hypotheses.

A source is admissible for the comparison machinery when it is
non-increasing in t and controlled by the growth envelope

    |f(x, t, eta)| <= gamma(|t|) |eta|^{p(x)-1} + phi(x)

with gamma continuous and non-decreasing.  ``validate_growth`` samples
these hypotheses on the grid rather than proving them; a red report
means a concrete counterexample was found at the quoted node.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError
from .grid import GridFunction
from .report import CheckReport

__all__ = ["SourceSpec", "source_preset", "validate_growth"]


@dataclass(frozen=True)
class SourceSpec:
    """Vectorized source with its declared growth envelope.

    evaluate(x, t, eta) takes x of shape (N, d), t of shape (N,), eta of
    shape (N, d) and returns shape (N,).  ``phi`` may be a scalar bound
    or a GridFunction sampled on the working grid.  ``lipschitz_eta`` is
    a declared Lipschitz constant in eta (0 means eta-independent).
    ``x_only`` marks sources that ignore (t, eta), which unlocks the
    direct variational solver.
    """

    evaluate: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    gamma: Callable[[np.ndarray], np.ndarray]
    phi: "GridFunction | float"
    lipschitz_eta: float = 0.0
    monotone_t: bool = True
    x_only: bool = False
    label: str = ""

    def phi_max(self):
        if isinstance(self.phi, GridFunction):
            return float(np.max(np.abs(self.phi.values)))
        return float(abs(self.phi))

    def phi_at(self, x):
        """phi sampled at points x of shape (N, d)."""
        if isinstance(self.phi, GridFunction):
            g = self.phi.grid
            idx = np.stack(
                [
                    np.rint((x[:, a] - g.bounds[a][0]) / g.h).astype(int)
                    for a in range(g.ndim)
                ],
                axis=0,
            )
            idx = np.clip(idx, 0, np.array(g.shape)[:, None] - 1)
            return self.phi.values[tuple(idx)]
        return np.full(x.shape[0], float(abs(self.phi)))

    def sample(self, grid, u):
        """Nodal field f(x, u(x), Du(x)) as a flat array of len(grid)."""
        x = grid.flat_nodes()
        t = np.asarray(u.values, dtype=float).reshape(-1)
        eta = u.gradient_nodal().reshape(-1, grid.ndim)
        return np.asarray(self.evaluate(x, t, eta), dtype=float)


def _const_gamma(c):
    c = float(c)
    return lambda s: np.full_like(np.asarray(s, dtype=float), c)


def source_preset(name, grid=None, **params):
    """Build a named source.

    Presets: "zero"; "constant" (value); "sine" (amplitude, frequency:
    product of per-axis sine bumps vanishing on the boundary);
    "damping" (coefficient, t_bound: f = -coefficient * t, envelope valid
    for |t| <= t_bound); "eta-linear" (coefficient: f = coefficient *
    |eta|, needs p >= 2 for its envelope).
    """
    def reject_extra(allowed):
        extra = set(params) - set(allowed)
        if extra:
            raise ParameterError(f"unknown parameters for source '{name}': {sorted(extra)}")

    if name == "zero":
        reject_extra(())
        return SourceSpec(
            evaluate=lambda x, t, eta: np.zeros(x.shape[0]),
            gamma=_const_gamma(0.0),
            phi=0.0,
            x_only=True,
            label="zero",
        )
    if name == "constant":
        reject_extra(("value",))
        c = float(params.get("value", 1.0))
        return SourceSpec(
            evaluate=lambda x, t, eta: np.full(x.shape[0], c),
            gamma=_const_gamma(0.0),
            phi=abs(c),
            x_only=True,
            label=f"constant {c:g}",
        )
    if name == "sine":
        reject_extra(("amplitude", "frequency"))
        if grid is None:
            raise ParameterError("sine source needs the grid for its box")
        amp = float(params.get("amplitude", 1.0))
        freq = int(params.get("frequency", 1))
        if freq < 1:
            raise ParameterError(f"frequency must be a positive integer, got {freq}")
        bounds = grid.bounds

        def evaluate(x, t, eta):
            out = np.full(x.shape[0], amp)
            for a, (lo, hi) in enumerate(bounds):
                out = out * np.sin(freq * np.pi * (x[:, a] - lo) / (hi - lo))
            return out

        return SourceSpec(
            evaluate=evaluate,
            gamma=_const_gamma(0.0),
            phi=abs(amp),
            x_only=True,
            label=f"sine amp={amp:g} freq={freq}",
        )
    if name == "damping":
        reject_extra(("coefficient", "t_bound"))
        c = float(params.get("coefficient", 1.0))
        t_bound = float(params.get("t_bound", 2.0))
        if c < 0:
            raise ParameterError(f"damping coefficient must be >= 0, got {c}")

        return SourceSpec(
            evaluate=lambda x, t, eta: -c * t,
            gamma=_const_gamma(0.0),
            phi=c * t_bound,
            label=f"damping {c:g} (|t| <= {t_bound:g})",
        )
    if name == "eta-linear":
        reject_extra(("coefficient",))
        c = float(params.get("coefficient", 1.0))
        if c < 0:
            raise ParameterError(f"eta-linear coefficient must be >= 0, got {c}")

        # |eta| <= |eta|^{p-1} + 1 for p >= 2, split at |eta| = 1
        return SourceSpec(
            evaluate=lambda x, t, eta: c * np.linalg.norm(eta, axis=1),
            gamma=_const_gamma(c),
            phi=c,
            lipschitz_eta=c,
            monotone_t=True,
            label=f"eta-linear {c:g}",
        )
    raise ParameterError(f"unknown source preset '{name}'")


def validate_growth(
    f,
    p,
    t_range=(-2.0, 2.0),
    eta_radius=5.0,
    n_samples=2000,
    seed=0,
    tolerance=None,
):
    """Sampled audit of the growth envelope and the structural flags.

    Draws nodes, t values, and eta vectors (with a spread of magnitudes
    down to zero), then checks the envelope, monotonicity in t on
    sampled pairs, and the declared eta-Lipschitz constant.  Worst
    violators are quoted in the notes.
    """
    grid = p.grid
    rng = np.random.default_rng(seed)
    if tolerance is None:
        tolerance = 1e-9
    rep = CheckReport("source growth audit", tolerance)
    nodes = grid.flat_nodes()
    pick = rng.integers(0, nodes.shape[0], size=n_samples)
    x = nodes[pick]
    pvals = p.values.reshape(-1)[pick]
    t = rng.uniform(t_range[0], t_range[1], size=n_samples)
    direc = rng.normal(size=(n_samples, grid.ndim))
    norms = np.linalg.norm(direc, axis=1)
    norms[norms == 0] = 1.0
    direc /= norms[:, None]
    mag = eta_radius * rng.uniform(0.0, 1.0, size=n_samples) ** 2
    mag[: n_samples // 50] = 0.0  # force eta = 0 into the sample
    eta = direc * mag[:, None]

    fx = np.asarray(f.evaluate(x, t, eta), dtype=float)
    envelope = f.gamma(np.abs(t)) * mag ** (pvals - 1.0) + f.phi_at(x)
    slack = envelope - np.abs(fx)
    worst = int(np.argmin(slack))
    rep.add("growth envelope |f| <= gamma(|t|)|eta|^{p-1} + phi", float(slack[worst]), 0.0)
    rep.note(
        "worst envelope sample: x=%s t=%.3g |eta|=%.3g slack=%.3g"
        % (np.array2string(x[worst], precision=3), t[worst], mag[worst], slack[worst])
    )

    if f.monotone_t:
        t2 = t + rng.uniform(0.0, t_range[1] - t_range[0], size=n_samples)
        fx2 = np.asarray(f.evaluate(x, t2, eta), dtype=float)
        gap = np.where(t2 > t, fx - fx2, 0.0)  # need f(t) >= f(t2) for t2 > t
        rep.add("non-increasing in t", float(np.min(gap)), 0.0)

    if f.lipschitz_eta > 0:
        eta2 = eta + rng.normal(scale=eta_radius / 4.0, size=eta.shape)
        fx3 = np.asarray(f.evaluate(x, t, eta2), dtype=float)
        bound = f.lipschitz_eta * np.linalg.norm(eta2 - eta, axis=1)
        rep.add("eta-Lipschitz constant honored", float(np.min(bound - np.abs(fx3 - fx))), 0.0)

    return rep
