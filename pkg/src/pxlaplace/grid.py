"""Uniform axis-aligned grids and nodal scalar fields.

A Grid samples the closed box prod_a [lo_a, hi_a] at one spacing h shared
by every axis, boundary nodes included; only 1D and 2D boxes are
supported.  A GridFunction attaches one finite scalar per node.
Trapezoid quadrature, nodal gradients and node-aligned restriction live
here because every other module needs them.

Array layout: axis 0 of ``values`` runs along the first coordinate, so a
2D field has shape (n0, n1) and ``values[i, j]`` sits at
(lo0 + i*h, lo1 + j*h).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, GridMismatchError, ParameterError

__all__ = ["Grid", "GridFunction"]

# relative slack when snapping coordinates or box edges to nodes
_SNAP = 1e-9


@dataclass(frozen=True)
class Grid:
    bounds: tuple
    shape: tuple
    h: float

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        shape = tuple(int(n) for n in self.shape)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "h", float(self.h))
        if len(bounds) not in (1, 2) or len(shape) != len(bounds):
            raise DimensionError(f"grids are 1D or 2D, got bounds={bounds} shape={shape}")
        if not np.isfinite(self.h) or self.h <= 0:
            raise ParameterError(f"spacing must be positive, got h={self.h}")
        for (lo, hi), n in zip(bounds, shape):
            if n < 2:
                raise ParameterError(f"need at least 2 nodes per axis, got {n}")
            if not hi > lo:
                raise ParameterError(f"empty box: [{lo}, {hi}]")
            if abs((hi - lo) - (n - 1) * self.h) > _SNAP * max(1.0, hi - lo):
                raise ParameterError(
                    f"axis [{lo}, {hi}] is not divided evenly by h={self.h} into {n - 1} cells"
                )

    @staticmethod
    def from_spacing(bounds, h):
        """Grid on `bounds` with spacing `h`; every side must be a multiple of h."""
        bounds = _as_bounds(bounds)
        shape = []
        for lo, hi in bounds:
            n_cells = (hi - lo) / h
            if abs(n_cells - round(n_cells)) > _SNAP * max(1.0, n_cells):
                raise ParameterError(f"side [{lo}, {hi}] is not a multiple of h={h}")
            shape.append(int(round(n_cells)) + 1)
        return Grid(bounds, tuple(shape), h)

    @staticmethod
    def from_shape(bounds, shape):
        """Grid on `bounds` with `shape` nodes per axis; axes must agree on h."""
        bounds = _as_bounds(bounds)
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        if len(shape) != len(bounds):
            raise DimensionError(f"shape {shape} does not match bounds {bounds}")
        if any(n < 2 for n in shape):
            raise ParameterError(f"need at least 2 nodes per axis, got shape {shape}")
        spacings = [(hi - lo) / (n - 1) for (lo, hi), n in zip(bounds, shape)]
        h = spacings[0]
        if any(abs(s - h) > _SNAP * h for s in spacings[1:]):
            raise ParameterError(f"axes disagree on spacing: {spacings}")
        return Grid(bounds, shape, h)

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    def axis_nodes(self, axis):
        lo, hi = self.bounds[axis]
        return lo + self.h * np.arange(self.shape[axis])

    def nodes(self):
        """Node coordinates, shape (*shape, ndim)."""
        axes = [self.axis_nodes(a) for a in range(self.ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat_nodes(self):
        """Node coordinates flattened to (n_nodes, ndim), row-major order."""
        return self.nodes().reshape(-1, self.ndim)

    def trapezoid_weights(self):
        """Composite trapezoid weights (1/2 on faces, 1/4 at 2D corners)."""
        w = np.ones(self.shape)
        for a in range(self.ndim):
            idx = [slice(None)] * self.ndim
            for end in (0, -1):
                idx[a] = end
                w[tuple(idx)] *= 0.5
        return w

    def integrate(self, values):
        """Trapezoid quadrature of nodal `values` over the box."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise GridMismatchError(f"values shape {values.shape} != grid shape {self.shape}")
        return float(self.h**self.ndim * np.sum(self.trapezoid_weights() * values))

    def boundary_mask(self):
        return ~self.interior_mask(1)

    def interior_mask(self, depth=1):
        """Nodes at least `depth` nodes away from every boundary face."""
        if depth < 1:
            raise ParameterError("depth must be >= 1")
        m = np.ones(self.shape, dtype=bool)
        for a in range(self.ndim):
            idx = np.arange(self.shape[a])
            far = (idx >= depth) & (idx <= self.shape[a] - 1 - depth)
            m &= far.reshape([-1 if ax == a else 1 for ax in range(self.ndim)])
        return m

    def index_of(self, x):
        """Multi-index of the node at coordinates `x`; x must sit on a node."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.ndim,):
            raise DimensionError(f"point {x} does not match grid dimension {self.ndim}")
        idx = []
        for a, (lo, hi) in enumerate(self.bounds):
            t = (x[a] - lo) / self.h
            i = int(round(t))
            if abs(t - i) > _SNAP * max(1.0, abs(t)) or not 0 <= i < self.shape[a]:
                raise ParameterError(f"{x} is not a node of this grid")
            idx.append(i)
        return tuple(idx)

    def coords(self, idx):
        """Coordinates of the node with multi-index `idx`."""
        return np.array([lo + self.h * i for (lo, _), i in zip(self.bounds, idx)])

    def boundary_distance_nodes(self, idx):
        """Distance from node `idx` to the nearest boundary face, in nodes."""
        return min(min(i, n - 1 - i) for i, n in zip(idx, self.shape))

    def subgrid_slices(self, box):
        """Node-aligned slices covering `box` (same bounds format as the grid).

        The returned sub-box is the largest node-aligned box inside `box`;
        it must keep at least 2 nodes per axis.
        """
        box = _as_bounds(box)
        if len(box) != self.ndim:
            raise DimensionError(f"box {box} does not match grid dimension {self.ndim}")
        slices = []
        for a, (blo, bhi) in enumerate(box):
            lo, hi = self.bounds[a]
            i0 = int(np.ceil((blo - lo) / self.h - _SNAP))
            i1 = int(np.floor((bhi - lo) / self.h + _SNAP))
            i0, i1 = max(i0, 0), min(i1, self.shape[a] - 1)
            if i1 - i0 < 1:
                raise ParameterError(f"box {box} holds fewer than 2 nodes along axis {a}")
            slices.append(slice(i0, i1 + 1))
        return tuple(slices)

    def subgrid(self, box):
        """(sub-Grid, slices) for the node-aligned restriction to `box`."""
        slices = self.subgrid_slices(box)
        bounds = []
        for a, s in enumerate(slices):
            lo = self.bounds[a][0]
            bounds.append((lo + s.start * self.h, lo + (s.stop - 1) * self.h))
        shape = tuple(s.stop - s.start for s in slices)
        return Grid(tuple(bounds), shape, self.h), slices

    def refined(self):
        """Same box at spacing h/2 (nodes of self are a subset)."""
        shape = tuple(2 * (n - 1) + 1 for n in self.shape)
        return Grid(self.bounds, shape, self.h / 2)

    def side_lengths(self):
        return tuple(hi - lo for lo, hi in self.bounds)


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatchError(
                f"values shape {values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ParameterError("grid function values must be finite at every node")
        object.__setattr__(self, "values", values)

    @staticmethod
    def from_callable(grid, fn):
        """Sample `fn` at the nodes; fn takes (..., ndim) coordinate arrays."""
        vals = np.asarray(fn(grid.nodes()), dtype=float)
        return GridFunction(grid, np.broadcast_to(vals, grid.shape).copy())

    def with_values(self, values):
        return GridFunction(self.grid, values)

    def oscillation(self):
        return float(self.values.max() - self.values.min())

    def lipschitz_constant(self):
        """Largest axis-direction difference quotient |u_i - u_j| / h."""
        best = 0.0
        for a in range(self.grid.ndim):
            d = np.abs(np.diff(self.values, axis=a)) / self.grid.h
            if d.size:
                best = max(best, float(d.max()))
        return best

    def gradient_nodal(self):
        """Nodal gradient: central differences inside, one-sided at the boundary.

        Returns shape (*shape, ndim).  Second-order one-sided stencils when
        the axis holds >= 3 nodes.
        """
        parts = []
        for a in range(self.grid.ndim):
            order = 2 if self.grid.shape[a] >= 3 else 1
            parts.append(np.gradient(self.values, self.grid.h, axis=a, edge_order=order))
        return np.stack(parts, axis=-1)

    def gradient_magnitude(self):
        g = self.gradient_nodal()
        return np.sqrt(np.sum(g * g, axis=-1))

    def restrict(self, box):
        """Restriction to the node-aligned sub-box of `box`."""
        sub, slices = self.grid.subgrid(box)
        return GridFunction(sub, self.values[slices].copy())

    def integrate(self):
        return self.grid.integrate(self.values)


def _as_bounds(bounds):
    """Normalize ((lo, hi), ...) / (lo, hi) inputs to a tuple of pairs."""
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim == 1 and arr.shape == (2,):
        return ((float(arr[0]), float(arr[1])),)
    if arr.ndim == 2 and arr.shape[1] == 2 and arr.shape[0] in (1, 2):
        return tuple((float(lo), float(hi)) for lo, hi in arr)
    raise DimensionError(f"cannot interpret bounds {bounds!r}")
