"""Density-weighted centroids, the coverage function H and Lloyd iteration.

Every integral is a midpoint Riemann sum over the nodes of a :class:`Grid`.
Nodes are assigned to Voronoi cells by nearest generator with the lowest
index winning ties, the same rule :meth:`VoronoiPartition.locate` uses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGenerators, NonConvergence, ZeroMass
from .geometry import (
    ConvexPolygon,
    Grid,
    as_points,
    contains_points,
    grid_nodes,
    voronoi_partition,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Nonnegative weights on grid nodes, looked up at the nearest node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1).copy()
        if v.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} values, got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("density values must be finite and nonnegative")
        if not np.any(v > 0):
            raise ZeroMass("density is zero at every grid node")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def domain(self) -> ConvexPolygon:
        return self.grid.domain

    @property
    def grid_step(self) -> float:
        return self.grid.step

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @classmethod
    def from_function(cls, domain: ConvexPolygon, step: float, fn) -> "DensityField":
        grid = grid_nodes(domain, step)
        return cls(grid, fn(grid.nodes))

    @classmethod
    def uniform(cls, domain: ConvexPolygon, step: float) -> "DensityField":
        return cls.from_function(domain, step, lambda q: np.ones(len(q)))

    @classmethod
    def from_estimate(cls, grid: Grid, estimate) -> "DensityField":
        """Density from a field estimate, with negative predictions clamped to 0."""
        est = np.asarray(estimate, dtype=float)
        neg = int(np.count_nonzero(est < 0))
        if neg:
            log.debug("clamped %d negative estimate values to zero", neg)
        return cls(grid, np.maximum(est, 0.0))

    def scaled(self, factor: float) -> "DensityField":
        return DensityField(self.grid, self.values * factor)

    def __call__(self, pts) -> np.ndarray:
        pts = as_points(pts)
        d2 = ((pts[:, None, :] - self.nodes[None, :, :]) ** 2).sum(-1)
        return self.values[np.argmin(d2, axis=1)]

    def total_mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)


def centroid(cell: ConvexPolygon, density: DensityField) -> np.ndarray:
    """Density-weighted centroid of the grid nodes inside ``cell``."""
    mask = contains_points(cell, density.nodes)
    w = density.values[mask]
    mass = w.sum()
    if not mass > 0:
        raise ZeroMass("no positive-density grid node inside the cell")
    return (w @ density.nodes[mask]) / mass


def _assign(generators: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    d2 = ((nodes[:, None, :] - generators[None, :, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)


def cell_centroids(generators, density: DensityField, labels=None):
    """Centroids and masses of every Voronoi cell, from a node labelling.

    Per-cell sums go through ``np.bincount``, whose summation order is fixed
    by node order, so results do not depend on how cells are visited.
    """
    gens = as_points(generators)
    n = len(gens)
    nodes = density.nodes
    if labels is None:
        labels = _assign(gens, nodes)
    w = density.values
    mass = np.bincount(labels, weights=w, minlength=n)
    sx = np.bincount(labels, weights=w * nodes[:, 0], minlength=n)
    sy = np.bincount(labels, weights=w * nodes[:, 1], minlength=n)
    empty = ~(mass > 0)
    if empty.any():
        raise ZeroMass(
            f"cells {np.flatnonzero(empty).tolist()} hold no positive density on the grid"
        )
    return np.column_stack([sx / mass, sy / mass]), mass


def cell_statistics(labels, density: DensityField, n: int):
    """(H, centroids, masses) for a labelling of the grid nodes into n cells.

    Cells without mass get a NaN centroid and contribute nothing to H.
    """
    nodes, w = density.nodes, density.values
    mass = np.bincount(labels, weights=w, minlength=n)
    sx = np.bincount(labels, weights=w * nodes[:, 0], minlength=n)
    sy = np.bincount(labels, weights=w * nodes[:, 1], minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        cents = np.column_stack([sx / mass, sy / mass])
    cents[~(mass > 0)] = np.nan
    d2 = np.where(w > 0, ((nodes - cents[labels]) ** 2).sum(axis=1), 0.0)
    return float((w * d2).sum() * density.grid.cell_area), cents, mass


def coverage_value(generators, density: DensityField, domain: ConvexPolygon | None = None) -> float:
    """H(x; mu): sum over cells of the density-weighted squared distance to the cell centroid."""
    domain = density.domain if domain is None else domain
    part = voronoi_partition(generators, domain)
    h, _, _ = cell_statistics(part.locate(density.nodes), density, len(part.generators))
    return h


def _separate(points: np.ndarray, part, step: float) -> np.ndarray:
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    if d2.min() > 1e-18:
        return points
    out = points.copy()
    for i in range(len(out)):
        for j in range(i):
            if ((out[i] - out[j]) ** 2).sum() <= 1e-18:
                inner = part.cells[i].vertex_centroid() - out[i]
                norm = np.hypot(*inner)
                if norm == 0:
                    raise DegenerateGenerators(f"centroids {j} and {i} coincide")
                out[i] += step * 1e-3 * inner / norm
                log.warning("centroids %d and %d coincided; nudged %d into its cell", j, i, i)
    return out


def lloyd_step(generators, density: DensityField, domain: ConvexPolygon | None = None) -> np.ndarray:
    """One partition-then-recentre update: every generator moves to its cell centroid."""
    domain = density.domain if domain is None else domain
    part = voronoi_partition(generators, domain)
    cents, _ = cell_centroids(part.generators, density, part.locate(density.nodes))
    return _separate(cents, part, density.grid_step)


@dataclass
class LloydResult:
    positions: np.ndarray
    history: list = field(default_factory=list)
    coverage: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def run_lloyd(
    generators,
    density: DensityField,
    domain: ConvexPolygon | None = None,
    max_iters: int = 500,
    tol: float | None = None,
    raise_on_cap: bool = False,
) -> LloydResult:
    """Iterate :func:`lloyd_step` until no generator moves more than ``tol``.

    ``tol`` defaults to one hundredth of the grid step.
    """
    domain = density.domain if domain is None else domain
    tol = density.grid_step * 1e-2 if tol is None else tol
    x = as_points(generators).copy()
    res = LloydResult(x, [x], [coverage_value(x, density, domain)])
    for _ in range(max_iters):
        nxt = lloyd_step(x, density, domain)
        res.history.append(nxt)
        res.coverage.append(coverage_value(nxt, density, domain))
        moved = np.sqrt(((nxt - x) ** 2).sum(axis=1)).max()
        x = nxt
        if moved < tol:
            res.converged = True
            break
    res.positions = x
    if not res.converged and raise_on_cap:
        raise NonConvergence(
            f"Lloyd iteration did not settle within {max_iters} steps", x, res.iterations
        )
    return res
