"""Convex polygons and bounded Voronoi partitions.

Points are plain length-2 float arrays (anything ``np.asarray`` turns into
shape ``(2,)`` is accepted).  Polygons are kept counter-clockwise with
collinear and duplicate vertices pruned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGenerators, EmptyGrid, OutOfDomain

BOUNDARY_TOL = 1e-12
PRUNE_TOL = 1e-12
DISTINCT_TOL = 1e-9


def as_point(p) -> np.ndarray:
    q = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(q)):
        raise ValueError(f"point has non-finite coordinates: {q!r}")
    return q


def as_points(pts) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain non-finite coordinates")
    return arr


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _redundant(prev, cur, nxt) -> bool:
    e1 = cur - prev
    if np.hypot(*e1) <= PRUNE_TOL:
        return True
    e2 = nxt - cur
    scale = max(np.hypot(*e1) * np.hypot(*e2), 1.0)
    cross = e1[0] * e2[1] - e1[1] * e2[0]
    return abs(cross) <= PRUNE_TOL * scale and np.dot(e1, e2) >= 0.0


def _prune(v: np.ndarray) -> np.ndarray:
    """Drop repeated vertices and vertices lying on the segment of their neighbours.

    One vertex goes at a time: judging all of them against the original
    neighbours would delete both copies of a repeated vertex.
    """
    pts = list(v)
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        for i in range(len(pts)):
            if _redundant(pts[i - 1], pts[i], pts[(i + 1) % len(pts)]):
                del pts[i]
                changed = True
                break
    return np.array(pts, dtype=float).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """A strictly convex polygon with counter-clockwise vertices.

    Clockwise input is reversed; collinear and repeated vertices are pruned.
    Anything left non-convex or with fewer than three vertices is rejected.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = as_points(self.vertices).copy()
        if len(v) >= 3 and _signed_area(v) < 0:
            v = v[::-1]
        v = _prune(v)
        if len(v) < 3:
            raise ValueError("a polygon needs at least 3 non-collinear vertices")
        if _signed_area(v) <= 0:
            raise ValueError("polygon has no positive area")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        if np.any(cross <= 0):
            raise ValueError("polygon is not strictly convex")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    def __eq__(self, other):
        if not isinstance(other, ConvexPolygon):
            return NotImplemented
        return self.vertices.shape == other.vertices.shape and np.array_equal(
            self.vertices, other.vertices
        )

    @property
    def area(self) -> float:
        return polygon_area(self)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)"""
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def vertex_centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def contains(self, p) -> bool:
        return contains(self, p)

    def contains_points(self, pts) -> np.ndarray:
        return contains_points(self, pts)

    @classmethod
    def box(cls, xmin=0.0, ymin=0.0, xmax=1.0, ymax=1.0) -> "ConvexPolygon":
        return cls(np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]], float))

    @classmethod
    def unit_square(cls) -> "ConvexPolygon":
        return cls.box()


def polygon_area(poly: ConvexPolygon) -> float:
    """Shoelace area of a counter-clockwise polygon."""
    return _signed_area(poly.vertices)


def contains_points(poly: ConvexPolygon, pts) -> np.ndarray:
    """Boolean mask of points inside ``poly`` or within BOUNDARY_TOL of its boundary."""
    pts = as_points(pts)
    v = poly.vertices
    e = np.roll(v, -1, axis=0) - v
    length = np.hypot(e[:, 0], e[:, 1])
    rel = pts[:, None, :] - v[None, :, :]
    # signed distance to each edge's supporting line, positive on the inner side
    dist = (e[None, :, 0] * rel[..., 1] - e[None, :, 1] * rel[..., 0]) / length[None, :]
    return np.all(dist >= -BOUNDARY_TOL, axis=1)


def contains(poly: ConvexPolygon, p) -> bool:
    return bool(contains_points(poly, as_point(p)[None, :])[0])


def clip_halfplane(poly: ConvexPolygon, a, b) -> ConvexPolygon | None:
    """Intersect ``poly`` with the half-plane of points at least as close to ``a`` as to ``b``.

    Returns None when the intersection has no area.
    """
    a = as_point(a)
    b = as_point(b)
    n = b - a
    norm = float(np.hypot(*n))
    if norm <= BOUNDARY_TOL:
        raise DegenerateGenerators(f"bisector undefined for coincident points {a} and {b}")
    n = n / norm
    offset = float(np.dot(n, 0.5 * (a + b)))

    v = poly.vertices
    s = v @ n - offset
    inside = s <= BOUNDARY_TOL
    if inside.all():
        return poly
    if not inside.any():
        return None

    out = []
    m = len(v)
    for i in range(m):
        j = (i + 1) % m
        if inside[i]:
            out.append(v[i])
        if inside[i] != inside[j]:
            t = s[i] / (s[i] - s[j])
            out.append(v[i] + t * (v[j] - v[i]))
    out = _prune(np.array(out))
    if len(out) < 3 or _signed_area(out) <= PRUNE_TOL:
        return None
    return ConvexPolygon(out)


@dataclass(frozen=True, eq=False)
class VoronoiPartition:
    cells: tuple
    generators: np.ndarray

    def __len__(self):
        return len(self.cells)

    def locate(self, pts) -> np.ndarray:
        """Index of the cell containing each point.

        Points on a shared boundary go to the lowest-index cell, which is what
        ``argmin`` over generator distances gives for exact ties.
        """
        pts = as_points(pts)
        d2 = ((pts[:, None, :] - self.generators[None, :, :]) ** 2).sum(-1)
        return np.argmin(d2, axis=1)

    def total_area(self) -> float:
        return float(sum(polygon_area(c) for c in self.cells))


def voronoi_partition(generators, domain: ConvexPolygon) -> VoronoiPartition:
    """Voronoi cells of ``generators`` restricted to ``domain`` by repeated bisector clips."""
    gens = as_points(generators)
    n = len(gens)
    if n == 0:
        raise ValueError("need at least one generator")
    inside = contains_points(domain, gens)
    if not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise OutOfDomain(f"generator {bad} at {gens[bad]} lies outside the domain")
    d2 = ((gens[:, None, :] - gens[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    if d2.min() <= DISTINCT_TOL**2:
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        raise DegenerateGenerators(f"generators {min(i, j)} and {max(i, j)} coincide")

    cells = []
    for i in range(n):
        cell = domain
        # clip nearest competitors first so the polygon shrinks early
        for j in np.argsort(d2[i], kind="stable"):
            if j == i:
                continue
            cell = clip_halfplane(cell, gens[i], gens[j])
            assert cell is not None, "distinct in-domain generators cannot have empty cells"
        cells.append(cell)
    gens = gens.copy()
    gens.setflags(write=False)
    return VoronoiPartition(tuple(cells), gens)


def polygon_to_text(poly: ConvexPolygon) -> str:
    return "".join(f"{x!r},{y!r}\n" for x, y in poly.vertices.tolist())


def polygon_from_text(text: str) -> ConvexPolygon:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        x, y = line.split(",")
        rows.append((float(x), float(y)))
    return ConvexPolygon(np.array(rows))


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centred lattice over a polygon's bounding box.

    Nodes sit at the centres of ``step``-sized squares tiling the bounding box,
    so a sum of ``f(node) * step**2`` is the midpoint rule.  Only nodes inside
    the polygon are kept, ordered lexicographically by (x, y).
    """

    domain: ConvexPolygon
    step: float
    origin: np.ndarray
    nx: int
    ny: int
    ix: np.ndarray
    iy: np.ndarray
    nodes: np.ndarray

    @property
    def cell_area(self) -> float:
        return self.step * self.step

    def __len__(self):
        return len(self.nodes)

    def to_matrix(self, values, fill=np.nan) -> np.ndarray:
        """Scatter per-node values into an (ny, nx) array, row index = y."""
        out = np.full((self.ny, self.nx), fill, dtype=float)
        out[self.iy, self.ix] = values
        return out


def grid_nodes(domain: ConvexPolygon, step: float) -> Grid:
    if not step > 0:
        raise ValueError("grid step must be positive")
    xmin, ymin, xmax, ymax = domain.bounds
    nx = max(1, int(np.ceil((xmax - xmin) / step - 1e-9)))
    ny = max(1, int(np.ceil((ymax - ymin) / step - 1e-9)))
    origin = np.array([xmin + 0.5 * step, ymin + 0.5 * step])
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ix, iy = ix.ravel(), iy.ravel()
    nodes = origin + step * np.column_stack([ix, iy]).astype(float)
    keep = contains_points(domain, nodes)
    if not keep.any():
        raise EmptyGrid(f"no grid node of step {step} falls inside the domain")
    return Grid(domain, float(step), origin, nx, ny, ix[keep], iy[keep], nodes[keep])


def project_feasible(poly: ConvexPolygon, x, v, reach: float) -> np.ndarray:
    """Remove the outward part of direction ``v`` for edges within ``reach`` of ``x``.

    Returns the zero vector when no feasible direction is left (a corner with
    ``v`` pointing out of both edges).
    """
    x = as_point(x)
    out = as_point(v).copy()
    verts = poly.vertices
    e = np.roll(verts, -1, axis=0) - verts
    length = np.hypot(e[:, 0], e[:, 1])
    # outward unit normals of a counter-clockwise polygon
    normals = np.column_stack([e[:, 1], -e[:, 0]]) / length[:, None]
    rel = x - verts
    dist = -(normals * rel).sum(axis=1)
    active = np.flatnonzero(dist <= reach)
    for _ in range(2):
        for j in active:
            s = float(normals[j] @ out)
            if s > 0:
                out -= s * normals[j]
    if any(float(normals[j] @ out) > 1e-12 * max(1.0, np.hypot(*out)) for j in active):
        return np.zeros(2)
    return out
