"""Sampled manifolds (1-D chains or loops, 2-D triangle meshes) and fields on them.

Conventions:
  - n=1: every cell is an edge carried in its own arc-length chart, so the
    stored coefficient of the original metric is 1.0 and ``cell_spans`` holds
    the edge length under that metric. Vertex coordinates keep the original
    sampling parameter, which generators and refinement still need.
  - n=2: vertices carry 2-D chart coordinates and every triangle carries one
    constant SPD 2x2 coefficient array in that chart.
All objects are immutable after construction; arrays are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import RefinementCapError, ValidationError

VERTEX_CAP = 2_000_000


def _frozen_array(values, dtype=float, shape=None):
    arr = np.ascontiguousarray(np.asarray(values, dtype=dtype))
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_metric_coeffs(dimension, coeffs, positive=True):
    if not np.all(np.isfinite(coeffs)):
        raise ValidationError("metric coefficients must be finite")
    if dimension == 1:
        bad = np.nonzero(coeffs[:, 0, 0] <= 0.0)[0] if positive else ()
        if len(bad):
            raise ValidationError(f"non-positive metric on cell {bad[0]}")
    else:
        if not np.array_equal(coeffs[:, 0, 1], coeffs[:, 1, 0]):
            raise ValidationError("metric coefficients must be exactly symmetric")
        if positive:
            det = coeffs[:, 0, 0] * coeffs[:, 1, 1] - coeffs[:, 0, 1] ** 2
            bad = np.nonzero((coeffs[:, 0, 0] <= 0.0) | (det <= 0.0))[0]
            if len(bad):
                raise ValidationError(
                    f"metric on cell {bad[0]} is not positive definite"
                )


@dataclass(frozen=True)
class SampledManifold:
    """Discretization of a Riemannian manifold with a marked base vertex.

    Parameters
    ----------
    dimension : 1 or 2.
    coords : (nv, dimension) chart coordinates (n=1: sampling parameter).
    cells : (nc, dimension+1) vertex ids; edges for n=1, triangles for n=2.
    metric : (nc, n, n) per-cell metric coefficients (n=1: must be 1.0, the
        geometry lives in ``cell_spans``).
    cell_spans : (nc,) edge lengths under the original metric (n=1 only).
    base_vertex : id of the distinguished point all distances grow from.
    closed : n=1 loop flag; ``period`` is the parameter period of the loop.
    metric_expression : optional scalar expression in ``t`` used to resample
        edge lengths on refinement (n=1).
    metric_fn : optional callable(chart point) -> (n, n) array, used to
        resample per-cell metrics on refinement (n=2).
    """

    dimension: int
    coords: np.ndarray
    cells: np.ndarray
    metric: np.ndarray
    cell_spans: Optional[np.ndarray] = None
    base_vertex: int = 0
    closed: bool = False
    period: Optional[float] = None
    metric_expression: Optional[str] = None
    metric_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        n = self.dimension
        if n not in (1, 2):
            raise ValidationError(f"dimension must be 1 or 2, got {n}")
        coords = _frozen_array(self.coords)
        if coords.ndim != 2 or coords.shape[1] != n:
            raise ValidationError(f"coords must have shape (nv, {n})")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("vertex coordinates must be finite")
        nv = coords.shape[0]
        if nv < 1:
            raise ValidationError("manifold needs at least one vertex")
        cells = _frozen_array(self.cells, dtype=np.int64)
        if cells.size == 0:
            cells = np.zeros((0, n + 1), dtype=np.int64)
            cells.setflags(write=False)
        if cells.ndim != 2 or cells.shape[1] != n + 1:
            raise ValidationError(f"cells must have shape (nc, {n + 1})")
        nc = cells.shape[0]
        if nc == 0 and nv > 1:
            raise ValidationError("multi-vertex manifold has no cells")
        if nc and (cells.min() < 0 or cells.max() >= nv):
            bad = cells[(cells < 0) | (cells >= nv)][0]
            raise ValidationError(f"cell references missing vertex {bad} of {nv}")
        for col in range(n + 1):
            for other in range(col + 1, n + 1):
                if np.any(cells[:, col] == cells[:, other]):
                    raise ValidationError("degenerate cell repeats a vertex")
        metric = _frozen_array(self.metric)
        if metric.shape != (nc, n, n):
            raise ValidationError(f"metric must have shape ({nc}, {n}, {n})")
        _check_metric_coeffs(n, metric)
        if n == 1:
            if self.cell_spans is None:
                raise ValidationError("n=1 manifolds must provide cell_spans")
            spans = _frozen_array(self.cell_spans, shape=(nc,))
            if np.any(spans <= 0.0) or not np.all(np.isfinite(spans)):
                raise ValidationError("cell spans must be positive and finite")
            object.__setattr__(self, "cell_spans", spans)
        elif self.cell_spans is not None:
            raise ValidationError("cell_spans only applies to n=1 manifolds")
        if not (0 <= int(self.base_vertex) < nv):
            raise ValidationError(f"base vertex {self.base_vertex} does not exist")
        if self.closed and n != 1:
            raise ValidationError("closed flag only applies to n=1 manifolds")
        if self.closed and (self.period is None or self.period <= 0):
            raise ValidationError("closed manifolds need a positive period")
        object.__setattr__(self, "dimension", int(n))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "base_vertex", int(self.base_vertex))
        object.__setattr__(self, "_cache", {})
        self._validate_topology()

    # -- structural checks ----------------------------------------------

    def _validate_topology(self):
        nv = self.vertex_count
        if self.dimension == 1 and self.cell_count:
            degree = np.zeros(nv, dtype=int)
            for col in (0, 1):
                np.add.at(degree, self.cells[:, col], 1)
            if degree.max() > 2:
                raise ValidationError("n=1 cells must form a chain or a loop")
            n_ends = int(np.count_nonzero(degree == 1))
            if self.closed and n_ends:
                raise ValidationError("closed curve has endpoint vertices")
            if not self.closed and n_ends != 2:
                raise ValidationError("open curve must have exactly two endpoints")
        if not self._connected():
            raise ValidationError("connectivity graph is not connected")

    def _connected(self):
        nv = self.vertex_count
        if nv == 1:
            return True
        indptr, indices, _ = self.adjacency()
        seen = np.zeros(nv, dtype=bool)
        stack = [self.base_vertex]
        seen[self.base_vertex] = True
        while stack:
            u = stack.pop()
            for v in indices[indptr[u]:indptr[u + 1]]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        return bool(seen.all())

    # -- basic properties -------------------------------------------------

    @property
    def vertex_count(self) -> int:
        return self.coords.shape[0]

    @property
    def cell_count(self) -> int:
        return self.cells.shape[0]

    @property
    def parameters(self) -> np.ndarray:
        """1-D sampling parameter per vertex (n=1 only)."""
        if self.dimension != 1:
            raise ValidationError("parameters are only defined for n=1")
        return self.coords[:, 0]

    @property
    def mesh_scale(self) -> float:
        """Largest cell diameter under the original metric."""
        return self._cached("mesh_scale", self._mesh_scale)

    def _mesh_scale(self):
        if self.cell_count == 0:
            return 0.0
        if self.dimension == 1:
            return float(np.max(self.cell_lengths()))
        return float(np.max(self._cell_edge_lengths(self.metric)))

    def _cached(self, key, fn):
        cache = self._cache
        if key not in cache:
            cache[key] = fn()
        return cache[key]

    # -- edges and lengths -------------------------------------------------

    def cell_lengths(self, coeffs: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-cell edge lengths under the given coefficients (n=1 only)."""
        if self.dimension != 1:
            raise ValidationError("cell_lengths is an n=1 operation")
        if coeffs is None:
            coeffs = self.metric
        return self.cell_spans * np.sqrt(coeffs[:, 0, 0])

    def edges(self) -> np.ndarray:
        """Canonical (ne, 2) unique edge array, lexicographically sorted."""
        return self._cached("edges", self._build_edges)[0]

    def edge_cells(self) -> np.ndarray:
        """(ne, 2) incident cell ids per edge; -1 marks a missing second cell."""
        return self._cached("edges", self._build_edges)[1]

    def _build_edges(self):
        if self.dimension == 1:
            edges = np.sort(self.cells, axis=1)
            incid = np.stack([np.arange(self.cell_count), -np.ones(self.cell_count, dtype=np.int64)], axis=1)
            return _frozen_array(edges, dtype=np.int64), _frozen_array(incid, dtype=np.int64)
        pairs = []
        owner = []
        for a, b in ((0, 1), (1, 2), (0, 2)):
            pairs.append(np.sort(self.cells[:, (a, b)], axis=1))
            owner.append(np.arange(self.cell_count))
        pairs = np.concatenate(pairs, axis=0)
        owner = np.concatenate(owner, axis=0)
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        incid = -np.ones((uniq.shape[0], 2), dtype=np.int64)
        for row, cell in zip(inverse, owner):
            if incid[row, 0] < 0:
                incid[row, 0] = cell
            else:
                incid[row, 1] = cell
        return _frozen_array(uniq, dtype=np.int64), _frozen_array(incid, dtype=np.int64)

    def _cell_edge_lengths(self, coeffs):
        """(nc, 3) lengths of each triangle's edges under per-cell coeffs."""
        tri = self.cells
        out = np.empty((self.cell_count, 3))
        for k, (a, b) in enumerate(((0, 1), (1, 2), (0, 2))):
            e = self.coords[tri[:, b]] - self.coords[tri[:, a]]
            out[:, k] = np.sqrt(np.einsum("ci,cij,cj->c", e, coeffs, e))
        return out

    def edge_lengths(self, coeffs: Optional[np.ndarray] = None) -> np.ndarray:
        """Lengths of the canonical edges under per-cell metric coefficients.

        For n=2 an edge shared by two triangles gets the mean of the two
        per-cell lengths (they coincide whenever the cells carry equal
        coefficients).
        """
        if coeffs is None:
            coeffs = self.metric
        if self.dimension == 1:
            return self.cell_lengths(coeffs)
        edges = self.edges()
        incid = self.edge_cells()
        vec = self.coords[edges[:, 1]] - self.coords[edges[:, 0]]
        first = np.sqrt(np.einsum("ei,eij,ej->e", vec, coeffs[incid[:, 0]], vec))
        total = first.copy()
        count = np.ones(edges.shape[0])
        mask = incid[:, 1] >= 0
        if np.any(mask):
            second = np.sqrt(
                np.einsum("ei,eij,ej->e", vec[mask], coeffs[incid[mask, 1]], vec[mask])
            )
            total[mask] += second
            count[mask] = 2.0
        return total / count

    def adjacency(self):
        """CSR adjacency (indptr, indices, lengths) over canonical edges."""
        return self._cached("adjacency", self._build_adjacency)

    def _build_adjacency(self):
        nv = self.vertex_count
        edges = self.edges()
        lengths = self.edge_lengths()
        degree = np.zeros(nv, dtype=np.int64)
        np.add.at(degree, edges[:, 0], 1)
        np.add.at(degree, edges[:, 1], 1)
        indptr = np.zeros(nv + 1, dtype=np.int64)
        np.cumsum(degree, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        weights = np.empty(indptr[-1])
        cursor = indptr[:-1].copy()
        for (u, v), w in zip(edges, lengths):
            indices[cursor[u]] = v
            weights[cursor[u]] = w
            cursor[u] += 1
            indices[cursor[v]] = u
            weights[cursor[v]] = w
            cursor[v] += 1
        indices.setflags(write=False)
        weights.setflags(write=False)
        indptr.setflags(write=False)
        return indptr, indices, weights

    # -- chain structure (n=1) ----------------------------------------------

    def chain_order(self) -> np.ndarray:
        """Vertex ids in traversal order along the chain or loop."""
        if self.dimension != 1:
            raise ValidationError("chain_order is an n=1 operation")
        return self._cached("chain_order", self._build_chain_order)

    def _build_chain_order(self):
        nv = self.vertex_count
        if nv == 1:
            return np.array([0], dtype=np.int64)
        neighbor = [[] for _ in range(nv)]
        for u, v in self.cells:
            neighbor[u].append(v)
            neighbor[v].append(u)
        if self.closed:
            start = 0
        else:
            start = min(v for v in range(nv) if len(neighbor[v]) == 1)
        order = [start]
        prev = -1
        cur = start
        for _ in range(nv - 1):
            nxt = [w for w in neighbor[cur] if w != prev]
            if not nxt:
                break
            prev, cur = cur, min(nxt)
            order.append(cur)
        if len(order) != nv:
            raise ValidationError("chain traversal did not reach every vertex")
        out = np.array(order, dtype=np.int64)
        out.setflags(write=False)
        return out

    def arc_positions(self) -> np.ndarray:
        """Cumulative arc length at each vertex in ``chain_order`` (n=1)."""
        return self._cached("arc_positions", self._build_arc_positions)

    def _build_arc_positions(self):
        order = self.chain_order()
        lengths = self.cell_lengths()
        pos_of = {int(v): i for i, v in enumerate(order)}
        arc = np.zeros(len(order))
        seg = np.zeros(len(order))
        for (u, v), w in zip(self.cells, lengths):
            i, j = pos_of[int(u)], pos_of[int(v)]
            if abs(i - j) == 1:
                seg[max(i, j)] = w
            # the loop-closing cell joins the first and last chain slots
        arc[1:] = np.cumsum(seg[1:])
        arc.setflags(write=False)
        return arc

    def total_length(self) -> float:
        if self.dimension != 1:
            raise ValidationError("total_length is an n=1 operation")
        return float(np.sum(self.cell_lengths()))

    # -- measures -----------------------------------------------------------

    def cell_areas(self, coeffs: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-triangle areas under the given coefficients (n=2 only)."""
        if self.dimension != 2:
            raise ValidationError("cell_areas is an n=2 operation")
        if coeffs is None:
            coeffs = self.metric
        tri = self.cells
        e1 = self.coords[tri[:, 1]] - self.coords[tri[:, 0]]
        e2 = self.coords[tri[:, 2]] - self.coords[tri[:, 0]]
        det_chart = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        det_metric = coeffs[:, 0, 0] * coeffs[:, 1, 1] - coeffs[:, 0, 1] ** 2
        return 0.5 * det_chart * np.sqrt(det_metric)

    def vertex_masses(self) -> np.ndarray:
        """Lumped vertex measure under the original metric."""
        return self._cached("vertex_masses", self._build_vertex_masses)

    def _build_vertex_masses(self):
        nv = self.vertex_count
        masses = np.zeros(nv)
        if self.dimension == 1:
            half = 0.5 * self.cell_lengths()
            np.add.at(masses, self.cells[:, 0], half)
            np.add.at(masses, self.cells[:, 1], half)
        else:
            third = self.cell_areas() / 3.0
            for col in range(3):
                np.add.at(masses, self.cells[:, col], third)
        if self.cell_count == 0:
            masses[:] = 1.0
        masses.setflags(write=False)
        return masses

    # -- pairwise graph distances (plumbing for kernels and quotients) ------

    def all_pairs_graph_distances(self, cap: int = 6000) -> np.ndarray:
        """Dense all-pairs shortest-path matrix over the edge graph."""
        if self.vertex_count > cap:
            raise ValidationError(
                f"all-pairs distances limited to {cap} vertices, "
                f"got {self.vertex_count}"
            )
        return self._cached("all_pairs", self._build_all_pairs)

    def _build_all_pairs(self):
        from scipy.sparse import csr_matrix
        from scipy.sparse.csgraph import dijkstra as sp_dijkstra

        nv = self.vertex_count
        if nv == 1:
            out = np.zeros((1, 1))
            out.setflags(write=False)
            return out
        edges = self.edges()
        lengths = self.edge_lengths()
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        data = np.concatenate([lengths, lengths])
        graph = csr_matrix((data, (rows, cols)), shape=(nv, nv))
        out = sp_dijkstra(graph, directed=False)
        out.setflags(write=False)
        return out


# -- fields -----------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """One real value per vertex."""

    manifold: SampledManifold
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen_array(self.values, shape=(self.manifold.vertex_count,))
        if not np.all(np.isfinite(vals)):
            raise ValidationError("scalar field values must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class CovectorField:
    """Per-cell covector components in the cell chart."""

    manifold: SampledManifold
    components: np.ndarray

    def __post_init__(self):
        shape = (self.manifold.cell_count, self.manifold.dimension)
        comps = _frozen_array(self.components, shape=shape)
        if not np.all(np.isfinite(comps)):
            raise ValidationError("covector components must be finite")
        object.__setattr__(self, "components", comps)


@dataclass(frozen=True)
class MetricField:
    """Per-cell symmetric coefficient arrays; not necessarily the original g."""

    manifold: SampledManifold
    coeffs: np.ndarray

    def __post_init__(self):
        n = self.manifold.dimension
        shape = (self.manifold.cell_count, n, n)
        coeffs = _frozen_array(self.coeffs, shape=shape)
        _check_metric_coeffs(n, coeffs, positive=False)
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class EmbeddingMap:
    """Per-vertex coordinates in Euclidean space of dimension ambient_dim."""

    manifold: SampledManifold
    ambient_dim: int
    coords: np.ndarray

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise ValidationError("ambient dimension must be at least 1")
        coords = _frozen_array(
            self.coords, shape=(self.manifold.vertex_count, self.ambient_dim)
        )
        if not np.all(np.isfinite(coords)):
            raise ValidationError("embedding coordinates must be finite")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "ambient_dim", int(self.ambient_dim))


def original_metric_field(manifold: SampledManifold) -> MetricField:
    return MetricField(manifold, manifold.metric)


# -- refinement ---------------------------------------------------------------


def _eval_metric_expression(expr: str, t: np.ndarray) -> np.ndarray:
    """Evaluate a scalar metric expression g(t) on an array of parameters."""
    namespace = {
        "t": t,
        "sin": np.sin,
        "cos": np.cos,
        "tan": np.tan,
        "exp": np.exp,
        "log": np.log,
        "sqrt": np.sqrt,
        "abs": np.abs,
        "pi": np.pi,
    }
    try:
        out = eval(expr, {"__builtins__": {}}, namespace)  # noqa: S307
    except Exception as exc:
        raise ValidationError(f"bad metric expression {expr!r}: {exc}") from exc
    out = np.asarray(out, dtype=float)
    if out.ndim == 0:
        out = np.full_like(t, float(out))
    if out.shape != t.shape or np.any(out <= 0) or not np.all(np.isfinite(out)):
        raise ValidationError(f"metric expression {expr!r} must be positive")
    return out


def _edge_parameter_span(manifold, u, v):
    """Parameter increment along a cell, unwrapping the loop-closing edge."""
    t = manifold.parameters
    dt = t[v] - t[u]
    if manifold.closed:
        period = manifold.period
        dt = np.where(dt > 0.5 * period, dt - period, dt)
        dt = np.where(dt < -0.5 * period, dt + period, dt)
    return dt


def _refine_curve(manifold: SampledManifold) -> SampledManifold:
    t = manifold.parameters
    cells = manifold.cells
    spans = manifold.cell_spans
    nv = manifold.vertex_count
    dt = _edge_parameter_span(manifold, cells[:, 0], cells[:, 1])
    mid_t = t[cells[:, 0]] + 0.5 * dt
    if manifold.closed:
        mid_t = np.mod(mid_t, manifold.period)
    new_coords = np.concatenate([t, mid_t])[:, None]
    mid_ids = nv + np.arange(manifold.cell_count)
    new_cells = np.concatenate(
        [
            np.stack([cells[:, 0], mid_ids], axis=1),
            np.stack([mid_ids, cells[:, 1]], axis=1),
        ]
    )
    if manifold.metric_expression is not None:
        quarter_t = t[cells[:, 0]] + 0.25 * dt
        three_quarter_t = t[cells[:, 0]] + 0.75 * dt
        g_lo = _eval_metric_expression(manifold.metric_expression, quarter_t)
        g_hi = _eval_metric_expression(manifold.metric_expression, three_quarter_t)
        half = 0.5 * np.abs(dt)
        new_spans = np.concatenate([np.sqrt(g_lo) * half, np.sqrt(g_hi) * half])
    else:
        new_spans = np.concatenate([0.5 * spans, 0.5 * spans])
    new_metric = np.ones((new_cells.shape[0], 1, 1))
    return SampledManifold(
        dimension=1,
        coords=new_coords,
        cells=new_cells,
        metric=new_metric,
        cell_spans=new_spans,
        base_vertex=manifold.base_vertex,
        closed=manifold.closed,
        period=manifold.period,
        metric_expression=manifold.metric_expression,
        metric_fn=manifold.metric_fn,
        name=manifold.name,
    )


def _refine_mesh(manifold: SampledManifold) -> SampledManifold:
    coords = manifold.coords
    tris = manifold.cells
    nv = manifold.vertex_count
    midpoint_of = {}
    new_points = []

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint_of:
            midpoint_of[key] = nv + len(new_points)
            new_points.append(0.5 * (coords[a] + coords[b]))
        return midpoint_of[key]

    new_tris = []
    parent = []
    for cid, (a, b, c) in enumerate(tris):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        parent.extend([cid] * 4)
    new_coords = np.concatenate([coords, np.array(new_points)], axis=0)
    new_tris = np.array(new_tris, dtype=np.int64)
    if manifold.metric_fn is not None:
        centers = new_coords[new_tris].mean(axis=1)
        new_metric = np.array([manifold.metric_fn(p) for p in centers], dtype=float)
        new_metric = 0.5 * (new_metric + np.transpose(new_metric, (0, 2, 1)))
    else:
        new_metric = manifold.metric[np.array(parent, dtype=np.int64)]
    return SampledManifold(
        dimension=2,
        coords=new_coords,
        cells=new_tris,
        metric=new_metric,
        base_vertex=manifold.base_vertex,
        metric_fn=manifold.metric_fn,
        name=manifold.name,
    )


def refine(manifold: SampledManifold, k: int, cap: int = VERTEX_CAP) -> SampledManifold:
    """Split every cell k times by midpoint subdivision.

    Edge lengths are resampled from the analytic metric when the manifold
    carries one, otherwise children inherit the parent coefficient, which
    keeps total length exact for piecewise-constant metrics.
    """
    if k < 1:
        raise ValidationError("refinement count must be at least 1")
    out = manifold
    for _ in range(k):
        if out.dimension == 1:
            projected = out.vertex_count + out.cell_count
        else:
            projected = out.vertex_count + 3 * out.cell_count
        if projected > cap:
            raise RefinementCapError(
                f"refinement would create about {projected} vertices, cap is {cap}"
            )
        out = _refine_curve(out) if out.dimension == 1 else _refine_mesh(out)
    return out
