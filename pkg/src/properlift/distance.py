"""Geodesic distance fields on sampled manifolds.

The sampled distance is the shortest-path distance in the edge graph of the
cell metric. On triangle meshes, plain edge-graph distance overestimates
badly along directions between edge directions (up to the taxicab factor),
which would leak into every Lipschitz budget downstream, so the Dijkstra
sweep also relaxes each triangle corner through a planar unfolding of its
two settled partners; on flat convex patches this reproduces straight-line
distance to rounding. A final Jacobi unfolding round plus a closure sweep
keeps the exact edge triangle inequality.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .errors import ValidationError
from .geometry import SampledManifold, ScalarField


def graph_shortest_paths(indptr, indices, weights, source, nv):
    """Dijkstra over a CSR graph; ties broken toward the smallest vertex id."""
    dist = np.full(nv, np.inf)
    dist[source] = 0.0
    done = np.zeros(nv, dtype=bool)
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            cand = d + weights[k]
            if cand < dist[v]:
                dist[v] = cand
                heapq.heappush(heap, (cand, v))
    return dist


def _relax_to_closure(indptr, indices, weights, dist):
    """Dijkstra sweep seeded with tentative values; only ever decreases."""
    nv = len(dist)
    done = np.zeros(nv, dtype=bool)
    heap = [(float(d), v) for v, d in enumerate(dist)]
    heapq.heapify(heap)
    out = dist.copy()
    while heap:
        d, u = heapq.heappop(heap)
        if done[u] or d > out[u]:
            continue
        done[u] = True
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            cand = d + weights[k]
            if cand < out[v]:
                out[v] = cand
                heapq.heappush(heap, (cand, v))
    return out


def _unfold_candidate(dA, dB, a, b, c):
    """Planar source unfolding update for the corner opposite edge c.

    The two sources sit at distance c with values dA, dB; the corner sits at
    distances b from A and a from B. Returns inf when no causal straight
    path through the edge exists, leaving edge relaxation to cover the case.
    """
    if not (math.isfinite(dA) and math.isfinite(dB)) or abs(dA - dB) > c:
        return math.inf
    cx = (b * b + c * c - a * a) / (2.0 * c)
    cy = math.sqrt(max(b * b - cx * cx, 0.0))
    sx = (dA * dA - dB * dB + c * c) / (2.0 * c)
    sy = math.sqrt(max(dA * dA - sx * sx, 0.0))
    denom = sy + cy
    if denom <= 0.0:
        return math.inf
    cross = sx + (cx - sx) * sy / denom
    if cross < 0.0 or cross > c:
        return math.inf
    cand = math.hypot(cx - sx, cy + sy)
    if cand < max(dA, dB):
        return math.inf
    return cand


def _mesh_distance_sweep(manifold: SampledManifold) -> np.ndarray:
    nv = manifold.vertex_count
    indptr, indices, weights = manifold.adjacency()
    cells = manifold.cells
    lengths = manifold._cell_edge_lengths(manifold.metric)
    # lengths columns follow the edge order (0,1), (1,2), (0,2)
    edge_len = {}
    for cid in range(manifold.cell_count):
        v0, v1, v2 = (int(x) for x in cells[cid])
        edge_len[(cid, v0, v1)] = edge_len[(cid, v1, v0)] = float(lengths[cid, 0])
        edge_len[(cid, v1, v2)] = edge_len[(cid, v2, v1)] = float(lengths[cid, 1])
        edge_len[(cid, v0, v2)] = edge_len[(cid, v2, v0)] = float(lengths[cid, 2])
    vertex_cells = [[] for _ in range(nv)]
    for cid, (v0, v1, v2) in enumerate(cells):
        vertex_cells[int(v0)].append(cid)
        vertex_cells[int(v1)].append(cid)
        vertex_cells[int(v2)].append(cid)

    dist = np.full(nv, np.inf)
    dist[manifold.base_vertex] = 0.0
    done = np.zeros(nv, dtype=bool)
    heap = [(0.0, manifold.base_vertex)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            cand = d + weights[k]
            if cand < dist[v]:
                dist[v] = cand
                heapq.heappush(heap, (cand, v))
        for cid in vertex_cells[u]:
            corners = [int(x) for x in cells[cid]]
            others = [v for v in corners if v != u]
            for s, target in ((others[0], others[1]), (others[1], others[0])):
                if not done[s] or done[target]:
                    continue
                cand = _unfold_candidate(
                    d,
                    float(dist[s]),
                    edge_len[(cid, s, target)],
                    edge_len[(cid, u, target)],
                    edge_len[(cid, u, s)],
                )
                if cand < dist[target]:
                    dist[target] = cand
                    heapq.heappush(heap, (cand, target))
    return dist


def _unfold_round(manifold: SampledManifold, dist: np.ndarray) -> np.ndarray:
    """One Jacobi round of unfolding updates over all cells, order independent."""
    tri = manifold.cells
    lengths = manifold._cell_edge_lengths(manifold.metric)
    updated = dist.copy()
    roles = (
        (2, 0, 1, 0, 2, 1),  # corner 2 from (0, 1): c=|01|, b=|02|, a=|12|
        (0, 1, 2, 1, 0, 2),  # corner 0 from (1, 2): c=|12|, b=|01|, a=|02|
        (1, 0, 2, 2, 0, 1),  # corner 1 from (0, 2): c=|02|, b=|01|, a=|12|
    )
    for corner, ia, ib, ic_edge, ib_edge, ia_edge in roles:
        A = tri[:, ia]
        B = tri[:, ib]
        C = tri[:, corner]
        c = lengths[:, ic_edge]
        b = lengths[:, ib_edge]
        a = lengths[:, ia_edge]
        dA = dist[A]
        dB = dist[B]
        with np.errstate(invalid="ignore"):
            cx = (b**2 + c**2 - a**2) / (2.0 * c)
            cy = np.sqrt(np.maximum(b**2 - cx**2, 0.0))
            sx = (dA**2 - dB**2 + c**2) / (2.0 * c)
            sy = np.sqrt(np.maximum(dA**2 - sx**2, 0.0))
            cand = np.sqrt((cx - sx) ** 2 + (cy + sy) ** 2)
            cross = sx + (cx - sx) * sy / np.maximum(sy + cy, 1e-300)
        feasible = (
            np.isfinite(dA)
            & np.isfinite(dB)
            & (np.abs(dA - dB) <= c)
            & (cross >= 0.0)
            & (cross <= c)
            & (cand >= np.maximum(dA, dB))
        )
        np.minimum.at(updated, C[feasible], cand[feasible])
    return updated


def distance_field(manifold: SampledManifold) -> ScalarField:
    """Distance from the base vertex to every vertex, along the sampled metric."""
    nv = manifold.vertex_count
    indptr, indices, weights = manifold.adjacency()
    if manifold.dimension == 1:
        dist = graph_shortest_paths(
            indptr, indices, weights, manifold.base_vertex, nv
        )
    else:
        dist = _mesh_distance_sweep(manifold)
    if not np.all(np.isfinite(dist)):
        missing = int(np.nonzero(~np.isfinite(dist))[0][0])
        raise ValidationError(f"vertex {missing} unreachable from base")
    if manifold.dimension == 2:
        dist = _unfold_round(manifold, dist)
        dist = _relax_to_closure(indptr, indices, weights, dist)
    return ScalarField(manifold, dist)


def metric_ball(
    manifold: SampledManifold, dist: ScalarField, radius: float
) -> np.ndarray:
    """Sorted ids of vertices within the given distance of the base vertex."""
    if dist.manifold is not manifold:
        raise ValidationError("distance field belongs to a different manifold")
    if radius < 0.0:
        raise ValidationError("ball radius must be nonnegative")
    return np.nonzero(dist.values <= radius)[0]
