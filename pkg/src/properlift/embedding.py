"""Isometric immersion providers: analytic curves and a stress minimizer.

Curves get exact arc-length treatment: the two spiral providers advance the
winding angle edge by edge until the arc length of the polar segment matches
the requested edge length, which pins the per-edge speed to one and leaves
only the quadratic chord-versus-arc gap. Meshes go through gradient descent
on the squared-distance stress. Neither path promises global isometry; the
distortion report is the contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import EmbeddingError, ValidationError
from .geometry import EmbeddingMap, MetricField, SampledManifold

PROVIDERS = ("line", "spiral_to_circle", "spiral_to_point", "optimizer")
OPTIMIZER_VERTEX_CAP = 5000
_BISECTION_ITERS = 60
_GAUSS_NODES = 16


def nash_dimension(n: int) -> int:
    """Ambient dimension n(n+1)(3n+11)/2 sufficient for an isometric embedding."""
    if int(n) != n or n < 1:
        raise ValidationError("dimension must be an integer >= 1")
    n = int(n)
    product = n * (n + 1) * (3 * n + 11)
    assert product % 2 == 0
    return product // 2


@dataclass(frozen=True)
class DistortionReport:
    """Aggregated per-edge deviation between chord lengths and targets."""

    max_rel_edge_error: float
    mean_rel_edge_error: float
    stress: float
    converged: bool = True
    trace: Optional[List[Tuple[int, float, float]]] = field(
        default=None, compare=False, repr=False
    )

    def to_json_dict(self) -> dict:
        return {
            "max_rel_edge_error": float(self.max_rel_edge_error),
            "mean_rel_edge_error": float(self.mean_rel_edge_error),
            "stress": float(self.stress),
            "converged": bool(self.converged),
        }


@dataclass(frozen=True)
class EmbedRequest:
    """What to embed, into how many dimensions, and with which provider."""

    manifold: SampledManifold
    metric: MetricField
    ambient_dim: int
    provider: str
    limit_radius: float = 1.0
    seed: int = 42
    max_iters: int = 20000
    grad_tol: float = 1e-12
    step_rule: str = "bb"

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ValidationError(f"unknown provider {self.provider!r}")
        if self.metric.manifold is not self.manifold:
            raise ValidationError("metric belongs to a different manifold")
        if self.ambient_dim < self.manifold.dimension:
            raise ValidationError("ambient dimension below manifold dimension")
        if self.provider.startswith("spiral") and self.manifold.dimension != 1:
            raise ValidationError("spiral providers require a 1-D manifold")
        if self.provider == "line" and self.manifold.dimension != 1:
            raise ValidationError("line provider requires a 1-D manifold")
        if self.limit_radius <= 0.0:
            raise ValidationError("limit radius must be positive")
        if self.step_rule not in ("bb", "fixed"):
            raise ValidationError("step rule must be 'bb' or 'fixed'")


def distortion(emap: EmbeddingMap, gt: MetricField) -> DistortionReport:
    """Per-edge relative error between ambient chords and target lengths."""
    m = emap.manifold
    if gt.manifold is not m:
        raise ValidationError("metric belongs to a different manifold")
    edges = m.edges()
    targets = m.edge_lengths(gt.coeffs)
    if np.any(targets <= 0.0):
        bad = int(np.nonzero(targets <= 0.0)[0][0])
        raise ValidationError(f"zero-length target on edge {bad}")
    chords = np.linalg.norm(emap.coords[edges[:, 1]] - emap.coords[edges[:, 0]], axis=1)
    rel = np.abs(chords - targets) / targets
    stress = float(np.sum((chords**2 - targets**2) ** 2))
    return DistortionReport(
        max_rel_edge_error=float(np.max(rel, initial=0.0)),
        mean_rel_edge_error=float(np.mean(rel)) if rel.size else 0.0,
        stress=stress,
    )


# -- analytic curve providers --------------------------------------------------


def _chain_geometry(req: EmbedRequest):
    """Chain-ordered vertices, parameters, and per-step target lengths."""
    m = req.manifold
    if m.dimension != 1:
        raise ValidationError("curve providers require a 1-D manifold")
    if m.closed:
        raise EmbeddingError("curve providers require an open chain")
    order = m.chain_order()
    targets_by_cell = m.cell_lengths(req.metric.coeffs)
    cell_of = {}
    for cid, (u, v) in enumerate(m.cells):
        cell_of[(min(u, v), max(u, v))] = cid
    steps = np.empty(len(order) - 1, dtype=np.int64)
    for i in range(len(order) - 1):
        key = (min(order[i], order[i + 1]), max(order[i], order[i + 1]))
        steps[i] = cell_of[key]
    return order, m.parameters[order], targets_by_cell[steps]


def _spiral_radius(provider: str, scale: float, t: np.ndarray) -> np.ndarray:
    if provider == "spiral_to_circle":
        return scale * (1.0 + 1.0 / (1.0 + t))
    return scale / (1.0 + t)


def _spiral_radius_rate(scale: float, t: np.ndarray) -> np.ndarray:
    # both spiral families shrink radially at the same rate
    return -scale / (1.0 + t) ** 2


def _solve_angle_steps(provider, scale, t0, t1, targets):
    """Per-edge winding increments whose polar arc length matches the target.

    Rotational invariance makes every edge independent, so the bisection runs
    vectorized across edges; a fixed iteration count keeps it deterministic
    and resolves the increment to relative machine precision.
    """
    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_NODES)
    dt = t1 - t0
    tq = t0[:, None] + 0.5 * (nodes[None, :] + 1.0) * dt[:, None]
    wq = 0.5 * dt[:, None] * weights[None, :]
    r_q = _spiral_radius(provider, scale, tq)
    drdt_q = _spiral_radius_rate(scale, tq)

    def arc(dtheta):
        rate = dtheta / dt
        speed = np.sqrt(drdt_q**2 + (r_q * rate[:, None]) ** 2)
        return np.sum(speed * wq, axis=1)

    radial_only = arc(np.zeros_like(targets))
    infeasible = targets < radial_only * (1.0 - 1e-12)
    if np.any(infeasible):
        bad = int(np.nonzero(infeasible)[0][0])
        raise EmbeddingError(
            f"edge {bad}: target length {targets[bad]:.6g} is shorter than the "
            f"radial drift {radial_only[bad]:.6g}; no winding can match it"
        )
    lo = np.zeros_like(targets)
    hi = targets / np.minimum(r_q.min(axis=1), scale) + 1.0
    for _ in range(64):
        grown = arc(hi) < targets
        if not np.any(grown):
            break
        hi[grown] *= 2.0
    else:
        raise EmbeddingError("winding bracket failed to enclose the target length")
    for _ in range(_BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        low_side = arc(mid) < targets
        lo = np.where(low_side, mid, lo)
        hi = np.where(low_side, hi, mid)
    return 0.5 * (lo + hi)


def embed_curve(req: EmbedRequest) -> Tuple[EmbeddingMap, DistortionReport]:
    """Arc-length line map or one of the spiral images of a half-line."""
    m = req.manifold
    order, params, targets = _chain_geometry(req)
    coords = np.zeros((m.vertex_count, req.ambient_dim))
    if req.provider == "line":
        coords[order, 0] = np.concatenate([[0.0], np.cumsum(targets)])
    elif req.provider in ("spiral_to_circle", "spiral_to_point"):
        if req.ambient_dim < 2:
            raise ValidationError("spiral providers need at least two dimensions")
        t0, t1 = params[:-1], params[1:]
        if np.any(t1 <= t0):
            raise EmbeddingError("spiral providers need increasing parameters")
        dtheta = _solve_angle_steps(req.provider, req.limit_radius, t0, t1, targets)
        theta = np.concatenate([[0.0], np.cumsum(dtheta)])
        radius = _spiral_radius(req.provider, req.limit_radius, params)
        coords[order, 0] = radius * np.cos(theta)
        coords[order, 1] = radius * np.sin(theta)
    else:
        raise ValidationError(f"provider {req.provider!r} is not a curve provider")
    emap = EmbeddingMap(m, req.ambient_dim, coords)
    return emap, distortion(emap, req.metric)


# -- numerical optimizer -------------------------------------------------------


def _stress_and_grad(x, eu, ev, sq_targets):
    d = x[eu] - x[ev]
    sq = np.sum(d * d, axis=1)
    delta = sq - sq_targets
    stress = float(np.sum(delta * delta))
    scaled = (4.0 * delta)[:, None] * d
    nv = x.shape[0]
    grad = np.empty_like(x)
    for k in range(x.shape[1]):
        grad[:, k] = np.bincount(eu, weights=scaled[:, k], minlength=nv)
        grad[:, k] -= np.bincount(ev, weights=scaled[:, k], minlength=nv)
    return stress, grad


def optimize_embedding(req: EmbedRequest) -> Tuple[EmbeddingMap, DistortionReport]:
    """Minimize squared-distance stress by descent with backtracking.

    Starts from a seeded random spherical configuration. Steps follow the
    Barzilai-Borwein rule (or a fixed trial step) safeguarded by halving
    until the stress strictly decreases, so the recorded stress trace is
    non-increasing. Hitting ``max_iters`` flags the report as non-converged
    instead of raising.
    """
    m = req.manifold
    if m.vertex_count > OPTIMIZER_VERTEX_CAP:
        raise ValidationError(
            f"optimizer limited to {OPTIMIZER_VERTEX_CAP} vertices, got {m.vertex_count}"
        )
    edges = m.edges()
    targets = m.edge_lengths(req.metric.coeffs)
    if np.any(targets <= 0.0):
        raise ValidationError("optimizer targets must be positive")
    eu, ev = edges[:, 0], edges[:, 1]
    sq_targets = targets**2
    mean_len = float(np.mean(targets))

    rng = np.random.default_rng(req.seed)
    x = rng.normal(size=(m.vertex_count, req.ambient_dim))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    x = mean_len * x / norms

    stress, grad = _stress_and_grad(x, eu, ev, sq_targets)
    grad_inf = float(np.max(np.abs(grad), initial=0.0))
    trace = [(0, stress, 0.0)]
    converged = grad_inf <= req.grad_tol
    prev_x = None
    prev_grad = None
    step = 0.0
    for it in range(1, req.max_iters + 1):
        if converged or grad_inf == 0.0:
            converged = True
            break
        if req.step_rule == "bb" and prev_x is not None:
            dx = x - prev_x
            dg = grad - prev_grad
            denom = float(np.sum(dx * dg))
            step = float(np.sum(dx * dx)) / denom if denom > 0.0 else 0.0
        if step <= 0.0 or not np.isfinite(step):
            step = 0.1 * mean_len / max(grad_inf, 1e-300)
        accepted = False
        for _ in range(60):
            candidate = x - step * grad
            cand_stress, cand_grad = _stress_and_grad(candidate, eu, ev, sq_targets)
            if cand_stress < stress:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no descent direction at floating-point resolution: stationary
            converged = True
            break
        prev_x, prev_grad = x, grad
        x, grad = candidate, cand_grad
        assert cand_stress <= stress
        stress = cand_stress
        grad_inf = float(np.max(np.abs(grad)))
        trace.append((it, stress, step))
        if grad_inf <= req.grad_tol:
            converged = True
            break
    emap = EmbeddingMap(m, req.ambient_dim, x)
    base = distortion(emap, req.metric)
    report = DistortionReport(
        max_rel_edge_error=base.max_rel_edge_error,
        mean_rel_edge_error=base.mean_rel_edge_error,
        stress=base.stress,
        converged=converged,
        trace=trace,
    )
    return emap, report


def embed(req: EmbedRequest) -> Tuple[EmbeddingMap, DistortionReport]:
    """Dispatch to the provider named in the request."""
    if req.provider == "optimizer":
        return optimize_embedding(req)
    return embed_curve(req)
