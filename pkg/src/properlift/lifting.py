"""One-coordinate lift and the quantitative closedness checks.

The lift appends half the certified smooth field as a new last coordinate.
Points far from the base then sit high in that coordinate, so any external
query point at height Q keeps distance at least Q from everything outside
the ball of radius 8Q; the remaining ball is finite in the samples and its
minimum distance is computed directly. A converging spiral, by contrast, is
convicted by a witness sequence of parameters whose image keeps returning
beneath a shrinking envelope around a fixed target point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import UnsupportedQueryError, ValidationError
from .geometry import EmbeddingMap, MetricField, ScalarField
from .smoothing import SmoothingParams
from .embedding import DistortionReport, distortion


@dataclass(frozen=True)
class EscapeReport:
    """Check that the lifted height dominates a quarter of the distance."""

    passed: bool
    violations: np.ndarray
    checked: int
    min_margin: float

    def to_json_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "violations": [int(v) for v in self.violations],
            "checked": int(self.checked),
            "min_margin": float(self.min_margin),
        }


@dataclass(frozen=True)
class PropernessCertificate:
    """Quantitative closedness record for one external query point."""

    query_point: np.ndarray
    height: float
    far_bound: Optional[float]
    near_min: Optional[float]
    far_count: int
    near_count: int
    mesh_scale: float
    verdict: bool

    def to_json_dict(self) -> dict:
        return {
            "query_point": [float(c) for c in self.query_point],
            "Q": float(self.height),
            "far_bound": None if self.far_bound is None else float(self.far_bound),
            "near_min": None if self.near_min is None else float(self.near_min),
            "far_count": int(self.far_count),
            "near_count": int(self.near_count),
            "mesh_scale": float(self.mesh_scale),
            "verdict": bool(self.verdict),
        }


@dataclass(frozen=True)
class NonPropernessWitness:
    """A target point and a parameter sequence converging onto it."""

    target: np.ndarray
    parameters: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.parameters) <= 0.0):
            raise ValidationError("witness parameters must increase strictly")
        if np.any(np.diff(self.distances) >= 0.0):
            raise ValidationError("witness distances must decrease strictly")

    def to_json_dict(self) -> dict:
        return {
            "target": [float(c) for c in self.target],
            "samples": [
                {"t": float(t), "distance": float(d)}
                for t, d in zip(self.parameters, self.distances)
            ],
        }


def lift(emap: EmbeddingMap, phi: ScalarField) -> EmbeddingMap:
    """Append half of the smooth field as one extra coordinate."""
    if phi.manifold is not emap.manifold:
        raise ValidationError("field and embedding live on different manifolds")
    coords = np.concatenate([emap.coords, 0.5 * phi.values[:, None]], axis=1)
    return EmbeddingMap(emap.manifold, emap.ambient_dim + 1, coords)


def pullback_check(emap: EmbeddingMap, g: MetricField) -> DistortionReport:
    """Per-edge relative error of lifted chords against lengths under g."""
    return distortion(emap, g)


def escape_bound_check(
    emap: EmbeddingMap, dist: ScalarField, params: SmoothingParams
) -> EscapeReport:
    """Verify last coordinate > D/4 at every vertex outside the base ball."""
    if dist.manifold is not emap.manifold:
        raise ValidationError("distance field lives on a different manifold")
    height = emap.coords[:, -1]
    outside = dist.values > params.r_ball
    margin = height[outside] - 0.25 * dist.values[outside]
    bad = np.nonzero(outside)[0][margin <= 0.0]
    return EscapeReport(
        passed=bad.size == 0,
        violations=bad,
        checked=int(np.count_nonzero(outside)),
        min_margin=float(np.min(margin, initial=np.inf)),
    )


def properness_certificate(
    emap: EmbeddingMap,
    dist: ScalarField,
    query_point,
    params: Optional[SmoothingParams] = None,
) -> PropernessCertificate:
    """Certify that a query point keeps positive distance from the image.

    The far region (distance above eight times the query height) is handled
    analytically: the escape bound puts its image at height at least twice
    the query's, so the distance to the query is at least the height itself.
    The near region is a finite sample set and its minimum is computed
    exactly; the certificate carries the mesh scale as the sampling
    resolution the claim is made at.
    """
    params = params or SmoothingParams()
    q = np.asarray(query_point, dtype=float)
    if q.shape != (emap.ambient_dim,):
        raise ValidationError(
            f"query point must have {emap.ambient_dim} coordinates, got {q.shape}"
        )
    height = float(q[-1])
    if height <= 0.0:
        raise UnsupportedQueryError(
            "query points with non-positive last coordinate are outside the "
            "supported wedge argument"
        )
    gaps = np.linalg.norm(emap.coords - q[None, :], axis=1)
    if float(np.min(gaps)) < 1e-9:
        raise ValidationError("query point is within 1e-9 of an image point")

    far = dist.values > 8.0 * height
    near = ~far
    far_bound: Optional[float] = None
    if np.any(far):
        escape = escape_bound_check(emap, dist, params)
        covered = escape.passed
        if not covered:
            # escape bound failed somewhere; only certify if no failure is far
            covered = not np.any(far[escape.violations])
        lifted_high = np.all(emap.coords[far, -1] >= 2.0 * height)
        far_bound = height if (covered and lifted_high) else 0.0
    near_min = float(np.min(gaps[near])) if np.any(near) else None
    far_ok = far_bound is None or far_bound > 0.0
    near_ok = near_min is None or near_min > 0.0
    return PropernessCertificate(
        query_point=q,
        height=height,
        far_bound=far_bound,
        near_min=near_min,
        far_count=int(np.count_nonzero(far)),
        near_count=int(np.count_nonzero(near)),
        mesh_scale=emap.manifold.mesh_scale,
        verdict=bool(far_ok and near_ok),
    )


def _record_dips(distances, parameters, envelope_scale):
    """Indices of strictly decreasing record minima under the envelope."""
    prefix = np.concatenate([[np.inf], np.minimum.accumulate(distances)[:-1]])
    envelope = envelope_scale / (1.0 + parameters)
    return np.nonzero((distances < prefix) & (distances < envelope))[0]


def _separate_returns(record_idx, distances):
    """Keep only records preceded by an excursion away from the target.

    A terminal approach to a sampled endpoint sets records on consecutive
    samples without ever leaving the neighborhood; genuine accumulation sets
    records on distinct returns, with the distance climbing well above the
    new record in between.
    """
    returns = [record_idx[0]]
    for prev, cur in zip(record_idx[:-1], record_idx[1:]):
        between = distances[prev + 1 : cur]
        gap_max = float(between.max()) if between.size else float(distances[cur])
        if gap_max >= 2.0 * distances[cur]:
            returns.append(cur)
    return np.asarray(returns, dtype=np.int64)


def non_properness_witness(
    emap: EmbeddingMap,
    radius: float,
    horizon: float,
    envelope_scale: float = 10.0,
    min_records: int = 6,
    min_reach: float = 0.3,
    max_candidates: int = 64,
) -> Optional[NonPropernessWitness]:
    """Search for a sampled refutation of closedness on a 1-D embedding.

    Candidate targets are image points within ``radius`` of the origin,
    biased toward late parameters since any accumulation point is shadowed
    by late samples. A candidate wins if distances from later and later
    samples keep setting records below ``envelope_scale / (1 + t)`` on
    separate returns (excursions in between), and those returns reach past
    ``min_reach`` of the horizon. Proper embeddings leave no candidate with
    enough returns.
    """
    m = emap.manifold
    if m.dimension != 1:
        raise ValidationError("witness search requires a 1-D manifold")
    order = m.chain_order()
    t = m.parameters[order]
    pts = emap.coords[order]
    keep = t <= horizon
    t = t[keep]
    pts = pts[keep]
    if t.size < 3:
        return None
    inside = np.nonzero(np.linalg.norm(pts, axis=1) <= radius)[0]
    if inside.size == 0:
        return None
    if inside.size > max_candidates:
        # late samples first, then a log-spaced sweep of earlier ones
        n_late = max_candidates // 2
        late = inside[-n_late:]
        rest = inside[:-n_late]
        picks = np.unique(
            np.geomspace(1, len(rest), max_candidates - n_late).astype(int) - 1
        )
        inside = np.concatenate([rest[picks], late])
    best = None
    best_key = (min_records - 1, -np.inf)
    for ci in inside:
        target = pts[ci]
        gaps = np.linalg.norm(pts - target[None, :], axis=1)
        gaps[ci] = np.inf  # a point is not its own witness target
        records = _record_dips(gaps, t, envelope_scale)
        if records.size < min_records:
            continue
        records = _separate_returns(records, gaps)
        if records.size < min_records:
            continue
        reach = t[records[-1]]
        if reach < min_reach * float(t[-1]):
            continue
        key = (records.size, reach)
        if key > best_key:
            best_key = key
            best = (target, t[records], gaps[records])
    if best is None:
        return None
    return NonPropernessWitness(
        target=best[0], parameters=best[1], distances=best[2]
    )
