"""Truncated distance functions and certified smooth Lipschitz approximation.

The smoother is iterated local averaging with geodesic Gaussian weights whose
width scales with the local field value, followed by clamping into a shrunken
tube around the input. Nothing about the construction is trusted: a
certificate measures the sampled Lipschitz number and the tube clearance
after the fact, and downstream stages only accept certified fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .geometry import SampledManifold, ScalarField

PAIRWISE_LIPSCHITZ_LIMIT = 1000
_KERNEL_SUPPORT = 6.0  # truncate Gaussian windows at this many widths
_LATTICE_SPACING = 0.5  # quadrature node spacing as a fraction of the width


@dataclass(frozen=True)
class SmoothingParams:
    """Knobs for truncation and mollification.

    ``r_ball`` is the radius of the flat plateau around the base vertex,
    ``r_slack`` the allowed Lipschitz increase of the smoothed field over the
    2/3-Lipschitz input, ``tube_margin`` the fraction of the narrow tube side
    kept as clamping headroom.
    """

    r_ball: float = 0.2
    r_slack: float = 1.0 / 12.0
    tube_margin: float = 0.5
    kernel_width_fraction: float = 0.25
    max_passes: int = 3

    def __post_init__(self):
        if not 0.0 < self.r_ball < 0.25:
            raise ValidationError("r_ball must lie in (0, 1/4)")
        if not 0.0 < self.r_slack <= 1.0 / 12.0:
            raise ValidationError("r_slack must lie in (0, 1/12]")
        if not 0.0 < self.tube_margin < 1.0:
            raise ValidationError("tube_margin must lie in (0, 1)")
        if self.kernel_width_fraction <= 0.0:
            raise ValidationError("kernel_width_fraction must be positive")
        if self.max_passes < 1:
            raise ValidationError("max_passes must be at least 1")

    @property
    def lipschitz_target(self) -> float:
        return min(0.75, 2.0 / 3.0 + self.r_slack)


@dataclass(frozen=True)
class SmoothingCertificate:
    """A-posteriori record of what the smoother actually produced."""

    measured_lipschitz: float
    max_tube_violation: float
    min_tube_clearance: float
    kernel_passes: int
    lipschitz_target: float = 0.75

    @property
    def valid(self) -> bool:
        return (
            self.measured_lipschitz <= self.lipschitz_target
            and self.max_tube_violation == 0.0
        )

    def to_json_dict(self) -> dict:
        return {
            "measured_lipschitz": float(self.measured_lipschitz),
            "max_tube_violation": float(self.max_tube_violation),
            "min_tube_clearance": float(self.min_tube_clearance),
            "kernel_passes": int(self.kernel_passes),
            "lipschitz_target": float(self.lipschitz_target),
            "valid": self.valid,
        }


@dataclass(frozen=True)
class TubeReport:
    """Result of the strict tube and distance-bracket check."""

    passed: bool
    violations: np.ndarray
    checked: int


def lipschitz_number(field: ScalarField) -> float:
    """Sampled Lipschitz quotient of a vertex field.

    Supremum of |F(u)-F(v)|/length over edges; on manifolds with at most
    1000 vertices also over all vertex pairs with graph distances in the
    denominator. Both quotients lower-bound the Lipschitz constant of any
    interpolant, and the pairwise one never exceeds the edge one because
    differences telescope along shortest paths.
    """
    m = field.manifold
    if m.vertex_count < 2:
        return 0.0
    edges = m.edges()
    lengths = m.edge_lengths()
    diffs = np.abs(field.values[edges[:, 1]] - field.values[edges[:, 0]])
    best = float(np.max(diffs / lengths))
    if m.vertex_count <= PAIRWISE_LIPSCHITZ_LIMIT:
        dmat = m.all_pairs_graph_distances()
        gaps = np.abs(field.values[:, None] - field.values[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            quot = np.where(dmat > 0.0, gaps / dmat, 0.0)
        best = max(best, float(np.max(quot)))
    return best


def truncate_distance(dist: ScalarField, params: SmoothingParams) -> ScalarField:
    """Flatten the distance field inside the base ball and scale by 2/3."""
    values = dist.values
    if np.any(values < 0.0):
        raise ValidationError("distance field has negative values")
    if values[dist.manifold.base_vertex] != 0.0:
        raise ValidationError("distance field does not vanish at the base vertex")
    return ScalarField(dist.manifold, (2.0 / 3.0) * np.maximum(values, params.r_ball))


def tube_bounds(field: ScalarField) -> Tuple[ScalarField, ScalarField]:
    """Lower and upper tube fields (3/4 and 3/2 of the input)."""
    if np.any(field.values <= 0.0):
        bad = int(np.nonzero(field.values <= 0.0)[0][0])
        raise ValidationError(f"tube undefined: field is not positive at vertex {bad}")
    lower = ScalarField(field.manifold, 0.75 * field.values)
    upper = ScalarField(field.manifold, 1.5 * field.values)
    return lower, upper


# -- mollification ------------------------------------------------------------


def _mollify_chain(manifold, values, widths):
    order = manifold.chain_order()
    arc = manifold.arc_positions()
    masses = manifold.vertex_masses()
    vals_o = values[order]
    mass_o = masses[order]
    width_o = widths[order]
    nv = len(order)
    out_o = np.empty(nv)
    mean_h = (arc[-1] - arc[0]) / max(nv - 1, 1)
    if manifold.closed:
        total = manifold.total_length()
        arc_ext = np.concatenate([arc - total, arc, arc + total])
        vals_ext = np.tile(vals_o, 3)
        mass_ext = np.tile(mass_o, 3)
        offset = nv
    else:
        total = 0.0
        arc_ext, vals_ext, mass_ext = arc, vals_o, mass_o
        offset = 0
    for i in range(nv):
        sigma = width_o[i]
        radius = _KERNEL_SUPPORT * sigma
        if manifold.closed:
            radius = min(radius, 0.5 * total)
        # wide kernels are sampled on a global power-of-two index lattice:
        # neighbors then share their quadrature nodes, so the discretization
        # error drifts smoothly instead of jumping between vertices
        stride = 1
        target = _LATTICE_SPACING * sigma / max(mean_h, 1e-300)
        while stride * 2 <= target:
            stride *= 2
        if manifold.closed and nv % stride:
            stride = 1
        lo = np.searchsorted(arc_ext, arc[i] - radius, side="left")
        hi = np.searchsorted(arc_ext, arc[i] + radius, side="right")
        first = -((-lo) // stride) * stride
        idx = np.arange(first, hi, stride)
        if idx.size < 2:
            center = offset + i
            idx = np.arange(max(center - 1, 0), min(center + 2, len(arc_ext)))
        rel = (arc_ext[idx] - arc[i]) / sigma
        w = np.exp(-0.5 * rel * rel) * mass_ext[idx]
        out_o[i] = np.dot(w, vals_ext[idx]) / np.sum(w)
    out = np.empty(nv)
    out[order] = out_o
    return out


def _mollify_mesh(manifold, values, widths):
    dmat = manifold.all_pairs_graph_distances()
    masses = manifold.vertex_masses()
    rel = dmat / widths[:, None]
    w = np.exp(-0.5 * rel * rel) * masses[None, :]
    return (w @ values) / np.sum(w, axis=1)


def mollify(field: ScalarField, widths: np.ndarray, passes: int = 1) -> ScalarField:
    """Local averaging against geodesic Gaussian weights of per-vertex width.

    Weights depend only on the manifold and the width field, so the output is
    monotone in the input values.
    """
    widths = np.asarray(widths, dtype=float)
    if widths.shape != (field.manifold.vertex_count,) or np.any(widths <= 0.0):
        raise ValidationError("kernel widths must be positive, one per vertex")
    values = field.values
    if field.manifold.vertex_count == 1:
        return field
    for _ in range(passes):
        if field.manifold.dimension == 1:
            values = _mollify_chain(field.manifold, values, widths)
        else:
            values = _mollify_mesh(field.manifold, values, widths)
    return ScalarField(field.manifold, values)


def _certify(phi_values, base_values, manifold, params, passes):
    clearance = np.minimum(
        phi_values - 0.75 * base_values, 1.5 * base_values - phi_values
    )
    required = params.tube_margin * base_values / 8.0
    violation = float(np.max(np.maximum(required - clearance, 0.0), initial=0.0))
    measured = lipschitz_number(ScalarField(manifold, phi_values))
    return SmoothingCertificate(
        measured_lipschitz=measured,
        max_tube_violation=violation,
        min_tube_clearance=float(np.min(clearance)),
        kernel_passes=passes,
        lipschitz_target=params.lipschitz_target,
    )


def smooth_approx(
    field: ScalarField, params: SmoothingParams
) -> Tuple[ScalarField, SmoothingCertificate]:
    """Smooth a positive 2/3-Lipschitz field inside its own tube.

    Each pass mollifies with width ``kernel_width_fraction`` times the local
    field value (so the kernel shrinks toward the base) and clamps into the
    band of half-width ``tube_margin``/4 times the field, which keeps the
    result strictly inside the open tube with quantified clearance. Passes
    stop as soon as the certificate is valid; an invalid certificate is
    returned rather than raised so the caller can report which bound failed.
    """
    base = field.values
    if np.any(base <= 0.0):
        raise ValidationError("smooth_approx needs a strictly positive field")
    # rounding of values near max|f| limits how sharply a sampled quotient
    # over the shortest edge can be resolved; anything past that is real
    if field.manifold.cell_count:
        quotient_resolution = (
            8.0
            * np.finfo(float).eps
            * float(np.max(np.abs(base)))
            / float(np.min(field.manifold.edge_lengths()))
        )
    else:
        quotient_resolution = 0.0
    if lipschitz_number(field) > 2.0 / 3.0 + 1e-12 + quotient_resolution:
        raise ValidationError("input field exceeds the 2/3 Lipschitz budget")
    widths = params.kernel_width_fraction * base
    band = params.tube_margin * base / 4.0
    current = field
    cert = None
    for pass_count in range(1, params.max_passes + 1):
        current = mollify(current, widths, passes=1)
        clamped = np.clip(current.values, base - band, base + band)
        current = ScalarField(field.manifold, clamped)
        cert = _certify(clamped, base, field.manifold, params, pass_count)
        if cert.valid:
            break
    return current, cert


def verify_tube(
    phi: ScalarField,
    base: ScalarField,
    dist: ScalarField,
    params: SmoothingParams,
) -> TubeReport:
    """Strict containment in the tube plus the distance bracket off the ball.

    Checks (3/4)f < phi < (3/2)f at every vertex and D/2 < phi < D wherever
    D exceeds the ball radius; returns the offending vertex ids.
    """
    for other in (base, dist):
        if other.manifold is not phi.manifold:
            raise ValidationError("fields live on different manifolds")
    p = phi.values
    f = base.values
    d = dist.values
    bad = (p <= 0.75 * f) | (p >= 1.5 * f)
    outside = d > params.r_ball
    bad |= outside & ((p <= 0.5 * d) | (p >= d))
    violations = np.nonzero(bad)[0]
    return TubeReport(
        passed=violations.size == 0,
        violations=violations,
        checked=phi.manifold.vertex_count,
    )
