"""Differentials, dual norms, and the rank-one metric downdate.

The downdate subtracts a quarter of the squared differential from the metric,
cell by cell. Because covectors are constant per cell, adding the correction
back recovers the original coefficients exactly, which is what makes the
lifted embedding isometric at edge level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SurgeryError, ValidationError
from .geometry import CovectorField, MetricField, ScalarField

SHARP_EIGENVALUE_FLOOR = 55.0 / 64.0
SHARP_EIGENVALUE_TOL = 1e-9


@dataclass(frozen=True)
class SpdReport:
    """Per-cell generalized eigenvalue record for the modified metric."""

    min_eigenvalues: np.ndarray
    passed: bool
    failing_cells: np.ndarray

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(self.min_eigenvalues, initial=np.inf))

    def to_json_dict(self) -> dict:
        return {
            "min_generalized_eigenvalue": self.min_eigenvalue,
            "failing_cells": [int(c) for c in self.failing_cells],
            "passed": bool(self.passed),
        }


def differential(phi: ScalarField) -> CovectorField:
    """Per-cell constant covector of a vertex field.

    n=1 cells report the difference quotient over the edge length (the cell
    chart is arc length); n=2 cells report the gradient covector of the
    unique affine interpolant in the cell chart.
    """
    m = phi.manifold
    values = phi.values
    if m.dimension == 1:
        lengths = m.cell_lengths()
        if np.any(lengths <= 0.0):
            bad = int(np.nonzero(lengths <= 0.0)[0][0])
            raise ValidationError(f"degenerate cell {bad} has zero length")
        comps = (values[m.cells[:, 1]] - values[m.cells[:, 0]]) / lengths
        return CovectorField(m, comps[:, None])
    tri = m.cells
    e1 = m.coords[tri[:, 1]] - m.coords[tri[:, 0]]
    e2 = m.coords[tri[:, 2]] - m.coords[tri[:, 0]]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.maximum(np.abs(e1).max(axis=1), np.abs(e2).max(axis=1))
    degenerate = np.abs(det) <= 1e-14 * scale**2
    if np.any(degenerate):
        bad = int(np.nonzero(degenerate)[0][0])
        raise ValidationError(f"degenerate cell {bad} has zero area")
    d1 = values[tri[:, 1]] - values[tri[:, 0]]
    d2 = values[tri[:, 2]] - values[tri[:, 0]]
    wx = (d1 * e2[:, 1] - d2 * e1[:, 1]) / det
    wy = (d2 * e1[:, 0] - d1 * e2[:, 0]) / det
    return CovectorField(m, np.stack([wx, wy], axis=1))


def covector_norm(w: CovectorField, g: MetricField) -> np.ndarray:
    """Per-cell dual norm sqrt(w g^{-1} w) of a covector field."""
    if w.manifold is not g.manifold:
        raise ValidationError("covector and metric live on different manifolds")
    comps = w.components
    coeffs = g.coeffs
    if w.manifold.dimension == 1:
        diag = coeffs[:, 0, 0]
        if np.any(diag <= 0.0):
            bad = int(np.nonzero(diag <= 0.0)[0][0])
            raise ValidationError(f"singular metric on cell {bad}")
        return np.abs(comps[:, 0]) / np.sqrt(diag)
    det = coeffs[:, 0, 0] * coeffs[:, 1, 1] - coeffs[:, 0, 1] ** 2
    if np.any(det <= 0.0) or np.any(coeffs[:, 0, 0] <= 0.0):
        bad = int(np.nonzero((det <= 0.0) | (coeffs[:, 0, 0] <= 0.0))[0][0])
        raise ValidationError(f"singular metric on cell {bad}")
    a, b, c = coeffs[:, 0, 0], coeffs[:, 0, 1], coeffs[:, 1, 1]
    wx, wy = comps[:, 0], comps[:, 1]
    quad = (c * wx * wx - 2.0 * b * wx * wy + a * wy * wy) / det
    return np.sqrt(np.maximum(quad, 0.0))


def modify_metric(g: MetricField, w: CovectorField) -> MetricField:
    """Subtract a quarter of w (x) w from the metric, cell by cell."""
    if w.manifold is not g.manifold:
        raise ValidationError("covector and metric live on different manifolds")
    norms = covector_norm(w, g)
    offending = np.nonzero(norms >= 1.0)[0]
    if offending.size:
        cell = int(offending[0])
        raise SurgeryError(
            f"covector norm {norms[cell]:.6f} on cell {cell} is not below 1"
        )
    comps = w.components
    correction = 0.25 * comps[:, :, None] * comps[:, None, :]
    return MetricField(g.manifold, g.coeffs - correction)


def _generalized_min_eigenvalues(gt: MetricField, g: MetricField) -> np.ndarray:
    if gt.manifold.dimension == 1:
        return gt.coeffs[:, 0, 0] / g.coeffs[:, 0, 0]
    a, b, c = g.coeffs[:, 0, 0], g.coeffs[:, 0, 1], g.coeffs[:, 1, 1]
    det_g = a * c - b * b
    ta, tb, tc = gt.coeffs[:, 0, 0], gt.coeffs[:, 0, 1], gt.coeffs[:, 1, 1]
    # 2x2 pencil: eigenvalues of g^{-1} gt via trace and determinant
    trace = (c * ta - 2.0 * b * tb + a * tc) / det_g
    det = (ta * tc - tb * tb) / det_g
    disc = np.sqrt(np.maximum(trace * trace - 4.0 * det, 0.0))
    return 0.5 * (trace - disc)


def spd_check(gt: MetricField, g: MetricField) -> SpdReport:
    """Positive definiteness of the modified metric against the original.

    Requires every per-cell minimal generalized eigenvalue of (gt, g) to be
    strictly positive and no smaller than 55/64 minus a 1e-9 slack, which is
    what a covector of dual norm below 3/4 guarantees.
    """
    if gt.manifold is not g.manifold:
        raise ValidationError("metric fields live on different manifolds")
    eigs = _generalized_min_eigenvalues(gt, g)
    floor = SHARP_EIGENVALUE_FLOOR - SHARP_EIGENVALUE_TOL
    failing = np.nonzero((eigs <= 0.0) | (eigs < floor))[0]
    return SpdReport(
        min_eigenvalues=eigs,
        passed=failing.size == 0,
        failing_cells=failing,
    )
