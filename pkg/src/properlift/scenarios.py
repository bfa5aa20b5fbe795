"""Bundled scenario generators and the scenario registry.

Each scenario packages a manifold source, smoothing knobs, an embedding
request, verification thresholds, and optionally a long-horizon witness
configuration used to demonstrate (and then rule out) non-properness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ParseError, ValidationError
from .fileio import load_manifold
from .geometry import SampledManifold
from .smoothing import SmoothingParams


# -- generators -----------------------------------------------------------------


def line_segment(length: float = 100.0, samples: int = 10001) -> SampledManifold:
    """Interval [0, length] with the flat metric, based at 0."""
    if samples < 2 or length <= 0:
        raise ValidationError("line segment needs samples >= 2 and length > 0")
    t = np.linspace(0.0, length, samples)
    cells = np.stack([np.arange(samples - 1), np.arange(1, samples)], axis=1)
    return SampledManifold(
        dimension=1,
        coords=t[:, None],
        cells=cells,
        metric=np.ones((samples - 1, 1, 1)),
        cell_spans=np.diff(t),
        base_vertex=0,
        metric_expression="1",
        name="line-segment",
    )


def circle(circumference: float = 2.0, samples: int = 256) -> SampledManifold:
    """Closed loop of the given circumference, based at parameter 0."""
    if samples < 3 or circumference <= 0:
        raise ValidationError("circle needs samples >= 3 and positive circumference")
    t = np.linspace(0.0, circumference, samples + 1)[:-1]
    cells = np.stack([np.arange(samples), np.roll(np.arange(samples), -1)], axis=1)
    spans = np.full(samples, circumference / samples)
    return SampledManifold(
        dimension=1,
        coords=t[:, None],
        cells=cells,
        metric=np.ones((samples, 1, 1)),
        cell_spans=spans,
        base_vertex=0,
        closed=True,
        period=circumference,
        metric_expression="1",
        name="circle",
    )


def grid_patch(side: float = 1.0, divisions: int = 32) -> SampledManifold:
    """Flat (divisions+1)^2 triangulated square, based at the origin corner."""
    if divisions < 1 or side <= 0:
        raise ValidationError("grid patch needs divisions >= 1 and side > 0")
    n = divisions + 1
    xs = np.linspace(0.0, side, n)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    coords = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * n + j

    tris = []
    for i in range(divisions):
        for j in range(divisions):
            tris.append((vid(i, j), vid(i + 1, j), vid(i, j + 1)))
            tris.append((vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    tris = np.array(tris, dtype=np.int64)
    metric = np.tile(np.eye(2), (len(tris), 1, 1))
    return SampledManifold(
        dimension=2,
        coords=coords,
        cells=tris,
        metric=metric,
        base_vertex=0,
        metric_fn=lambda p: np.eye(2),
        name="grid-patch",
    )


def revolution_surface(
    radius_fn: Callable[[float], float],
    height_fn: Callable[[float], float],
    s_range: Tuple[float, float] = (0.0, 1.0),
    s_samples: int = 17,
    angle_samples: int = 24,
) -> SampledManifold:
    """Surface of revolution of a profile curve, in the (s, angle) chart.

    The per-cell metric is the first fundamental form evaluated at the cell
    barycenter: diag(R'^2 + Z'^2, R^2).
    """
    lo, hi = s_range
    if s_samples < 2 or angle_samples < 3 or not hi > lo:
        raise ValidationError("bad revolution surface parameters")
    s = np.linspace(lo, hi, s_samples)
    # open seam: the chart is a rectangle, not a quotient
    theta = np.linspace(0.0, 2.0 * np.pi, angle_samples)

    def metric_at(point):
        sv = float(point[0])
        eps = 1e-6 * max(1.0, abs(hi - lo))
        dr = (radius_fn(sv + eps) - radius_fn(sv - eps)) / (2.0 * eps)
        dz = (height_fn(sv + eps) - height_fn(sv - eps)) / (2.0 * eps)
        r = radius_fn(sv)
        return np.array([[dr * dr + dz * dz, 0.0], [0.0, r * r]])

    nv_s, nv_a = s_samples, angle_samples
    coords = np.stack([np.repeat(s, nv_a), np.tile(theta, nv_s)], axis=1)

    def vid(i, j):
        return i * nv_a + j

    tris = []
    for i in range(nv_s - 1):
        for j in range(nv_a - 1):
            tris.append((vid(i, j), vid(i + 1, j), vid(i, j + 1)))
            tris.append((vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    tris = np.array(tris, dtype=np.int64)
    metric = np.empty((len(tris), 2, 2))
    for k, tri in enumerate(tris):
        center = coords[tri].mean(axis=0)
        metric[k] = metric_at(center)
    return SampledManifold(
        dimension=2,
        coords=coords,
        cells=tris,
        metric=metric,
        base_vertex=0,
        metric_fn=metric_at,
        name="surface-of-revolution",
    )


GENERATORS = {
    "line-segment": line_segment,
    "spiral-domain": line_segment,
    "circle": circle,
    "grid-patch": grid_patch,
}


# -- scenario definition ----------------------------------------------------------


@dataclass(frozen=True)
class WitnessConfig:
    """Long-horizon raw embedding run used for the closedness refutation."""

    horizon: float = 1.0e4
    samples: int = 10001
    radius: float = 1.5
    envelope_scale: float = 10.0
    expect_raw: bool = True
    check_lifted: bool = True
    lifted_radius: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {
            "horizon": float(self.horizon),
            "samples": int(self.samples),
            "radius": float(self.radius),
            "envelope_scale": float(self.envelope_scale),
            "expect_raw": bool(self.expect_raw),
            "check_lifted": bool(self.check_lifted),
            "lifted_radius": None
            if self.lifted_radius is None
            else float(self.lifted_radius),
        }


@dataclass(frozen=True)
class Scenario:
    """A named, fully-specified pipeline run.

    ``smoothing`` may be a validated ``SmoothingParams`` or a raw keyword
    dict; dicts are validated when the smoothing stage runs, so a bad knob in
    a scenario file is reported against that stage instead of at load time.
    """

    name: str
    build: Callable[[], SampledManifold] = field(compare=False)
    smoothing: object = SmoothingParams()
    provider: str = "line"
    ambient_dim: int = 1
    limit_radius: float = 1.0
    seed: int = 42
    max_iters: int = 20000
    grad_tol: float = 1e-12
    query_heights: Tuple[float, ...] = ()
    query_points: Tuple[Tuple[float, ...], ...] = ()
    pullback_max_rel: Optional[float] = 1e-6
    witness: Optional[WitnessConfig] = None
    source_desc: dict = field(default_factory=dict)

    def __post_init__(self):
        if (
            not self.query_heights
            and not self.query_points
            and self.pullback_max_rel is None
            and self.witness is None
        ):
            raise ValidationError("scenario enables no verification step")
        if any(q <= 0 for q in self.query_heights):
            raise ValidationError("query heights must be positive")

    def smoothing_kwargs(self) -> dict:
        if isinstance(self.smoothing, SmoothingParams):
            return {
                "r_ball": self.smoothing.r_ball,
                "r_slack": self.smoothing.r_slack,
                "tube_margin": self.smoothing.tube_margin,
                "kernel_width_fraction": self.smoothing.kernel_width_fraction,
                "max_passes": self.smoothing.max_passes,
            }
        return dict(self.smoothing)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "source": self.source_desc,
            "smoothing": self.smoothing_kwargs(),
            "embed": {
                "provider": self.provider,
                "ambient_dim": self.ambient_dim,
                "limit_radius": self.limit_radius,
                "seed": self.seed,
                "max_iters": self.max_iters,
                "grad_tol": self.grad_tol,
            },
            "query_heights": list(self.query_heights),
            "query_points": [list(q) for q in self.query_points],
            "pullback_max_rel": self.pullback_max_rel,
            "witness": None if self.witness is None else self.witness.to_json_dict(),
        }


def _bundled_scenarios() -> dict:
    reg = {}
    reg["line"] = Scenario(
        name="line",
        build=lambda: line_segment(length=100.0, samples=10001),
        source_desc={"generator": "line-segment", "length": 100.0, "samples": 10001},
        provider="line",
        ambient_dim=1,
        query_heights=(0.5, 1.0, 2.0),
        pullback_max_rel=1e-6,
        witness=WitnessConfig(
            horizon=1.0e4,
            samples=10001,
            radius=50.0,
            expect_raw=False,
            check_lifted=False,
        ),
    )
    reg["circle"] = Scenario(
        name="circle",
        build=lambda: circle(circumference=2.0, samples=256),
        source_desc={"generator": "circle", "circumference": 2.0, "samples": 256},
        provider="optimizer",
        ambient_dim=2,
        max_iters=60000,
        grad_tol=1e-13,
        query_heights=(0.1,),
        pullback_max_rel=1e-4,
    )
    reg["spiral-circle"] = Scenario(
        name="spiral-circle",
        build=lambda: line_segment(length=20.0, samples=10001),
        source_desc={"generator": "spiral-domain", "length": 20.0, "samples": 10001},
        provider="spiral_to_circle",
        ambient_dim=2,
        limit_radius=1.0,
        query_heights=(0.5, 1.0, 2.0),
        pullback_max_rel=1e-6,
        witness=WitnessConfig(
            horizon=1.0e4, samples=10001, radius=1.5, expect_raw=True
        ),
    )
    reg["spiral-point"] = Scenario(
        name="spiral-point",
        build=lambda: line_segment(length=4.0, samples=10001),
        source_desc={"generator": "spiral-domain", "length": 4.0, "samples": 10001},
        provider="spiral_to_point",
        ambient_dim=2,
        limit_radius=1.0,
        query_heights=(0.25,),
        pullback_max_rel=1e-6,
        witness=WitnessConfig(
            horizon=1.0e4, samples=10001, radius=1.1, expect_raw=True
        ),
    )
    reg["grid-patch"] = Scenario(
        name="grid-patch",
        build=lambda: grid_patch(side=1.0, divisions=32),
        source_desc={"generator": "grid-patch", "side": 1.0, "divisions": 32},
        provider="optimizer",
        # one slack dimension beyond the flat plane: descent from a random
        # start unfolds reliably there, while m=3 strands in folded minima
        ambient_dim=4,
        max_iters=40000,
        grad_tol=1e-14,
        query_heights=(0.15,),
        pullback_max_rel=1e-3,
    )
    return reg


_REGISTRY = None


def registry() -> dict:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = _bundled_scenarios()
    return _REGISTRY


def list_scenarios():
    """Names of the bundled scenarios."""
    return sorted(registry())


def get_scenario(name: str) -> Scenario:
    reg = registry()
    if name not in reg:
        raise ValidationError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(reg))}"
        )
    return reg[name]


# -- scenario files ----------------------------------------------------------------


def _build_from_source(source: dict) -> Callable[[], SampledManifold]:
    if "file" in source:
        path = source["file"]
        fmt = source.get("format", "auto")
        return lambda: load_manifold(path, fmt)
    gen_name = source.get("generator")
    if gen_name not in GENERATORS:
        raise ParseError(
            f"unknown generator {gen_name!r}; available: {', '.join(sorted(GENERATORS))}"
        )
    gen = GENERATORS[gen_name]
    kwargs = {k: v for k, v in source.items() if k != "generator"}
    return lambda: gen(**kwargs)


def scenario_from_dict(data: dict) -> Scenario:
    """Build a scenario from its JSON description."""
    if "source" not in data:
        raise ParseError("scenario needs a 'source' entry")
    build = _build_from_source(data["source"])
    smoothing = dict(data.get("smoothing", {}))
    embed_cfg = dict(data.get("embed", {}))
    witness_cfg = data.get("witness")
    witness = WitnessConfig(**witness_cfg) if witness_cfg else None
    return Scenario(
        name=str(data.get("name", "custom")),
        build=build,
        source_desc=dict(data["source"]),
        smoothing=smoothing,
        provider=embed_cfg.get("provider", "line"),
        ambient_dim=int(embed_cfg.get("ambient_dim", 2)),
        limit_radius=float(embed_cfg.get("limit_radius", 1.0)),
        seed=int(embed_cfg.get("seed", 42)),
        max_iters=int(embed_cfg.get("max_iters", 20000)),
        grad_tol=float(embed_cfg.get("grad_tol", 1e-12)),
        query_heights=tuple(data.get("queries", ())),
        query_points=tuple(tuple(q) for q in data.get("query_points", ())),
        pullback_max_rel=data.get("pullback_max_rel", None),
        witness=witness,
    )


def scenario_from_file(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such scenario file: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    return scenario_from_dict(data)


def resolve_scenario(ref: str) -> Scenario:
    """Registry name or path to a scenario JSON file."""
    if ref in registry():
        return get_scenario(ref)
    if Path(ref).exists():
        return scenario_from_file(ref)
    raise ValidationError(
        f"{ref!r} is neither a bundled scenario nor a scenario file; "
        f"bundled: {', '.join(list_scenarios())}"
    )


def with_overrides(scenario: Scenario, **changes) -> Scenario:
    """Functional update helper used by the CLI flags."""
    smoothing_changes = {
        k: changes.pop(k)
        for k in ("r_ball", "tube_margin", "max_passes")
        if k in changes and changes[k] is not None
    }
    for k in ("r_ball", "tube_margin", "max_passes"):
        changes.pop(k, None)
    if smoothing_changes:
        merged = scenario.smoothing_kwargs()
        merged.update(smoothing_changes)
        changes["smoothing"] = merged
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(scenario, **changes) if changes else scenario
