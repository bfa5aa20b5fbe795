"""Scenario-driven orchestration of the whole pipeline.

Stage order: distance field, truncation, certified smoothing, metric
surgery with positive-definiteness report, embedding, lift, pullback check,
escape bound, properness certificates, and optionally the long-horizon
witness runs. The run report records every certificate plus enough raw
arrays to emit CSV series, and serializes to byte-stable JSON once timings
are stripped.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .distance import distance_field
from .embedding import DistortionReport, EmbedRequest, embed
from .errors import PipelineError, StageError
from .geometry import MetricField, original_metric_field
from .lifting import (
    NonPropernessWitness,
    escape_bound_check,
    lift,
    non_properness_witness,
    properness_certificate,
    pullback_check,
)
from .scenarios import Scenario, WitnessConfig, line_segment
from .smoothing import (
    SmoothingParams,
    smooth_approx,
    truncate_distance,
    tube_bounds,
    verify_tube,
)
from .surgery import covector_norm, differential, modify_metric, spd_check

CERTIFICATION_STAGES = ("build", "distance", "truncate", "smoothing", "surgery", "embed", "lift")


@dataclass
class StageRecord:
    name: str
    status: str  # "pass", "fail", or "error"
    detail: str = ""

    def to_json_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "detail": self.detail}


@dataclass
class RunReport:
    """Everything a scenario run produced, plus in-memory artifacts."""

    scenario: dict
    seed: int
    stages: List[StageRecord] = field(default_factory=list)
    smoothing_certificate: Optional[dict] = None
    tube_report: Optional[dict] = None
    spd_report: Optional[dict] = None
    distortion_pre_lift: Optional[dict] = None
    pullback_post_lift: Optional[dict] = None
    properness: List[dict] = field(default_factory=list)
    witness_raw: Optional[dict] = None
    witness_lifted: Optional[dict] = None
    overall_pass: bool = False
    failure_kind: Optional[str] = None  # "certification" | "verification"
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict, repr=False)

    def to_json_dict(self, include_timings: bool = True) -> dict:
        out = {
            "scenario": self.scenario,
            "seed": int(self.seed),
            "stages": [s.to_json_dict() for s in self.stages],
            "smoothing_certificate": self.smoothing_certificate,
            "tube_report": self.tube_report,
            "spd_report": self.spd_report,
            "distortion_pre_lift": self.distortion_pre_lift,
            "pullback_post_lift": self.pullback_post_lift,
            "properness": self.properness,
            "witness_raw": self.witness_raw,
            "witness_lifted": self.witness_lifted,
            "overall_pass": bool(self.overall_pass),
            "failure_kind": self.failure_kind,
        }
        if include_timings:
            out["timings"] = self.timings
        return out

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(
            self.to_json_dict(include_timings), indent=1, sort_keys=True
        )


class _Runner:
    def __init__(self, report: RunReport):
        self.report = report
        self.aborted = False

    def run(self, name, fn, kind="certification"):
        if self.aborted:
            return None
        start = time.perf_counter()
        try:
            result = fn()
        except PipelineError as exc:
            self.report.stages.append(StageRecord(name, "error", str(exc)))
            self.report.failure_kind = self.report.failure_kind or kind
            self.aborted = True
            raise StageError(name, exc) from exc
        finally:
            self.report.timings[name] = time.perf_counter() - start
        return result

    def check(self, name, passed, detail, kind):
        status = "pass" if passed else "fail"
        self.report.stages.append(StageRecord(name, status, detail))
        if not passed:
            self.report.failure_kind = self.report.failure_kind or kind
            if kind == "certification":
                self.aborted = True
        return passed


def _witness_raw_run(scenario: Scenario, cfg: WitnessConfig):
    """Embed a plain half-line with the scenario's provider at long horizon."""
    manifold = line_segment(length=cfg.horizon, samples=cfg.samples)
    req = EmbedRequest(
        manifold=manifold,
        metric=original_metric_field(manifold),
        ambient_dim=max(2, scenario.ambient_dim),
        provider=scenario.provider,
        limit_radius=scenario.limit_radius,
        seed=scenario.seed,
    )
    emap, _ = embed(req)
    return manifold, emap


def run_scenario(
    scenario: Scenario,
    seed: Optional[int] = None,
    refine_k: int = 0,
    extra_query_points=(),
) -> RunReport:
    """Execute every stage of a scenario and collect the evidence chain.

    Hard stage errors abort the run with the stage named; threshold checks
    mark the report as failed without aborting later independent checks.
    Deterministic given the scenario and seed.
    """
    if seed is None:
        seed = scenario.seed
    else:
        scenario = replace(scenario, seed=int(seed))
    report = RunReport(scenario=scenario.describe(), seed=seed)
    report.scenario["refine"] = int(refine_k)
    runner = _Runner(report)
    art = report.artifacts

    def build():
        manifold = scenario.build()
        if refine_k:
            from .geometry import refine

            manifold = refine(manifold, refine_k)
        return manifold

    try:
        manifold = runner.run("build", build)
        runner.check(
            "build",
            True,
            f"{manifold.vertex_count} vertices, {manifold.cell_count} cells, "
            f"h={manifold.mesh_scale:.3g}",
            "certification",
        )
        art["manifold"] = manifold

        dist = runner.run("distance", lambda: distance_field(manifold))
        art["dist"] = dist
        runner.check("distance", True, f"max D = {dist.values.max():.6g}", "certification")

        smoothing_kwargs = scenario.smoothing_kwargs()

        def truncate():
            # only the ball radius matters here; the remaining knobs are
            # validated when the smoothing stage assembles the full params
            ball_params = SmoothingParams(r_ball=smoothing_kwargs.get("r_ball", 0.2))
            return truncate_distance(dist, ball_params)

        trunc = runner.run("truncate", truncate)
        art["trunc"] = trunc
        runner.check("truncate", True, f"min f = {trunc.values.min():.6g}", "certification")

        def smoothing_stage():
            params = SmoothingParams(**smoothing_kwargs)
            return (*smooth_approx(trunc, params), params)

        smooth, cert, params = runner.run("smoothing", smoothing_stage)
        art["phi"] = smooth
        report.smoothing_certificate = cert.to_json_dict()
        tube = verify_tube(smooth, trunc, dist, params)
        report.tube_report = {
            "passed": bool(tube.passed),
            "violations": [int(v) for v in tube.violations],
        }
        if not runner.check(
            "smoothing",
            cert.valid and tube.passed,
            f"lipschitz {cert.measured_lipschitz:.4f} "
            f"(target {cert.lipschitz_target:.4f}), "
            f"tube violation {cert.max_tube_violation:.3g}, "
            f"passes {cert.kernel_passes}",
            "certification",
        ):
            raise StageError("smoothing", PipelineError("certificate invalid"))

        def surgery():
            w = differential(smooth)
            g = original_metric_field(manifold)
            norms = covector_norm(w, g)
            gt = modify_metric(g, w)
            return w, g, norms, gt, spd_check(gt, g)

        w, g, norms, gt, spd = runner.run("surgery", surgery)
        art["covector"] = w
        art["covector_norms"] = norms
        art["gtilde"] = gt
        art["spd_min_eigs"] = spd.min_eigenvalues
        report.spd_report = spd.to_json_dict()
        report.spd_report["max_covector_norm"] = float(np.max(norms, initial=0.0))
        if not runner.check(
            "surgery",
            spd.passed,
            f"min generalized eigenvalue {spd.min_eigenvalue:.8f}, "
            f"max covector norm {np.max(norms, initial=0.0):.6f}",
            "certification",
        ):
            raise StageError("surgery", PipelineError("modified metric rejected"))

        def do_embed():
            req = EmbedRequest(
                manifold=manifold,
                metric=gt,
                ambient_dim=scenario.ambient_dim,
                provider=scenario.provider,
                limit_radius=scenario.limit_radius,
                seed=scenario.seed,
                max_iters=scenario.max_iters,
                grad_tol=scenario.grad_tol,
            )
            return embed(req)

        emap_raw, pre = runner.run("embed", do_embed)
        art["emap_raw"] = emap_raw
        art["embed_trace"] = pre.trace
        report.distortion_pre_lift = pre.to_json_dict()
        if not runner.check(
            "embed",
            pre.converged,
            f"pre-lift max rel edge error {pre.max_rel_edge_error:.3g}, "
            f"stress {pre.stress:.3g}",
            "certification",
        ):
            raise StageError("embed", PipelineError("embedding did not converge"))

        lifted = runner.run("lift", lambda: lift(emap_raw, smooth))
        art["emap_lifted"] = lifted
        runner.check(
            "lift",
            True,
            f"ambient dimension {lifted.ambient_dim}, "
            f"min height {lifted.coords[:, -1].min():.6g}",
            "certification",
        )

        pull = runner.run("pullback", lambda: pullback_check(lifted, g), "verification")
        report.pullback_post_lift = pull.to_json_dict()
        threshold = scenario.pullback_max_rel
        runner.check(
            "pullback",
            threshold is None or pull.max_rel_edge_error <= threshold,
            f"max rel edge error {pull.max_rel_edge_error:.3g}"
            + (f" (threshold {threshold:.3g})" if threshold is not None else ""),
            "verification",
        )

        escape = runner.run(
            "escape",
            lambda: escape_bound_check(lifted, dist, params),
            "verification",
        )
        report.artifacts["escape"] = escape
        runner.check(
            "escape",
            escape.passed,
            f"{len(escape.violations)} violations over {escape.checked} vertices, "
            f"min margin {escape.min_margin:.3g}",
            "verification",
        )

        queries = [
            np.concatenate([np.zeros(lifted.ambient_dim - 1), [q]])
            for q in scenario.query_heights
        ]
        queries += [np.asarray(q, dtype=float) for q in scenario.query_points]
        queries += [np.asarray(q, dtype=float) for q in extra_query_points]
        if queries:
            def certify_all():
                return [
                    properness_certificate(lifted, dist, q, params)
                    for q in queries
                ]

            certs = runner.run("properness", certify_all, "verification")
            report.properness = [c.to_json_dict() for c in certs]
            runner.check(
                "properness",
                all(c.verdict for c in certs),
                f"{sum(c.verdict for c in certs)}/{len(certs)} positive verdicts",
                "verification",
            )

        if scenario.witness is not None:
            cfg = scenario.witness

            def raw_witness():
                wm, wmap = _witness_raw_run(scenario, cfg)
                art["witness_manifold"] = wm
                art["witness_emap"] = wmap
                return non_properness_witness(
                    wmap, cfg.radius, cfg.horizon, cfg.envelope_scale
                )

            found = runner.run("witness-raw", raw_witness, "verification")
            report.witness_raw = None if found is None else found.to_json_dict()
            runner.check(
                "witness-raw",
                (found is not None) == cfg.expect_raw,
                "witness found" if found is not None else "no witness",
                "verification",
            )
            if cfg.check_lifted:
                def lifted_witness():
                    r = cfg.lifted_radius
                    if r is None:
                        r = 1.01 * float(
                            np.max(np.linalg.norm(lifted.coords, axis=1))
                        )
                    horizon = float(np.max(manifold.parameters)) if manifold.dimension == 1 else cfg.horizon
                    return non_properness_witness(
                        lifted, r, horizon, cfg.envelope_scale
                    )

                lifted_found = runner.run("witness-lifted", lifted_witness, "verification")
                report.witness_lifted = (
                    None if lifted_found is None else lifted_found.to_json_dict()
                )
                runner.check(
                    "witness-lifted",
                    lifted_found is None,
                    "no witness" if lifted_found is None else "witness found",
                    "verification",
                )
    except StageError:
        pass

    report.overall_pass = (
        not runner.aborted
        and all(s.status == "pass" for s in report.stages)
    )
    if report.overall_pass:
        report.failure_kind = None
    return report


# -- emission -------------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    with path.open("w") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def emit_plots(report: RunReport, out_dir) -> List[Path]:
    """Write the CSV series and JSON reports for a finished run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    art = report.artifacts

    def emit(name, fn):
        path = out / name
        fn(path)
        written.append(path)

    if "dist" in art:
        dist = art["dist"]
        emit(
            "distance.csv",
            lambda p: _write_csv(
                p,
                ["vertex", "distance"],
                [(i, float(v)) for i, v in enumerate(dist.values)],
            ),
        )
    if "phi" in art and "trunc" in art:
        trunc = art["trunc"]
        phi = art["phi"]
        lower, upper = tube_bounds(trunc)
        emit(
            "phi.csv",
            lambda p: _write_csv(
                p,
                ["vertex", "truncated", "phi", "tube_lower", "tube_upper"],
                [
                    (i, float(f), float(s), float(lo), float(hi))
                    for i, (f, s, lo, hi) in enumerate(
                        zip(trunc.values, phi.values, lower.values, upper.values)
                    )
                ],
            ),
        )
    if "gtilde" in art:
        gt: MetricField = art["gtilde"]
        eigs = art["spd_min_eigs"]
        if gt.manifold.dimension == 1:
            header = ["cell", "g11", "min_generalized_eigenvalue"]
            rows = [
                (i, float(c[0, 0]), float(e)) for i, (c, e) in enumerate(zip(gt.coeffs, eigs))
            ]
        else:
            header = ["cell", "g11", "g12", "g22", "min_generalized_eigenvalue"]
            rows = [
                (i, float(c[0, 0]), float(c[0, 1]), float(c[1, 1]), float(e))
                for i, (c, e) in enumerate(zip(gt.coeffs, eigs))
            ]
        emit("gtilde.csv", lambda p: _write_csv(p, header, rows))
    for key, name in (("emap_raw", "embedding_raw.csv"), ("emap_lifted", "embedding.csv")):
        if key in art:
            emap = art[key]
            header = ["vertex"] + [f"x{k}" for k in range(emap.ambient_dim)]
            rows = [
                (i, *[float(c) for c in row]) for i, row in enumerate(emap.coords)
            ]
            emit(name, lambda p, h=header, r=rows: _write_csv(p, h, r))
    if art.get("embed_trace"):
        rows = [(it, float(s), float(st)) for it, s, st in art["embed_trace"]]
        emit("stress.csv", lambda p: _write_csv(p, ["iter", "stress", "step"], rows))
    if report.properness:
        emit(
            "certificate.json",
            lambda p: p.write_text(json.dumps(report.properness, indent=1, sort_keys=True) + "\n"),
        )
    if report.witness_raw is not None:
        emit(
            "witness.json",
            lambda p: p.write_text(json.dumps(report.witness_raw, indent=1, sort_keys=True) + "\n"),
        )
    emit("report.json", lambda p: p.write_text(report.to_json() + "\n"))
    return written
