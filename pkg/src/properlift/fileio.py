"""Reading and writing sampled manifolds.

Two formats: a JSON curve config for 1-D manifolds and an OFF-compatible
ASCII mesh with extension sections for per-face metric coefficients and the
base vertex. Saving emits the canonicalized representation (explicit sample
parameters and edge lengths), and loading that file reproduces the manifold
exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import SampledManifold, _eval_metric_expression


def _curve_from_config(data: dict) -> SampledManifold:
    if data.get("n", 1) != 1:
        raise ParseError("curve config must declare n = 1")
    closed = bool(data.get("closed", False))
    samples = data.get("samples")
    if samples is None:
        raise ParseError("curve config needs a 'samples' entry")
    if isinstance(samples, int):
        lo, hi = data.get("parameter_range", (0.0, 1.0))
        if not hi > lo:
            raise ParseError("parameter_range must be increasing")
        if closed:
            t = np.linspace(lo, hi, samples + 1)[:-1]
        else:
            t = np.linspace(lo, hi, samples)
    else:
        t = np.asarray(samples, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ParseError("'samples' must be an integer count or a list")
    nv = t.size
    cells = np.stack([np.arange(nv - 1), np.arange(1, nv)], axis=1)
    period = None
    if closed:
        lo, hi = data.get("parameter_range", (float(t[0]), float(t[-1])))
        period = float(hi) - float(lo)
        cells = np.concatenate([cells, [[nv - 1, 0]]], axis=0) if nv > 1 else cells
    expression = data.get("metric_expression")
    if "edge_lengths" in data:
        spans = np.asarray(data["edge_lengths"], dtype=float)
        if spans.shape != (cells.shape[0],):
            raise ParseError(
                f"expected {cells.shape[0]} edge lengths, got {spans.shape}"
            )
    else:
        expr = expression if expression is not None else "1"
        dt = t[cells[:, 1]] - t[cells[:, 0]]
        if closed and nv > 1:
            dt[-1] = (period - (t[-1] - t[0])) if period else dt[-1]
        mid = t[cells[:, 0]] + 0.5 * dt
        spans = np.sqrt(_eval_metric_expression(expr, mid)) * np.abs(dt)
        expression = expr
    return SampledManifold(
        dimension=1,
        coords=t[:, None],
        cells=cells,
        metric=np.ones((cells.shape[0], 1, 1)),
        cell_spans=spans,
        base_vertex=int(data.get("base_vertex", 0)),
        closed=closed,
        period=period,
        metric_expression=expression,
        name=str(data.get("name", "")),
    )


def _curve_to_config(m: SampledManifold) -> dict:
    data = {
        "n": 1,
        "samples": [float(v) for v in m.parameters],
        "edge_lengths": [float(v) for v in m.cell_spans],
        "base_vertex": int(m.base_vertex),
        "closed": bool(m.closed),
    }
    if m.closed:
        data["parameter_range"] = [
            float(m.parameters[0]),
            float(m.parameters[0]) + float(m.period),
        ]
    if m.metric_expression is not None:
        data["metric_expression"] = m.metric_expression
    if m.name:
        data["name"] = m.name
    return data


def _mesh_from_lines(lines) -> SampledManifold:
    tokens = [ln.strip() for ln in lines]
    tokens = [ln for ln in tokens if ln and not ln.startswith("#")]
    if not tokens or tokens[0] != "OFF":
        raise ParseError("mesh file must start with an OFF header")
    try:
        nv, nf, _ = (int(x) for x in tokens[1].split())
    except Exception as exc:
        raise ParseError(f"bad OFF count line: {tokens[1]!r}") from exc
    cursor = 2
    if len(tokens) < cursor + nv + nf:
        raise ParseError("mesh file truncated")
    coords = np.empty((nv, 2))
    for i in range(nv):
        parts = tokens[cursor + i].split()
        if len(parts) < 2:
            raise ParseError(f"bad vertex line: {tokens[cursor + i]!r}")
        coords[i] = [float(parts[0]), float(parts[1])]
    cursor += nv
    cells = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        parts = tokens[cursor + i].split()
        if len(parts) != 4 or parts[0] != "3":
            raise ParseError(f"only triangle faces supported: {tokens[cursor + i]!r}")
        cells[i] = [int(parts[1]), int(parts[2]), int(parts[3])]
    cursor += nf
    metric = np.tile(np.eye(2), (nf, 1, 1))
    base = 0
    while cursor < len(tokens):
        section = tokens[cursor]
        cursor += 1
        if section == "METRIC":
            if len(tokens) < cursor + nf:
                raise ParseError("METRIC section truncated")
            for i in range(nf):
                g11, g12, g22 = (float(x) for x in tokens[cursor + i].split())
                metric[i] = [[g11, g12], [g12, g22]]
            cursor += nf
        elif section == "BASE":
            base = int(tokens[cursor])
            cursor += 1
        else:
            raise ParseError(f"unknown extension section {section!r}")
    return SampledManifold(
        dimension=2,
        coords=coords,
        cells=cells,
        metric=metric,
        base_vertex=base,
    )


def _mesh_to_lines(m: SampledManifold):
    lines = ["OFF", f"{m.vertex_count} {m.cell_count} 0"]
    for x, y in m.coords:
        lines.append(f"{x!r} {y!r} 0.0")
    for a, b, c in m.cells:
        lines.append(f"3 {a} {b} {c}")
    lines.append("METRIC")
    for g in m.metric:
        lines.append(f"{g[0, 0]!r} {g[0, 1]!r} {g[1, 1]!r}")
    lines.append("BASE")
    lines.append(str(m.base_vertex))
    return lines


def load_manifold(path, fmt: str = "auto") -> SampledManifold:
    """Load a manifold from disk.

    ``fmt`` is one of ``curve-config`` (JSON), ``mesh`` (OFF with extension
    sections), or ``auto`` to pick by file extension.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    if fmt == "auto":
        fmt = "curve-config" if path.suffix.lower() == ".json" else "mesh"
    if fmt == "curve-config":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ParseError("curve config must be a JSON object")
        return _curve_from_config(data)
    if fmt == "mesh":
        return _mesh_from_lines(path.read_text().splitlines())
    raise ParseError(f"unknown format {fmt!r}")


def save_manifold(m: SampledManifold, path) -> None:
    """Write the canonicalized representation of a manifold."""
    path = Path(path)
    if m.dimension == 1:
        path.write_text(json.dumps(_curve_to_config(m), indent=1) + "\n")
    else:
        path.write_text("\n".join(_mesh_to_lines(m)) + "\n")
