"""Independent reference computations the tests check the package against.

Everything here is deliberately brute force or quadrature based and shares
no code with the implementation paths it validates.
"""

import numpy as np


def brute_force_distances(nv, weighted_edges, source):
    """All-simple-paths shortest distances, accumulating along each path.

    Sums weights in path order from the source so that a matching Dijkstra
    relaxation sequence produces bit-identical floats.
    """
    adjacency = [[] for _ in range(nv)]
    for u, v, w in weighted_edges:
        adjacency[u].append((v, w))
        adjacency[v].append((u, w))
    best = [np.inf] * nv
    best[source] = 0.0
    visited = [False] * nv
    visited[source] = True

    def walk(u, acc):
        for v, w in adjacency[u]:
            if visited[v]:
                continue
            cand = acc + w
            if cand < best[v]:
                best[v] = cand
            visited[v] = True
            walk(v, cand)
            visited[v] = False

    walk(source, 0.0)
    return np.array(best)


def pairwise_lipschitz(values, dist_matrix):
    """Brute-force sup of |F(u)-F(v)| / d(u,v) over all vertex pairs."""
    best = 0.0
    n = len(values)
    for i in range(n):
        for j in range(i + 1, n):
            d = dist_matrix[i][j]
            if d > 0:
                best = max(best, abs(values[i] - values[j]) / d)
    return best


def quadrature_mollified(f_exact, positions, widths, domain, period=None, resolution=20000):
    """Continuum Gaussian mollification of an analytic profile.

    Integrates f against a Gaussian of per-position width over a dense
    trapezoid grid, restricted to ``domain`` (or wrapped when ``period`` is
    given). This is the reference the discrete, mass-weighted smoother is
    compared to.
    """
    lo, hi = domain
    out = np.empty(len(positions))
    for k, (c, sigma) in enumerate(zip(positions, widths)):
        if period is None:
            a = max(lo, c - 8.0 * sigma)
            b = min(hi, c + 8.0 * sigma)
            u = np.linspace(a, b, resolution)
            rel = (u - c) / sigma
        else:
            u = np.linspace(c - 0.5 * period, c + 0.5 * period, resolution)
            rel = (u - c) / sigma
        w = np.exp(-0.5 * rel * rel)
        vals = f_exact(np.mod(u, period) if period is not None else u)
        out[k] = np.trapezoid(w * vals, u) / np.trapezoid(w, u)
    return out


def simpson_arc_length(curve_fn, t0, t1, segments=4096):
    """Composite-Simpson arc length of a parametric plane curve."""
    t = np.linspace(t0, t1, 2 * segments + 1)
    pts = curve_fn(t)
    d = np.gradient(pts, t, axis=0)
    speed = np.linalg.norm(d, axis=1)
    weights = np.ones_like(t)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    h = (t1 - t0) / (2 * segments)
    return float(h / 3.0 * np.sum(weights * speed))


def central_difference_gradient(fn, x, eps):
    """Componentwise central differences of a scalar function of an array."""
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        bump = np.zeros_like(xf)
        bump[i] = eps
        flat[i] = (fn((xf + bump).reshape(x.shape)) - fn((xf - bump).reshape(x.shape))) / (
            2.0 * eps
        )
    return grad


def best_line_configuration_stress(targets):
    """Global minimum of edge stress for a 3-cycle mapped to the real line.

    Exhaustive grid search over the two free gaps followed by local
    polishing; configurations are (0, a, a+b) up to rigid motion.
    """
    t01, t12, t20 = targets

    def stress(a, b):
        return (
            (a * a - t01 * t01) ** 2
            + (b * b - t12 * t12) ** 2
            + ((a + b) ** 2 - t20 * t20) ** 2
        )

    scale = max(targets)
    grid_pts = np.linspace(-2.0 * scale, 2.0 * scale, 161)
    best = np.inf
    best_ab = (0.0, 0.0)
    for a in grid_pts:
        for b in grid_pts:
            s = stress(a, b)
            if s < best:
                best = s
                best_ab = (a, b)
    a, b = best_ab
    step = grid_pts[1] - grid_pts[0]
    for _ in range(60):
        improved = False
        for da, db in ((step, 0), (-step, 0), (0, step), (0, -step)):
            s = stress(a + da, b + db)
            if s < best:
                best, a, b, improved = s, a + da, b + db, True
        if not improved:
            step *= 0.5
    return best
