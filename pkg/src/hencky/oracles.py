"""Brute-force reference values used to freeze test expectations.

Every oracle here avoids the production code path it checks: densities
are minimised over parameter grids, support functions are maxima over
vertex lists, projections are nearest grid points of the set, and the
manufactured divergence comes from a closed-form field.
"""
from __future__ import annotations

import json
import math

import numpy as np
from scipy.spatial import Delaunay

from .tensor_core import Ball, YieldSet, dev_basis, segment_polytope, square_polytope

ORACLES = ("reduced-density-grid", "support-vertices", "projection-grid", "manufactured-div",
           "facet-slip-closed-form")


def _frob(a):
    return math.sqrt(float(np.sum(np.asarray(a) ** 2)))


def _dev(xi):
    n = xi.shape[0]
    return xi - np.trace(xi) / n * np.eye(n)


def support_vertices(vertices, xi):
    """``max_v v : xi`` over an explicit vertex list."""
    return max(float(np.sum(v * xi)) for v in np.asarray(vertices, float))


def _zoom_min(fun, center, half, points=201, rounds=6, shrink=10.0):
    """Minimum of ``fun`` over nested square grids around the running best."""
    best_x, best_f = np.asarray(center, float), math.inf
    dim = len(best_x)
    for _ in range(rounds):
        axes = [np.linspace(c - half, c + half, points) for c in best_x]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dim)
        vals = fun(grid)
        i = int(np.argmin(vals))
        if vals[i] < best_f:
            best_f, best_x = float(vals[i]), grid[i]
        half /= shrink
    return best_f, best_x


def reduced_density_grid(xi, mu, kappa, K: YieldSet, mode="auto"):
    """``min_p mu |xi_D - p|^2 + kappa/2 (tr xi)^2 + H(p)`` by grid search.

    ``mode="1d"`` searches ``p`` on the segment from 0 to ``xi_D`` (valid
    for a ball); ``"2d"`` searches the whole deviatoric plane (n = 2).
    """
    xi = np.asarray(xi, float)
    n = xi.shape[0]
    x = _dev(xi)
    vol = 0.5 * kappa * np.trace(xi) ** 2
    r = _frob(x)
    if mode == "auto":
        mode = "1d" if isinstance(K, Ball) else "2d"
    if r == 0:
        return float(vol)
    if mode == "1d":
        if not isinstance(K, Ball):
            raise ValueError("the 1-d search is only valid for a ball")

        def f1(t):
            t = t[:, 0]
            return mu * (r - t) ** 2 + K.radius * np.abs(t)

        val, _ = _zoom_min(f1, [0.5 * r], 0.5 * r + 1e-12, points=2001)
        return float(val + vol)
    if n != 2:
        raise ValueError("the 2-d search needs n = 2")
    b = dev_basis(2)
    xc = np.array([np.sum(x * bb) for bb in b])
    if isinstance(K, Ball):
        hfun = lambda y: K.radius * np.linalg.norm(y, axis=1)
    else:
        vc = np.array([[np.sum(v * bb) for bb in b] for v in K.vertices])
        hfun = lambda y: (y @ vc.T).max(axis=1)

    def f2(y):
        return mu * np.sum((xc - y) ** 2, axis=1) + hfun(y)

    val, _ = _zoom_min(f2, 0.5 * xc, r)
    return float(val + vol)


def _zoom_1d(fun, lo, hi, points=2001, rounds=6):
    """Grid minimum of a scalar function on ``[lo, hi]`` with nested refinement."""
    a, b = lo, hi
    best = lo
    for _ in range(rounds):
        t = np.linspace(a, b, points)
        best = t[int(np.argmin(fun(t)))]
        step = (b - a) / (points - 1)
        a, b = max(lo, best - step), min(hi, best + step)
    return best


def projection_grid(K: YieldSet, sigma):
    """Nearest point of ``K`` to a trace-free ``sigma`` (n = 2).

    Points of ``K`` are returned unchanged; otherwise the nearest point lies
    on the boundary, which is searched on nested grids of a parametrisation
    (angle for a ball, arclength along each edge for a polygon).
    """
    sigma = np.asarray(sigma, float)
    if sigma.shape != (2, 2):
        raise ValueError("projection-grid needs n = 2")
    b = dev_basis(2)
    sc = np.array([np.sum(sigma * bb) for bb in b])
    if isinstance(K, Ball):
        if np.linalg.norm(sc) <= K.radius:
            return np.einsum("k,kij->ij", sc, b)
        circle = lambda t: K.radius * np.stack([np.cos(t), np.sin(t)], -1)
        th = _zoom_1d(lambda t: np.sum((circle(t) - sc) ** 2, axis=1), -np.pi, np.pi)
        return np.einsum("k,kij->ij", circle(th), b)
    vc = np.array([[np.sum(v * bb) for bb in b] for v in K.vertices])
    _, s, _ = np.linalg.svd(vc - vc.mean(0))
    if s[1] > 1e-12 * s[0]:
        tri = Delaunay(vc)
        if tri.find_simplex(sc[None])[0] >= 0:
            return np.einsum("k,kij->ij", sc, b)
        edges = tri.convex_hull
    else:
        # a segment is its own boundary
        t = vc @ np.linalg.svd(vc - vc.mean(0))[2][0]
        edges = np.array([[int(np.argmin(t)), int(np.argmax(t))]])
    best, best_d = None, math.inf
    for i, j in edges:
        seg = lambda t, i=i, j=j: vc[i] + t[:, None] * (vc[j] - vc[i])
        t = _zoom_1d(lambda t: np.sum((seg(t) - sc) ** 2, axis=1), 0.0, 1.0)
        y = seg(np.array([t]))[0]
        d = float(np.sum((y - sc) ** 2))
        if d < best_d:
            best, best_d = y, d
    return np.einsum("k,kij->ij", best, b)


def manufactured_divergence(mesh):
    """Field vanishing on the unit-square boundary with its cell-averaged divergence.

    ``v = (sin(pi x) sin(pi y), sin(2 pi x) sin(pi y)^2 / 2)``; the divergence
    ``pi cos(pi x) sin(pi y) + pi sin(2 pi x) sin(pi y) cos(pi y)`` is averaged over each
    cell with a collapsed Gauss-Legendre product rule.
    """
    def field(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([np.sin(np.pi * x1) * np.sin(np.pi * x2),
                         0.5 * np.sin(2 * np.pi * x1) * np.sin(np.pi * x2) ** 2], -1)

    def div(x):
        x1, x2 = x[..., 0], x[..., 1]
        return (np.pi * np.cos(np.pi * x1) * np.sin(np.pi * x2)
                + np.pi * np.sin(2 * np.pi * x1) * np.sin(np.pi * x2) * np.cos(np.pi * x2))

    # Duffy-mapped Gauss-Legendre product rule, exact enough for smooth data
    g, gw = np.polynomial.legendre.leggauss(8)
    s, t = np.meshgrid(0.5 * (g + 1), 0.5 * (g + 1), indexing="ij")
    ws = np.outer(0.5 * gw, 0.5 * gw)
    lam1, lam2 = s * (1 - t), s * t
    wts = (ws * s).ravel()  # Jacobian of the collapsed square
    v = mesh.vertices[mesh.cells]
    pts = (v[:, None, 0] * (1 - lam1 - lam2).ravel()[None, :, None]
           + v[:, None, 1] * lam1.ravel()[None, :, None] + v[:, None, 2] * lam2.ravel()[None, :, None])
    psi = (div(pts) * wts).sum(axis=1) / wts.sum()
    return field(mesh.vertices), psi


def facet_slip(a, nu, sigma_y):
    """``sigma_y |a (.) nu|`` for a ball yield set, from the explicit matrix."""
    a = np.asarray(a, float)
    nu = np.asarray(nu, float)
    m = 0.5 * (np.outer(a, nu) + np.outer(nu, a))
    return sigma_y * float(np.linalg.norm(m, "fro"))


def _named_set(name, n=2, size=1.0):
    if name == "ball":
        return Ball(size, n)
    if name == "segment":
        return segment_polytope(n)
    if name == "square":
        return square_polytope(n, size)
    raise ValueError(f"unknown yield set {name!r}")


def run_oracle(name, params=None):
    """Evaluate a named oracle on ``params`` (defaults give the documented cases)."""
    p = dict(params or {})
    if name == "reduced-density-grid":
        mu, sy, mag = p.get("mu", 1.0), p.get("sigma_y", 2.0), p.get("dev_norm", 3.0)
        kappa = p.get("kappa", 1.0)
        xi = mag * dev_basis(2)[0]
        val = reduced_density_grid(xi, mu, kappa, Ball(sy, 2))
        return dict(oracle=name, inputs=dict(mu=mu, kappa=kappa, sigma_y=sy, dev_norm=mag), value=val)
    if name == "support-vertices":
        K = _named_set(p.get("set", "segment"))
        xi = np.asarray(p.get("xi", [[1.0, 0.0], [0.0, -1.0]]), float)
        return dict(oracle=name, inputs=dict(set=p.get("set", "segment"), xi=xi.tolist()),
                    value=support_vertices(K.vertices, xi))
    if name == "projection-grid":
        K = _named_set(p.get("set", "square"))
        sigma = np.asarray(p.get("sigma", [[1.5, 0.7], [0.7, -1.5]]), float)
        return dict(oracle=name, inputs=dict(set=p.get("set", "square"), sigma=sigma.tolist()),
                    value=projection_grid(K, sigma).tolist())
    if name == "manufactured-div":
        from .mesh import gen_rectangle
        m = int(p.get("m", 8))
        mesh = gen_rectangle([1.0, 1.0], m)
        v, psi = manufactured_divergence(mesh)
        return dict(oracle=name, inputs=dict(m=m), value=dict(v=v.tolist(), psi=psi.tolist()))
    if name == "facet-slip-closed-form":
        a = p.get("a", [1.0, 0.0])
        nu = p.get("nu", [0.0, -1.0])
        sy = p.get("sigma_y", 1.0)
        return dict(oracle=name, inputs=dict(a=list(a), nu=list(nu), sigma_y=sy), value=facet_slip(a, nu, sy))
    raise ValueError(f"unknown oracle {name!r}; choose from {', '.join(ORACLES)}")


def write_oracle(result, path):
    with open(path, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
