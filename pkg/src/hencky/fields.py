"""Discrete displacements, strains and plastic-strain measures.

Displacements are P1 (per-vertex vectors, shape ``(nv, n)``), elastic
strains are P0 (per-cell tensors, shape ``(nc, n, n)``). A plastic strain
is a measure with a P0 density plus per-facet amplitudes living on the
Dirichlet facets.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .tensor_core import deviator, norm, sym_outer, trace


def sym_gradient(u, mesh: Mesh):
    """Per-cell symmetric gradient of a P1 field."""
    u = np.asarray(u, dtype=float)
    du = np.einsum("cai,caj->cij", u[mesh.cells], mesh.grad_basis)
    return 0.5 * (du + np.swapaxes(du, 1, 2))


def divergence(u, mesh: Mesh):
    return trace(sym_gradient(u, mesh))


def facet_average(u, mesh: Mesh):
    """Facet traces of a P1 field, taken as the mean of the facet vertex values."""
    return np.asarray(u, dtype=float)[mesh.facets].mean(axis=1)


def interpolate(fun, mesh: Mesh):
    return np.asarray(fun(mesh.vertices), dtype=float)


def evaluate_p1(u, mesh: Mesh, points, outside=0.0):
    """Point values of a P1 field; ``outside`` where points miss the mesh."""
    u = np.asarray(u, dtype=float)
    cell, bary = mesh.locate(points)
    inside = cell >= 0
    out = np.full((len(cell),) + u.shape[1:], outside, dtype=float)
    c = mesh.cells[cell[inside]]
    out[inside] = np.einsum("pk,pk...->p...", bary[inside], u[c])
    return out


def evaluate_p0(f, mesh: Mesh, points, outside=0.0):
    f = np.asarray(f, dtype=float)
    cell, _ = mesh.locate(points)
    out = np.full((len(cell),) + f.shape[1:], outside, dtype=float)
    out[cell >= 0] = f[cell[cell >= 0]]
    return out


# ---------------------------------------------------------------------------
# norms

# degree-4 rule on the reference triangle (barycentric coordinates, weights sum 1)
_TRI_A, _TRI_B = 0.445948490915965, 0.091576213509771
_TRI_WA, _TRI_WB = 0.223381589678011, 0.109951743655322
TRI_RULE = (
    np.array([
        [_TRI_A, _TRI_A, 1 - 2 * _TRI_A], [_TRI_A, 1 - 2 * _TRI_A, _TRI_A], [1 - 2 * _TRI_A, _TRI_A, _TRI_A],
        [_TRI_B, _TRI_B, 1 - 2 * _TRI_B], [_TRI_B, 1 - 2 * _TRI_B, _TRI_B], [1 - 2 * _TRI_B, _TRI_B, _TRI_B],
    ]),
    np.array([_TRI_WA] * 3 + [_TRI_WB] * 3),
)
_TET_A, _TET_B = 0.5854101966249685, 0.1381966011250105
TET_RULE = (
    np.array([[_TET_A, _TET_B, _TET_B, _TET_B], [_TET_B, _TET_A, _TET_B, _TET_B],
              [_TET_B, _TET_B, _TET_A, _TET_B], [_TET_B, _TET_B, _TET_B, _TET_A]]),
    np.full(4, 0.25),
)
_G3 = np.sqrt(3 / 5)
SEG_RULE = (
    np.array([[(1 - _G3) / 2, (1 + _G3) / 2], [0.5, 0.5], [(1 + _G3) / 2, (1 - _G3) / 2]]),
    np.array([5 / 18, 8 / 18, 5 / 18]),
)
FACE_RULE = (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]), np.full(3, 1 / 3))


def cell_rule(n):
    return TRI_RULE if n == 2 else TET_RULE


def facet_rule(n):
    return SEG_RULE if n == 2 else FACE_RULE


def cell_quadrature_points(mesh: Mesh):
    lam, w = cell_rule(mesh.dim)
    pts = np.einsum("qk,ckn->cqn", lam, mesh.vertices[mesh.cells])
    return pts, w[None, :] * mesh.volumes[:, None]


def facet_quadrature_points(mesh: Mesh):
    lam, w = facet_rule(mesh.dim)
    pts = np.einsum("qk,fkn->fqn", lam, mesh.vertices[mesh.facets])
    return pts, w[None, :] * mesh.facet_measures[:, None]


def lp_norm_p1(u, mesh: Mesh, p=2.0):
    """``L^p`` norm of a P1 vector field (degree-4 quadrature)."""
    lam, w = cell_rule(mesh.dim)
    vals = np.einsum("qk,ck...->cq...", lam, np.asarray(u, dtype=float)[mesh.cells])
    mag = np.abs(vals) if vals.ndim == 2 else np.linalg.norm(vals, axis=-1)
    return float(np.sum(w[None] * mesh.volumes[:, None] * mag**p) ** (1.0 / p))


def lp_norm_p0(f, mesh: Mesh, p=2.0):
    f = np.asarray(f, dtype=float)
    mag = np.abs(f) if f.ndim == 1 else np.sqrt(np.sum(f.reshape(len(f), -1) ** 2, axis=1))
    return float(np.sum(mesh.volumes * mag**p) ** (1.0 / p))


def bd_exponent(n):
    return n / (n - 1)


# ---------------------------------------------------------------------------
# measures and triplets


@dataclass(eq=False)
class PlasticMeasure:
    """P0 trace-free density on cells plus trace-free amplitudes on facets."""

    mesh: Mesh
    ac: np.ndarray
    singular: np.ndarray | None = None

    def __post_init__(self):
        n = self.mesh.dim
        self.ac = np.asarray(self.ac, dtype=float).reshape(self.mesh.nc, n, n)
        if self.singular is None:
            self.singular = np.zeros((self.mesh.nf, n, n))
        self.singular = np.asarray(self.singular, dtype=float).reshape(self.mesh.nf, n, n)

    def check(self, rtol=1e-10):
        for name, arr in (("ac", self.ac), ("singular", self.singular)):
            bad = np.abs(trace(arr)) > rtol * np.maximum(norm(arr), 1e-300)
            bad &= norm(arr) > 0
            if bad.any():
                raise ValueError(f"{name} part of the plastic strain is not trace-free")
        if np.any(norm(self.singular[~self.mesh.gamma0]) > 0):
            raise ValueError("singular part charged on a free boundary facet")

    @classmethod
    def zeros(cls, mesh: Mesh):
        return cls(mesh, np.zeros((mesh.nc, mesh.dim, mesh.dim)))

    def total_variation(self):
        return float(np.sum(norm(self.ac) * self.mesh.volumes) + np.sum(norm(self.singular) * self.mesh.facet_measures))

    def h_energy(self, K):
        """``int H(dp/d|p|) d|p|`` computed exactly for the piecewise-constant measure."""
        return float(np.sum(K.support(self.ac) * self.mesh.volumes)
                     + np.sum(K.support(self.singular) * self.mesh.facet_measures))

    def __add__(self, other):
        return PlasticMeasure(self.mesh, self.ac + other.ac, self.singular + other.singular)

    def __sub__(self, other):
        return PlasticMeasure(self.mesh, self.ac - other.ac, self.singular - other.singular)

    def scaled(self, c):
        return PlasticMeasure(self.mesh, c * self.ac, c * self.singular)


def total_variation(p: PlasticMeasure):
    return p.total_variation()


def boundary_amplitude(mesh: Mesh, w, u):
    """``(w - u) (.) nu`` from facet-averaged traces on Dirichlet facets, zero elsewhere."""
    jump = facet_average(np.asarray(w) - np.asarray(u), mesh)
    amp = sym_outer(jump, mesh.normals)
    amp[~mesh.gamma0] = 0.0
    return amp


def tangential_from_amplitude(amp, normals):
    """Recover the tangential vector ``a`` from ``a (.) nu`` with ``a . nu = 0``."""
    return 2.0 * np.einsum("fij,fj->fi", amp, normals)


@dataclass(eq=False)
class Triplet:
    """Discrete ``(u, e, p)`` with boundary datum ``w`` (a P1 field)."""

    mesh: Mesh
    u: np.ndarray
    e: np.ndarray
    p: PlasticMeasure
    w: np.ndarray
    regular: bool = False

    @classmethod
    def from_displacement(cls, mesh, u, e, w, regular=False):
        """Plastic part from kinematics; singular part from the boundary jump."""
        eu = sym_gradient(u, mesh)
        ac = deviator(eu - e)
        sing = np.zeros((mesh.nf, mesh.dim, mesh.dim)) if regular else boundary_amplitude(mesh, w, u)
        return cls(mesh, np.asarray(u, float), np.asarray(e, float), PlasticMeasure(mesh, ac, sing), np.asarray(w, float), regular)

    def kinematic_residual(self):
        eu = sym_gradient(self.u, self.mesh)
        return float(np.abs(eu - self.e - self.p.ac).max(initial=0.0))

    def normal_trace_residual(self):
        jump = facet_average(self.w - self.u, self.mesh)
        res = np.einsum("fi,fi->f", jump, self.mesh.normals)[self.mesh.gamma0]
        return float(np.abs(res).max(initial=0.0))

    def bc_residual(self):
        v = self.mesh.gamma0_vertices
        return float(np.abs(self.u[v] - self.w[v]).max(initial=0.0))

    def check(self, tol=1e-10):
        scale = 1.0 + float(np.abs(sym_gradient(self.u, self.mesh)).max(initial=0.0))
        if self.kinematic_residual() > tol * scale:
            raise ValueError("kinematic admissibility Eu = e + p violated")
        self.p.check()
        if self.regular:
            if self.bc_residual() > tol * (1 + np.abs(self.w).max(initial=0.0)):
                raise ValueError("regular triplet does not attain the boundary datum")
            if np.any(norm(self.p.singular) > 0):
                raise ValueError("regular triplet carries a boundary singular part")
        else:
            if self.normal_trace_residual() > tol * (1 + np.abs(self.w).max(initial=0.0)):
                raise ValueError("normal trace of the boundary jump is not zero")
            amp = boundary_amplitude(self.mesh, self.w, self.u)
            if np.abs(amp - self.p.singular).max(initial=0.0) > tol * (1 + np.abs(amp).max(initial=0.0)):
                raise ValueError("singular part differs from (w - u) (.) nu")
        return self


# ---------------------------------------------------------------------------
# weak* and strict convergence diagnostics


class TestFamily:
    """Smooth tensor test fields vanishing on the free part of the boundary.

    Fields are products of per-axis Legendre polynomials of degree <= 2 on
    the bounding box with fixed unit symmetric tensors, times a C1 cutoff
    that vanishes on the non-Dirichlet facets.
    """

    __test__ = False  # not a pytest class

    def __init__(self, mesh: Mesh, n_fields=50, cutoff_width=None, seed=20240601):
        self.mesh = mesh
        n = mesh.dim
        lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
        self._lo, self._hi = lo, hi
        width = cutoff_width if cutoff_width is not None else 0.1 * float(np.max(hi - lo))
        self._free = np.nonzero(~mesh.gamma0)[0]
        self._width = width
        rng = np.random.default_rng(seed)
        t = rng.standard_normal((n_fields, n, n))
        t = 0.5 * (t + np.swapaxes(t, 1, 2))
        self.tensors = t / norm(t)[:, None, None]
        degs = np.stack(np.meshgrid(*[np.arange(3)] * n, indexing="ij"), -1).reshape(-1, n)
        self.degrees = degs[np.arange(n_fields) % len(degs)]
        cp, cw = cell_quadrature_points(mesh)
        fp, fw = facet_quadrature_points(mesh)
        vals_c = self._scalar(cp.reshape(-1, n)).reshape(n_fields, *cp.shape[:2])
        vals_f = self._scalar(fp.reshape(-1, n)).reshape(n_fields, *fp.shape[:2])
        self.cell_int = np.einsum("icq,cq->ic", vals_c, cw)
        self.facet_int = np.einsum("ifq,fq->if", vals_f, fw)

    def _scalar(self, x):
        y = 2 * (x - self._lo) / np.maximum(self._hi - self._lo, 1e-300) - 1
        leg = np.stack([np.ones_like(y), y, 1.5 * y**2 - 0.5], axis=0)  # (3, P, n)
        vals = np.ones((len(self.degrees), len(x)))
        for ax in range(x.shape[1]):
            vals *= leg[self.degrees[:, ax], :, ax]
        if len(self._free):
            t = np.minimum(1.0, self.mesh.facet_distance(x, self._free) / self._width)
            vals *= t * t * (3 - 2 * t)
        return vals

    def pairings(self, p: PlasticMeasure):
        """``<p, phi_i>`` for every test field."""
        a = np.einsum("ic,cjk,ijk->i", self.cell_int, p.ac, self.tensors)
        b = np.einsum("if,fjk,ijk->i", self.facet_int, p.singular, self.tensors)
        return a + b


def weakstar_gap(p_seq, p: PlasticMeasure, tests: TestFamily | None = None):
    """``max_i |<p_k - p, phi_i>|`` for the last element of ``p_seq``."""
    if tests is None:
        tests = TestFamily(p.mesh)
    last = p_seq[-1] if isinstance(p_seq, (list, tuple)) else p_seq
    return float(np.abs(tests.pairings(last) - tests.pairings(p)).max())


def strict_gap(p_seq, p: PlasticMeasure, tests: TestFamily | None = None):
    last = p_seq[-1] if isinstance(p_seq, (list, tuple)) else p_seq
    return weakstar_gap(last, p, tests) + abs(last.total_variation() - p.total_variation())


# ---------------------------------------------------------------------------
# snapshots


def snapshot(triplet: Triplet) -> dict:
    return {
        "mesh_checksum": triplet.mesh.checksum(),
        "dim": triplet.mesh.dim,
        "regular": bool(triplet.regular),
        "u": triplet.u.tolist(),
        "w": triplet.w.tolist(),
        "e": triplet.e.tolist(),
        "p_ac": triplet.p.ac.tolist(),
        "p_singular": triplet.p.singular.tolist(),
    }


def write_snapshot(triplet: Triplet, path):
    with open(path, "w") as fh:
        json.dump(snapshot(triplet), fh)


def read_snapshot(path, mesh: Mesh) -> Triplet:
    with open(path) as fh:
        data = json.load(fh)
    if data["mesh_checksum"] != mesh.checksum():
        raise ValueError("snapshot was written for a different mesh")
    p = PlasticMeasure(mesh, np.array(data["p_ac"]), np.array(data["p_singular"]))
    return Triplet(mesh, np.array(data["u"]), np.array(data["e"]), p, np.array(data["w"]), data["regular"])
