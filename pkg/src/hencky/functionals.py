"""Classical and relaxed Hencky energies on discrete triplets."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import (PlasticMeasure, Triplet, boundary_amplitude, evaluate_p1, facet_average,
                     sym_gradient)
from .mesh import Mesh
from .tensor_core import ElasticModuli, ReducedDensity, YieldSet, deviator, norm, trace

# ---------------------------------------------------------------------------
# boundary data


@dataclass(frozen=True)
class Datum:
    """Closed-form boundary displacement ``w``.

    Families: ``zero``; ``affine`` (``w = A x + b``); ``shear``
    (``w = (gamma x_2, 0, ...)``); ``bump`` (``w = a (1 - |x-c|^2/rho^2)^3``
    inside the ball, zero outside); ``field`` (a P1 field on another mesh,
    params ``mesh`` and ``values``; used to carry a coarse datum to a
    refined mesh without changing it).
    """

    family: str = "zero"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[1]
        fam = self.family
        if fam == "zero":
            return np.zeros_like(x)
        if fam == "affine":
            a = np.asarray(self.params.get("A", np.zeros((n, n))), dtype=float).reshape(n, n)
            b = np.asarray(self.params.get("b", np.zeros(n)), dtype=float).reshape(n)
            return x @ a.T + b
        if fam == "shear":
            out = np.zeros_like(x)
            out[:, 0] = float(self.params["gamma"]) * x[:, 1]
            return out
        if fam == "bump":
            amp = np.asarray(self.params["amplitude"], dtype=float).reshape(n)
            c = np.asarray(self.params["center"], dtype=float).reshape(n)
            rho = float(self.params["radius"])
            t = np.sum((x - c) ** 2, axis=1) / rho**2
            return np.where(t < 1, (1 - t) ** 3, 0.0)[:, None] * amp
        if fam == "field":
            return evaluate_p1(self.params["values"], self.params["mesh"], x, outside=np.nan)
        raise ValueError(f"unknown datum family {fam!r}")

    def gradient_matrix(self, n):
        """Constant gradient for affine-type families (``None`` otherwise)."""
        if self.family == "zero":
            return np.zeros((n, n))
        if self.family == "affine":
            return np.asarray(self.params.get("A", np.zeros((n, n))), dtype=float).reshape(n, n)
        if self.family == "shear":
            a = np.zeros((n, n))
            a[0, 1] = float(self.params["gamma"])
            return a
        return None


@dataclass(eq=False)
class Scenario:
    mesh: Mesh
    moduli: ElasticModuli
    yield_set: YieldSet
    datum: Datum = field(default_factory=Datum)

    def __post_init__(self):
        if not np.any(self.mesh.gamma0):
            raise ValueError("the Dirichlet boundary must be nonempty")

    @property
    def density(self):
        return ReducedDensity(self.moduli, self.yield_set)

    @property
    def w(self):
        """Datum interpolated at the vertices (the P1 field used throughout)."""
        return self.datum(self.mesh.vertices)

    def with_mesh(self, mesh: Mesh):
        return Scenario(mesh, self.moduli, self.yield_set, self.datum)


# ---------------------------------------------------------------------------
# energies


@dataclass
class EnergyBreakdown:
    elastic: float = 0.0
    bulk: float = 0.0
    boundary: float = 0.0
    feasible: bool = True

    @property
    def total(self):
        if not self.feasible:
            return math.inf
        return self.elastic + self.bulk + self.boundary

    def to_dict(self):
        d = asdict(self)
        d["total"] = self.total
        return d

    @classmethod
    def infeasible(cls):
        return cls(math.nan, math.nan, math.nan, feasible=False)


def _boundary_energy(s: Scenario, u):
    mesh = s.mesh
    amp = boundary_amplitude(mesh, s.w, u)[mesh.gamma0]
    return float(np.sum(s.yield_set.support(amp) * mesh.facet_measures[mesh.gamma0]))


def eval_F(s: Scenario, u, e, tol=1e-10) -> EnergyBreakdown:
    """Classical energy; infeasible unless ``u = w`` on the Dirichlet vertices and ``div u = tr e``."""
    mesh = s.mesh
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    w = s.w
    v0 = mesh.gamma0_vertices
    if np.abs(u[v0] - w[v0]).max(initial=0.0) > tol * (1 + np.abs(w).max(initial=0.0)):
        return EnergyBreakdown.infeasible()
    eu = sym_gradient(u, mesh)
    p = eu - e
    if np.any(np.abs(trace(p)) > tol * (1 + norm(eu))):
        return EnergyBreakdown.infeasible()
    elastic = float(np.sum(s.moduli.energy(e) * mesh.volumes))
    bulk = float(np.sum(s.yield_set.support(deviator(p)) * mesh.volumes))
    return EnergyBreakdown(elastic, bulk, 0.0)


def eval_F_triplet(s: Scenario, t: Triplet) -> EnergyBreakdown:
    if not t.regular:
        return EnergyBreakdown.infeasible()
    return eval_F(s, t.u, t.e)


def eval_G(s: Scenario, t: Triplet) -> EnergyBreakdown:
    """Relaxed energy: elastic + H of the density + H of the facet atoms."""
    mesh = s.mesh
    t.p.check()
    if t.normal_trace_residual() > 1e-10 * (1 + np.abs(s.w).max(initial=0.0)):
        raise ValueError("boundary jump has a normal component on the Dirichlet boundary")
    elastic = float(np.sum(s.moduli.energy(t.e) * mesh.volumes))
    bulk = float(np.sum(s.yield_set.support(t.p.ac) * mesh.volumes))
    return EnergyBreakdown(elastic, bulk, _boundary_energy(s, t.u))


def eval_G_reduced(s: Scenario, u):
    """Relaxed energy with the per-cell split chosen optimally.

    Returns ``(EnergyBreakdown, Triplet)``; the triplet is the recovered
    optimal split with its boundary singular part.
    """
    mesh = s.mesh
    u = np.asarray(u, dtype=float)
    eu = sym_gradient(u, mesh)
    e, p = s.density.split(eu)
    elastic = float(np.sum(s.moduli.energy(e) * mesh.volumes))
    bulk = float(np.sum(s.yield_set.support(p) * mesh.volumes))
    sing = boundary_amplitude(mesh, s.w, u)
    jump = facet_average(s.w - u, mesh)
    if np.abs(np.einsum("fi,fi->f", jump, mesh.normals)[mesh.gamma0]).max(initial=0.0) > 1e-9 * (1 + np.abs(s.w).max(initial=0.0)):
        raise ValueError("normal trace constraint violated on the Dirichlet boundary")
    t = Triplet(mesh, u, e, PlasticMeasure(mesh, p, sing), s.w, regular=False)
    return EnergyBreakdown(elastic, bulk, _boundary_energy(s, u)), t


def h_energy(p: PlasticMeasure, K: YieldSet):
    return p.h_energy(K)
