"""Discrete right inverse of the divergence with zero boundary values.

Velocity and pressure are both P1. The saddle system

    [ A   B^T  ] [v]   [0]
    [ B  -d C  ] [q] = [g]

uses the vector Laplacian ``A`` on interior velocity DOFs, the P1-tested
divergence ``B`` and the Brezzi-Pitkaranta pressure stabilisation
``C = sum_T h_T^2 int_T grad q . grad r``. The stabilised solve preconditions a
conjugate-gradient iteration on the unstabilised pressure Schur
complement, so ``B v`` matches the right-hand side up to round-off once the components that no velocity can
produce (constants and the spurious P1-P1 pressure modes, i.e. the kernel
of ``B^T``) have been filtered out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .fields import bd_exponent, lp_norm_p0, lp_norm_p1
from .mesh import Mesh


class IncompatibleRHS(ValueError):
    """Right-hand side without zero mean."""


class SingularSaddleError(RuntimeError):
    pass


def mean_project(psi, mesh: Mesh):
    """``psi - (int psi)/|Omega|`` for a per-cell field, mean taken with a compensated sum."""
    psi = np.asarray(psi, dtype=float)
    vol = mesh.volumes
    mean = math.fsum(psi * vol) / math.fsum(vol)
    return psi - mean


@dataclass(eq=False)
class DivProblem:
    mesh: Mesh
    psi: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float).reshape(self.mesh.nc)
        self.check()

    def check(self):
        vol = self.mesh.volumes
        total = math.fsum(self.psi * vol)
        scale = float(np.abs(self.psi).max(initial=0.0)) * float(vol.sum())
        if abs(total) > 1e-12 * scale:
            raise IncompatibleRHS(f"right-hand side has nonzero integral {total:.3e}")


@dataclass
class DivSolution:
    v: np.ndarray
    ratio: float
    residual: float          # |B v - g_filtered| / |g|
    filtered: float          # |g - g_filtered| / |g|
    iterations: int

    def __iter__(self):
        return iter((self.v, self.ratio))


def _assemble(mesh: Mesh):
    n = mesh.dim
    g = mesh.grad_basis
    vol = mesh.volumes
    nloc = n + 1
    cells = mesh.cells
    ii = np.repeat(cells, nloc, axis=1).ravel()
    jj = np.tile(cells, (1, nloc)).ravel()
    lap = np.einsum("tai,tbi,t->tab", g, g, vol).ravel()
    h2 = mesh.h**2
    stiff = sp.csr_matrix((lap, (ii, jj)), shape=(mesh.nv, mesh.nv))
    stab = sp.csr_matrix(((np.einsum("tai,tbi,t->tab", g, g, vol * h2)).ravel(), (ii, jj)),
                         shape=(mesh.nv, mesh.nv))
    # B[j, a*n + i] = int phi_j d_i phi_a
    bv = np.einsum("tai,t->tai", g, vol / nloc)  # independent of the test vertex
    rows = np.repeat(cells[:, :, None, None], nloc, axis=2)
    rows = np.broadcast_to(rows, (mesh.nc, nloc, nloc, n))
    cols = cells[:, None, :, None] * n + np.arange(n)
    cols = np.broadcast_to(cols, (mesh.nc, nloc, nloc, n))
    vals = np.broadcast_to(bv[:, None], (mesh.nc, nloc, nloc, n))
    div = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.nv, mesh.nv * n))
    return stiff, stab, div


class DivSolver:
    """Factorised operator for repeated solves on one mesh."""

    def __init__(self, mesh: Mesh, delta=1e-3, tol=1e-10, max_iter=2000):
        self.mesh = mesh
        self.delta, self.tol, self.max_iter = delta, tol, max_iter
        n = mesh.dim
        stiff, stab, div = _assemble(mesh)
        interior = np.setdiff1d(np.arange(mesh.nv), mesh.boundary_vertices)
        self.dofs = (interior[:, None] * n + np.arange(n)).ravel()
        self.A = sp.kron(stiff[interior][:, interior], sp.eye(n)).tocsr()
        # kron ordering gives (vertex, component) blocks matching self.dofs
        self.B = div[:, self.dofs].tocsr()
        self.C = stab
        nu = len(self.dofs)
        self.nu = nu
        self.kernel = self._pressure_kernel()
        # pin pressure DOF 0 in the stabilised system; constants are in the kernel anyway
        keep = np.arange(1, mesh.nv)
        self._keep = keep
        m = sp.bmat([[self.A, self.B[keep].T], [self.B[keep], -delta * self.C[keep][:, keep]]]).tocsc()
        try:
            self._lu = splu(m)
            self._lu_a = splu(self.A.tocsc())
        except RuntimeError as exc:
            raise SingularSaddleError(str(exc)) from exc

    def _pressure_kernel(self):
        """Orthonormal basis of ``ker B^T`` (pressures no velocity can see)."""
        bbt = (self.B @ self.B.T).tocsc()
        nv = bbt.shape[0]
        if self.nu == 0:
            return np.eye(nv)
        scale = float(abs(bbt).sum(axis=1).max())
        k = min(16, nv - 1)
        while True:
            if k >= nv - 1:
                w, z = np.linalg.eigh(bbt.toarray())
            else:
                w, z = eigsh(bbt, k=k, sigma=-1e-6 * scale, which="LM")
            null = w < 1e-9 * scale
            if null.sum() < len(w) or k >= nv - 1:
                break
            k = min(2 * k, nv - 1)
        q, _ = np.linalg.qr(z[:, null])
        return q

    def filter(self, g):
        return g - self.kernel @ (self.kernel.T @ g)

    def rhs(self, psi):
        """P1-tested right-hand side ``g_j = int psi phi_j``."""
        mesh = self.mesh
        loc = np.asarray(psi, float) * mesh.volumes / (mesh.dim + 1)
        return np.bincount(mesh.cells.ravel(), np.repeat(loc, mesh.dim + 1), minlength=mesh.nv)

    def _schur(self, q):
        """``S q = B A^-1 B^T q`` on the pinned pressure space."""
        full = np.zeros(self.mesh.nv)
        full[self._keep] = q
        return (self.B @ self._lu_a.solve(self.B.T @ full))[self._keep]

    def _precond(self, r):
        """``(S + d C)^-1 r`` from the stabilised factorisation."""
        rhs = np.concatenate([np.zeros(self.nu), -r])
        return self._lu.solve(rhs)[self.nu:]

    def solve(self, psi) -> DivSolution:
        mesh = self.mesh
        n = mesh.dim
        prob = DivProblem(mesh, psi)
        g = self.rhs(prob.psi)
        gn = float(np.linalg.norm(g))
        v = np.zeros((mesh.nv, n))
        if gn == 0.0:
            return DivSolution(v, 0.0, 0.0, 0.0, 0)
        gf = self.filter(g)
        keep = self._keep
        # preconditioned CG on S q = -g_f; v = -A^-1 B^T q
        b = -gf[keep]
        q = np.zeros(len(keep))
        r = b.copy()
        z = self._precond(r)
        d = z.copy()
        rz = r @ z
        res = float(np.linalg.norm(r)) / gn
        it = 0
        while res > self.tol:
            if it >= self.max_iter:
                raise SingularSaddleError(f"divergence residual stalled at {res:.2e}")
            sd = self._schur(d)
            alpha = rz / (d @ sd)
            q += alpha * d
            r -= alpha * sd
            it += 1
            if it % 20 == 0:
                r = b - self._schur(q)  # guard against drift
            res = float(np.linalg.norm(r)) / gn
            z = self._precond(r)
            rz_new = r @ z
            d = z + (rz_new / rz) * d
            rz = rz_new
        full = np.zeros(mesh.nv)
        full[keep] = q
        x = -self._lu_a.solve(self.B.T @ full)
        res = float(np.linalg.norm(gf - self.B @ x)) / gn
        v.reshape(-1)[self.dofs] = x
        ratio = stability_ratio(v, prob.psi, mesh)
        return DivSolution(v, ratio, res, float(np.linalg.norm(g - gf)) / gn, it)


def w1p_norm(v, mesh: Mesh, p):
    """``(|v|_p^p + |grad v|_p^p)^(1/p)`` for a P1 vector field (Frobenius pointwise norms)."""
    grad = np.einsum("tai,taj->tij", v[mesh.cells], mesh.grad_basis)
    gnorm = np.sqrt(np.einsum("tij,tij->t", grad, grad))
    a = lp_norm_p1(v, mesh, p)
    b = lp_norm_p0(gnorm, mesh, p)
    return float((a**p + b**p) ** (1 / p))


def stability_ratio(v, psi, mesh: Mesh):
    p = bd_exponent(mesh.dim)
    den = lp_norm_p0(np.abs(psi), mesh, p)
    return 0.0 if den == 0 else w1p_norm(v, mesh, p) / den


_CACHE: dict = {}


def solver_for(mesh: Mesh) -> DivSolver:
    key = mesh.checksum()
    if key not in _CACHE:
        if len(_CACHE) >= 4:
            _CACHE.pop(next(iter(_CACHE)))
        _CACHE[key] = DivSolver(mesh)
    return _CACHE[key]


def solve_div(prob: DivProblem):
    """Zero-boundary ``v`` with P1-tested divergence ``psi``; returns ``(v, ratio)``."""
    sol = solver_for(prob.mesh).solve(prob.psi)
    return sol.v, sol.ratio
