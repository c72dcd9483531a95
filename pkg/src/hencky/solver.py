"""Primal-dual minimisation of the discrete relaxed energy.

The unknown is ``u = w + P z`` with ``P`` an orthonormal basis of the
admissible nodal directions. In ``hard`` mode every Dirichlet vertex is
fixed; in ``relaxed`` mode a Dirichlet vertex may slide tangentially to
all Dirichlet facets touching it, which makes the facet-averaged normal
jump vanish exactly. The energy is

    J(z) = sum_T |T| f(E u_T) + sum_F |F| H((w - u)_F (.) nu_F)

and is written as ``g(A z + c)`` with cell rows scaled by ``sqrt|T|``
and facet rows by ``sqrt|F|`` so that the Euclidean pairing is the L2
pairing. Stopping uses a certified duality gap: the current dual iterate
is projected onto ``ker A^T`` and rescaled into the yield set, which
gives a rigorous lower bound on ``min J``.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from .fields import PlasticMeasure, Triplet, sym_gradient
from .functionals import EnergyBreakdown, Scenario, eval_G_reduced
from .mesh import Mesh
from .tensor_core import (ConvergenceError, _fista, coords, deviator, dev_basis, from_coords,
                          spherical, sym_basis, trace)


@dataclass
class SolveConfig:
    mode: str = "relaxed"          # "relaxed" or "hard"
    method: str = "pdhg"           # "pdhg" or "admm"
    tol: float = 1e-8              # relative duality gap
    max_iter: int = 200_000
    check_every: int = 25
    omega: float = 3.0             # dual/primal step balance
    precondition: bool = True      # block-diagonal step sizes
    rho: float = 1.0               # ADMM penalty
    time_limit: float | None = None
    opnorm_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("relaxed", "hard"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.method not in ("pdhg", "admm"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class SolveReport:
    energy: EnergyBreakdown
    lower_bound: float
    gap: float
    rel_gap: float
    iterations: int
    converged: bool
    mode: str
    method: str
    opnorm: float
    elapsed: float
    mesh_checksum: str
    n_unknowns: int
    history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d["energy"] = self.energy.to_dict()
        d.pop("history")
        d["history_length"] = len(self.history)
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def write_trace(self, path):
        write_trace_csv(self.history, path)


TRACE_COLUMNS = ("iteration", "primal", "lower_bound", "gap", "rel_gap", "elapsed")


def write_trace_csv(history, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        for row in history:
            wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# ---------------------------------------------------------------------------
# discrete operators


def strain_matrix(mesh: Mesh):
    """Sparse ``u (nv*n) -> Eu`` in orthonormal symmetric coordinates ``(nc*m)``."""
    n = mesh.dim
    sb = sym_basis(n)
    m = len(sb)
    coef = np.einsum("kil,tal->taik", sb, mesh.grad_basis)  # (nc, n+1, n, m)
    rows = np.arange(mesh.nc)[:, None, None, None] * m + np.arange(m)[None, None, None, :]
    cols = mesh.cells[:, :, None, None] * n + np.arange(n)[None, None, :, None]
    rows, cols = np.broadcast_arrays(rows, cols)
    return sp.csr_matrix((coef.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.nc * m, mesh.nv * n))


def facet_matrix(mesh: Mesh, facet_ids):
    """Sparse ``u -> -(u_F (.) nu_F)`` in trace-free coordinates for the given facets."""
    n = mesh.dim
    db = dev_basis(n)
    d = len(db)
    nu = mesh.normals[facet_ids]
    coef = -np.einsum("kil,fl->fik", db, nu) / n  # per facet vertex, component i, coord k
    nf = len(facet_ids)
    coef = np.broadcast_to(coef[:, None], (nf, n, n, d))
    rows = np.arange(nf)[:, None, None, None] * d + np.arange(d)[None, None, None, :]
    cols = mesh.facets[facet_ids][:, :, None, None] * n + np.arange(n)[None, None, :, None]
    rows, cols = np.broadcast_arrays(rows, cols)
    return sp.csr_matrix((np.ascontiguousarray(coef).ravel(), (rows.ravel(), cols.ravel())),
                         shape=(nf * d, mesh.nv * n))


def free_basis(mesh: Mesh, mode="relaxed", tol=1e-8):
    """Orthonormal basis ``P`` of admissible nodal displacement directions."""
    n = mesh.dim
    blocks = {}
    if mode == "hard":
        for v in mesh.gamma0_vertices:
            blocks[int(v)] = np.zeros((n, 0))
    else:
        normals = {}
        for f in np.nonzero(mesh.gamma0)[0]:
            for v in mesh.facets[f]:
                normals.setdefault(int(v), []).append(mesh.normals[f])
        for v, nus in normals.items():
            _, sv, vt = np.linalg.svd(np.array(nus))
            rank = int(np.sum(sv > tol))
            blocks[v] = vt[rank:].T
    rows, cols, vals = [], [], []
    col = 0
    for v in range(mesh.nv):
        b = blocks.get(v, np.eye(n))
        k = b.shape[1]
        for j in range(k):
            rows.extend(v * n + np.arange(n))
            cols.extend([col + j] * n)
            vals.extend(b[:, j])
        col += k
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.nv * n, col))


def power_norm(a, iterations=50, x0=None, seed=0):
    """Largest singular value of a sparse matrix by power iteration on ``A^T A``.

    A zero (or numerically null) start vector is replaced by a seeded
    random one.
    """
    rng = np.random.default_rng(seed)
    ncol = a.shape[1]
    if ncol == 0 or a.nnz == 0:
        return 0.0
    x = rng.standard_normal(ncol) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    lam = 0.0
    for _ in range(iterations):
        y = a.T @ (a @ x)
        ny = np.linalg.norm(y)
        if ny <= 1e-14 * max(np.linalg.norm(x), 1e-300):
            x = rng.standard_normal(ncol)
            continue
        lam = ny / np.linalg.norm(x)
        x = y / ny
    return float(np.sqrt(lam))


def estimate_opnorm(mesh: Mesh, iterations=50, start=None, seed=0):
    """Norm of the nodal symmetric-gradient map ``u -> (Eu_T)_T`` (Euclidean on both sides)."""
    if start is not None and not np.any(np.asarray(start)):
        start = None
    return power_norm(strain_matrix(mesh), iterations, start, seed)


# ---------------------------------------------------------------------------
# the discrete problem


class _Problem:
    def __init__(self, s: Scenario, mode):
        mesh = s.mesh
        n = mesh.dim
        self.s, self.mesh, self.n = s, mesh, n
        self.sb, self.db = sym_basis(n), dev_basis(n)
        self.m, self.d = len(self.sb), len(self.db)
        self.K = s.yield_set
        self.moduli = s.moduli
        self.f = s.density
        self.P = free_basis(mesh, mode).tocsc()
        sq = np.sqrt(mesh.volumes)
        self.sqv = sq
        a1 = sp.diags(np.repeat(sq, self.m)) @ strain_matrix(mesh) @ self.P
        self.fids = np.nonzero(mesh.gamma0)[0] if mode == "relaxed" else np.zeros(0, int)
        self.sqa = np.sqrt(mesh.facet_measures[self.fids])
        if len(self.fids):
            a2 = sp.diags(np.repeat(self.sqa, self.d)) @ facet_matrix(mesh, self.fids) @ self.P
            self.A = sp.vstack([a1, a2]).tocsr()
        else:
            self.A = a1.tocsr()
        self.n1 = mesh.nc * self.m
        ew = coords(sym_gradient(s.w, mesh), self.sb)
        self.c = np.zeros(self.A.shape[0])
        self.c[: self.n1] = (ew * sq[:, None]).ravel()
        self.nz = self.P.shape[1]
        self._lu = None
        if not self.moduli.isotropic:
            g = self.moduli.gram(n)
            self.ginv = np.linalg.inv(g)

    # --- primal ---------------------------------------------------------
    def u_of(self, z):
        return self.s.w + (self.P @ z).reshape(-1, self.n)

    def z_of(self, u):
        return self.P.T @ (np.asarray(u, float) - self.s.w).ravel()

    def primal(self, z):
        y = self.A @ z + self.c
        cell = from_coords(y[: self.n1].reshape(-1, self.m) / self.sqv[:, None], self.sb)
        val = float(np.sum(self.f(cell) * self.mesh.volumes))
        if len(self.fids):
            fac = from_coords(y[self.n1:].reshape(-1, self.d), self.db)
            val += float(np.sum(self.K.support(fac) * self.sqa))
        return val

    # --- dual -----------------------------------------------------------
    def _prox_fstar(self, x, s):
        """``prox_{s f*}`` on stresses ``x`` of shape ``(N, n, n)``."""
        n = self.n
        s = np.broadcast_to(np.asarray(s, dtype=float), x.shape[:1])
        if self.moduli.isotropic:
            mu, kappa = self.moduli.mu, self.moduli.kappa
            tr = trace(x) / (1 + s / (kappa * n))
            dev = self.K.project(deviator(x) / (1 + s / (2 * mu))[:, None, None])
            return dev + (tr / n)[:, None, None] * np.eye(n)
        xc = coords(x, self.sb)
        lip = 1.0 / s.min() + 0.5 * np.linalg.eigvalsh(self.ginv).max()
        ginv, K, sb = self.ginv, self.K, self.sb

        def grad(y):
            return (y - xc) / s[:, None] + 0.5 * y @ ginv

        def prox(v, t):
            mat = from_coords(v, sb)
            return coords(spherical(mat) + K.project(deviator(mat)), sb)

        return from_coords(_fista(grad, prox, lip, xc, 1e-12, 100_000), sb)

    def prox_dual(self, y, s):
        out = np.empty_like(y)
        cell = from_coords(y[: self.n1].reshape(-1, self.m) / self.sqv[:, None], self.sb)
        if np.ndim(s):
            s = s[: self.n1 : self.m]
        out[: self.n1] = (coords(self._prox_fstar(cell, s), self.sb) * self.sqv[:, None]).ravel()
        if len(self.fids):
            fac = from_coords(y[self.n1:].reshape(-1, self.d) / self.sqa[:, None], self.db)
            out[self.n1:] = (coords(self.K.project(fac), self.db) * self.sqa[:, None]).ravel()
        return out

    def lower_bound(self, y):
        """Certified lower bound from any dual vector."""
        if self.nz:
            if self._lu is None:
                self._lu = splu((self.A.T @ self.A).tocsc())
            y = y - self.A @ self._lu.solve(self.A.T @ y)
        cell = from_coords(y[: self.n1].reshape(-1, self.m) / self.sqv[:, None], self.sb)
        gauge = float(np.max(self.K.gauge(deviator(cell)), initial=0.0))
        if len(self.fids):
            fac = from_coords(y[self.n1:].reshape(-1, self.d) / self.sqa[:, None], self.db)
            gauge = max(gauge, float(np.max(self.K.gauge(deviator(fac)), initial=0.0)))
        tmax = 1.0 / gauge if gauge > 1 else 1.0
        if not np.isfinite(tmax):
            tmax = 0.0
        a = float(y[: self.n1] @ self.c[: self.n1])
        b = float(np.sum(self.moduli.conjugate(cell) * self.mesh.volumes))
        if b > 0:
            th = min(max(a / (2 * b), 0.0), tmax)
        else:
            th = tmax if a > 0 else 0.0
        return th * a - th * th * b


# ---------------------------------------------------------------------------
# drivers


def _pdhg(prob: _Problem, cfg: SolveConfig, z, y, monitor):
    A, AT = prob.A, prob.A.T.tocsr()
    L = power_norm(A, cfg.opnorm_iters, seed=cfg.seed) * 1.02
    if cfg.precondition:
        # diagonal steps with row/column absolute sums; the dual step is
        # constant on each cell or facet block so the block prox stays exact
        absA = abs(A)
        col = np.asarray(absA.sum(axis=0)).ravel()
        row = np.asarray(absA.sum(axis=1)).ravel()
        tau = 0.99 / (cfg.omega * np.where(col > 0, col, 1.0))
        nb = np.r_[np.repeat(prob.m, prob.mesh.nc), np.repeat(prob.d, len(prob.fids))]
        starts = np.r_[0, np.cumsum(nb)[:-1]]
        blk = np.maximum.reduceat(row, starts)
        # decoupled blocks (all vertices fixed) admit any step; keep it moderate
        blk = np.where(blk > 0, blk, np.median(blk[blk > 0]))
        sig = 0.99 * cfg.omega / np.repeat(blk, nb)
    else:
        tau = 0.99 / (cfg.omega * L)
        sig = 0.99 * cfg.omega / L
    it = 0
    while True:
        z_new = z - tau * (AT @ y)
        zbar = 2 * z_new - z
        y = prob.prox_dual(y + sig * (A @ zbar + prob.c), sig)
        z = z_new
        it += 1
        if it % cfg.check_every == 0 or it >= cfg.max_iter:
            if monitor(it, z, y):
                return L


def _admm(prob: _Problem, cfg: SolveConfig, z, y, monitor):
    """Scaled ADMM on ``q = A z + c``; the multiplier ``rho * lam`` is the dual."""
    A, AT = prob.A, prob.A.T.tocsr()
    rho = cfg.rho
    L = power_norm(A, cfg.opnorm_iters, seed=cfg.seed)
    ata = (AT @ A).tocsr()
    diag = ata.diagonal()
    pre = sp.diags(np.where(diag > 0, 1.0 / np.maximum(diag, 1e-300), 1.0))
    lam = y / rho
    q = A @ z + prob.c
    it = 0
    while True:
        rhs = AT @ (q - prob.c - lam)
        z, info = cg(ata, rhs, x0=z, rtol=1e-12, atol=0.0, M=pre, maxiter=10 * max(prob.nz, 10))
        if info > 0:
            raise ConvergenceError("CG did not converge in the ADMM displacement step")
        v = A @ z + prob.c + lam
        # q = prox_{g/rho}(v) via Moreau: v - prox_{g*/... } in dual form
        q = v - prob.prox_dual(rho * v, rho) / rho
        lam = v - q
        it += 1
        if it % cfg.check_every == 0 or it >= cfg.max_iter:
            if monitor(it, z, rho * lam):
                return L


def solve(s: Scenario, cfg: SolveConfig | None = None, u0=None, progress=None):
    """Minimise the discrete energy. Returns ``(u, triplet, report)``."""
    cfg = cfg or SolveConfig()
    t0 = time.perf_counter()
    prob = _Problem(s, cfg.mode)
    z = prob.z_of(u0) if u0 is not None else np.zeros(prob.nz)
    y = np.zeros(prob.A.shape[0])
    state = {"best": math.inf, "z": z.copy(), "lb": -math.inf, "it": 0, "conv": False}
    history = []

    def monitor(it, zk, yk):
        jv = prob.primal(zk)
        if jv < state["best"]:
            state["best"], state["z"] = jv, zk.copy()
        state["lb"] = max(state["lb"], prob.lower_bound(yk))
        gap = state["best"] - state["lb"]
        rel = gap / max(1.0, abs(state["best"]))
        el = time.perf_counter() - t0
        history.append((it, state["best"], state["lb"], gap, rel, el))
        state["it"] = it
        if progress is not None:
            progress(history[-1])
        if rel <= cfg.tol:
            state["conv"] = True
            return True
        if it >= cfg.max_iter:
            return True
        return cfg.time_limit is not None and el > cfg.time_limit

    if prob.nz == 0 or prob.A.nnz == 0:
        monitor(0, z, y)
        L = 0.0
    elif cfg.method == "pdhg":
        L = _pdhg(prob, cfg, z, y, monitor)
    else:
        L = _admm(prob, cfg, z, y, monitor)

    u = prob.u_of(state["z"])
    energy, trip = eval_G_reduced(s, u)
    if cfg.mode == "hard":
        trip = Triplet(s.mesh, u, trip.e, PlasticMeasure(s.mesh, trip.p.ac), s.w, regular=True)
    gap = state["best"] - state["lb"]
    report = SolveReport(
        energy=energy,
        lower_bound=state["lb"],
        gap=gap,
        rel_gap=gap / max(1.0, abs(state["best"])),
        iterations=state["it"],
        converged=state["conv"],
        mode=cfg.mode,
        method=cfg.method,
        opnorm=L,
        elapsed=time.perf_counter() - t0,
        mesh_checksum=s.mesh.checksum(),
        n_unknowns=prob.nz,
        history=history,
    )
    return u, trip, report
