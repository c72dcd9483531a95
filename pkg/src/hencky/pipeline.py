"""Discrete recovery sequences: translate, mollify, repair the divergence.

Translation and convolution are evaluated pointwise (the convolution by a
fixed quadrature stencil inside the kernel support) at the vertices and
quadrature points of a uniform refinement of the input mesh, which is
where the recovered regular triplets live. The plastic strain
of every output is defined from the kinematics, ``p = dev(Eu - e)``, and
the trace of ``e`` is set to ``div u``, so ``Eu = e + p`` holds per cell.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bogovskii import DivSolver, mean_project, solver_for
from .fields import (PlasticMeasure, TestFamily, Triplet, bd_exponent, cell_quadrature_points, evaluate_p0,
                     evaluate_p1, facet_quadrature_points, lp_norm_p0, lp_norm_p1, strict_gap, sym_gradient, weakstar_gap)
from .functionals import Datum, Scenario, eval_F, eval_G
from .mesh import Cover, Mesh, MeshError, build_cover
from .tensor_core import coords, deviator, from_coords, norm, sym_basis, trace


MAX_HALVINGS = 40


class BudgetError(RuntimeError):
    """A mollification budget could not be met."""


class ResolutionError(ValueError):
    """The requested scale is not resolved by the mesh."""


class NonSummableSchedule(ValueError):
    pass


@dataclass
class PipelineConfig:
    schedule: tuple = (32, 64, 128, 256, 512)
    eps_rule: str = "fixed"         # "fixed": 1/(4 k k0); "depth": theta * translation depth
    theta: float = 0.45
    levels: int = 2                 # uniform refinements of the input mesh for the outputs
    psi_rule: str = "divergence"    # target divergence: "divergence" (div u_hat) or "trace" (tr e_hat)
    stencil_radius: int = 2         # mollifier quadrature points per kernel radius
    max_fine_vertices: int = 400_000
    budget_scale: float = 1.0       # budgets are budget_scale / k
    strict: bool = False            # raise on budget violations instead of reporting
    weakstar_fields: int = 50

    def __post_init__(self):
        sched = [int(k) for k in self.schedule]
        if not sched or any(b <= a for a, b in zip(sched, sched[1:])) or sched[0] < 1:
            raise ValueError("schedule must be strictly increasing positive integers")
        self.schedule = tuple(sched)
        if not 0 < self.theta < 0.5:
            raise ValueError("theta must lie in (0, 1/2) so the mollified support stays inside")
        if self.eps_rule not in ("depth", "fixed"):
            raise ValueError(f"unknown eps rule {self.eps_rule!r}")
        if self.psi_rule not in ("divergence", "trace"):
            raise ValueError(f"unknown psi rule {self.psi_rule!r}")
        if self.levels < 0:
            raise ValueError("levels must be nonnegative")

    def eps(self, cover: Cover, k):
        depth = cover.translation_depth(k)
        eps = self.theta * depth if self.eps_rule == "depth" else 1.0 / (4 * k * max(cover.k0, 1))
        if not eps < depth / 2:
            raise ValueError(f"mollifier radius {eps:.3g} not below half the translation depth {depth:.3g}")
        return eps


TRACE_COLUMNS = ("k", "err_u", "err_e", "tv_pk", "tv_target", "energy_F", "energy_G", "gap")
EXTRA_COLUMNS = ("eps", "weakstar", "strict", "div_residual", "mean_fix", "bogovskii_ratio",
                 "moll_u", "moll_e", "budget", "budget_ok", "fine_cells")


@dataclass
class RecoveryTrace:
    rows: list = field(default_factory=list)

    def append(self, row: dict):
        for key, val in row.items():
            if isinstance(val, (bool, np.bool_)):
                continue
            if not (math.isfinite(val) and val >= 0):
                raise ValueError(f"trace entry {key}={val} is not finite and nonnegative")
        self.rows.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def write_csv(self, path):
        cols = TRACE_COLUMNS + EXTRA_COLUMNS
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            for r in self.rows:
                wr.writerow([r[c] if c in ("k", "fine_cells", "budget_ok") else repr(float(r[c])) for c in cols])


# ---------------------------------------------------------------------------
# mollification by stencil quadrature


def bump_stencil(eps, n, per_radius=3):
    """Offsets and weights of a C2 bump ``(1 - |y|^2/eps^2)^3`` sampled on a square stencil.

    The sum ``sum_q w_q f(x - y_q)`` is a quadrature of the convolution of
    ``f`` with the normalised bump; the stencil size does not depend on ``eps``.
    """
    hs = eps / per_radius
    ax = np.arange(-per_radius, per_radius + 1) * hs
    y = np.stack(np.meshgrid(*[ax] * n, indexing="ij"), -1).reshape(-1, n)
    s = np.sum(y * y, axis=1) / eps**2
    keep = s < 1
    w = (1 - s[keep]) ** 3
    return y[keep], w / w.sum()


def _translated_sum(cover: Cover, points, shifts, u, e, mesh: Mesh):
    """``sum_j (phi_j f)(x - shift_j)`` for ``f = (u, e-components)``, zero outside the domain.

    The last column carries ``sum_j phi_j(x - shift_j)``.
    """
    n = mesh.dim
    sb = sym_basis(n)
    m = len(sb)
    ec = coords(e, sb)
    out = np.zeros((len(points), n + m + 1))
    for j, patch in enumerate(cover.patches):
        y = points - shifts[j]
        phi = cover.weights(y)[:, j]
        sel = np.nonzero(phi > 0)[0]
        if len(sel) == 0:
            continue
        cell, bary = mesh.locate(y[sel])
        inside = cell >= 0
        sel, cell, bary = sel[inside], cell[inside], bary[inside]
        ph = phi[sel, None]
        out[sel, :n] += ph * np.einsum("pk,pki->pi", bary, u[mesh.cells[cell]])
        out[sel, n:n + m] += ph * ec[cell]
        out[sel, n + m] += phi[sel]
    return out


def mollified_sum(cover: Cover, points, shifts, eps, u, e, mesh: Mesh, per_radius=2):
    """Mollified translated sum at ``points`` and the unmollified values there."""
    y, w = bump_stencil(eps, mesh.dim, per_radius)
    raw = None
    acc = 0.0
    for yq, wq in zip(y, w):
        val = _translated_sum(cover, points - yq, shifts, u, e, mesh)
        acc = acc + wq * val
        if not yq.any():
            raw = val
    return acc, raw


def refine_levels(mesh: Mesh, levels, max_vertices=400_000):
    """``levels`` uniform refinements, refusing meshes beyond ``max_vertices``."""
    fine = mesh
    for _ in range(levels):
        if 4 * fine.nv > max_vertices:
            raise ResolutionError(f"refinement beyond {max_vertices} vertices")
        fine = fine.refine()
    return fine


def transfer_plastic(p: PlasticMeasure, fine: Mesh, levels):
    """Carry a piecewise-constant measure to a nested refinement (exact)."""
    coarse = p.mesh
    ac = evaluate_p0(p.ac, coarse, fine.centroids)
    # refinement splits facet i into facets 2i, 2i+1, so the parent index is a shift
    parent = np.arange(fine.nf) >> levels
    a = coarse.vertices[coarse.facets[parent, 0]]
    b = coarse.vertices[coarse.facets[parent, 1]]
    rel = fine.facet_centroids - a
    off = np.abs(rel[:, 0] * (b - a)[:, 1] - rel[:, 1] * (b - a)[:, 0])
    if off.max(initial=0.0) > 1e-9 * coarse.facet_measures.max():
        raise MeshError("fine facets are not nested in the coarse boundary")
    sing = p.singular[parent]
    return PlasticMeasure(fine, ac, sing)


# ---------------------------------------------------------------------------
# full-Dirichlet recovery


def _assemble_regular(s_fine: Scenario, uhat, ehat, div_solver: DivSolver, psi):
    """Bogovskii correction and exact kinematics on the fine mesh."""
    fine = s_fine.mesh
    n = fine.dim
    uhat = uhat.copy()
    # the translated supports avoid the boundary; make the zero exact
    uhat[fine.boundary_vertices] = 0.0
    div_hat = trace(sym_gradient(uhat, fine))
    if psi is None:
        psi = div_hat
    raw = psi - div_hat
    rhs = mean_project(raw, fine)
    mean_fix = abs(float(np.sum((raw - rhs) * fine.volumes)))
    sol = div_solver.solve(rhs)
    w = s_fine.w
    u = w + uhat + sol.v
    eu = sym_gradient(u, fine)
    e = deviator(ehat) + deviator(sym_gradient(w, fine)) + (trace(eu) / n)[:, None, None] * np.eye(n)
    t = Triplet.from_displacement(fine, u, e, w, regular=True)
    return t, sol, mean_fix


def eventually_decreasing(values, floor=0.0):
    """Final entry below the first and no increase over the second half of the sequence.

    Entries at or below ``floor`` (a noise level) count as equal to it; a
    sequence entirely below the floor passes.
    """
    v = [max(float(x), floor) for x in values]
    if len(v) < 2:
        return False
    if max(v) <= floor:
        return True
    tail = v[len(v) // 2:]
    return (v[-1] < v[0] or v[-1] <= floor) and all(b <= a for a, b in zip(tail, tail[1:]))


def recover_dirichlet(s: Scenario, t: Triplet, cfg: PipelineConfig | None = None, cover: Cover | None = None):
    """Regular triplets approximating a relaxed triplet with Dirichlet data on the whole boundary.

    Returns ``(triplets, trace)`` with one regular triplet per schedule
    entry, all on the same uniform refinement of the input mesh.
    """
    cfg = cfg or PipelineConfig()
    mesh = s.mesh
    if not np.all(mesh.gamma0):
        raise ValueError("recover_dirichlet needs the Dirichlet condition on the whole boundary")
    t.check(1e-8)
    cover = cover or build_cover(mesh)
    n = mesh.dim
    w = s.w
    ut = t.u - w
    et = t.e - sym_gradient(w, mesh)
    g_energy = eval_G(s, t).total
    tv_target = t.p.total_variation()
    datum = Datum("field", {"mesh": mesh, "values": w})
    out = []
    trace_rows = RecoveryTrace()
    p_exp = bd_exponent(n)
    fine = refine_levels(mesh, cfg.levels, cfg.max_fine_vertices)
    div_solver = solver_for(fine)
    tests = TestFamily(fine, cfg.weakstar_fields)
    s_fine = Scenario(fine, s.moduli, s.yield_set, datum)
    p_ref = transfer_plastic(t.p, fine, cfg.levels)
    u_ref = evaluate_p1(t.u, mesh, fine.vertices)
    e_ref = evaluate_p0(t.e, mesh, fine.centroids)
    qp, qw = cell_quadrature_points(fine)
    nq = qp.shape[1]
    pts = np.concatenate([fine.vertices, qp.reshape(-1, n)])
    sb = sym_basis(n)
    m = len(sb)
    for k in cfg.schedule:
        if k < cover.k0:
            raise MeshError(f"k={k} is below the validated cover threshold k0={cover.k0}")
        eps = cfg.eps(cover, k)
        shifts = np.array([p.direction / k for p in cover.patches])
        budget = cfg.budget_scale / k
        # shrink eps until both mollification budgets hold; the L2 error of a
        # piecewise-constant field scales like sqrt(eps), which guides the step
        for attempt in range(MAX_HALVINGS + 1):
            moll, raw = mollified_sum(cover, pts, shifts, eps, ut, et, mesh, cfg.stencil_radius)
            cq = moll[fine.nv:].reshape(fine.nc, nq, -1)
            rq = raw[fine.nv:].reshape(fine.nc, nq, -1)
            du = np.linalg.norm(cq[..., :n] - rq[..., :n], axis=-1)
            mu_err = float(np.sum(du**p_exp * qw)) ** (1 / p_exp)
            de = norm(deviator(from_coords(cq[..., n:n + m] - rq[..., n:n + m], sb)))
            me_err = math.sqrt(float(np.sum(de**2 * qw)))
            worst = max(mu_err, me_err) / budget
            if worst <= 1 or attempt == MAX_HALVINGS:
                break
            eps *= min(0.5, (0.8 / worst) ** 2)
        ok = worst <= 1
        if cfg.strict and not ok:
            raise BudgetError(f"mollification budget {budget:.3g} not met at k={k}")
        uhat = moll[:fine.nv, :n]
        ehat = from_coords(np.einsum("cqk,cq->ck", cq[..., n:n + m], qw) / fine.volumes[:, None], sb)
        psi = trace(ehat) if cfg.psi_rule == "trace" else None
        tk, sol, mean_fix = _assemble_regular(s_fine, uhat, ehat, div_solver, psi)
        tk.check(1e-9)
        energy_f = eval_F(s_fine, tk.u, tk.e, tol=1e-9).total
        row = dict(
            k=k,
            err_u=lp_norm_p1(tk.u - u_ref, fine, p_exp),
            err_e=lp_norm_p0(tk.e - e_ref, fine, 2.0),
            tv_pk=tk.p.total_variation(),
            tv_target=tv_target,
            energy_F=energy_f,
            energy_G=g_energy,
            gap=abs(energy_f - g_energy) / max(abs(g_energy), 1e-300),
            eps=eps,
            weakstar=weakstar_gap(tk.p, p_ref, tests),
            strict=strict_gap(tk.p, p_ref, tests),
            div_residual=sol.residual,
            mean_fix=mean_fix,
            bogovskii_ratio=sol.ratio,
            moll_u=float(mu_err),
            moll_e=me_err,
            budget=budget,
            budget_ok=bool(ok),
            fine_cells=fine.nc,
        )
        trace_rows.append(row)
        out.append(tk)
    return out, trace_rows


# ---------------------------------------------------------------------------
# interior mollification with per-layer budgets


class LayerCover:
    """Partition of unity in dyadic layers of the boundary distance ``d``.

    With ``s = log2(d0 / d)`` the weights are hats of unit width in ``s``
    centred at ``0, 1, ..., top``; the first is 1 deep inside and the last
    is 1 in the strip ``d < d0 2^-top``, which is never mollified.
    """

    def __init__(self, mesh: Mesh, top=None):
        self.mesh = mesh
        d = mesh.facet_distance(mesh.centroids)
        self.d0 = 0.5 * float(d.max())
        if top is None:
            top = max(1, math.ceil(math.log2(self.d0 / float(mesh.h.min()))))
        self.top = int(top)

    def _s(self, x):
        d = self.mesh.facet_distance(x)
        return np.log2(self.d0 / np.maximum(d, 1e-300)), d

    def hat(self, s, i):
        if i == 0:
            return np.clip(1 - s, 0, 1), np.where((s > 0) & (s < 1), -1.0, 0.0)
        if i == self.top:
            return np.clip(s - i + 1, 0, 1), np.where((s > i - 1) & (s < i), 1.0, 0.0)
        val = np.maximum(0, 1 - np.abs(s - i))
        return val, np.where(np.abs(s - i) < 1, -np.sign(s - i), 0.0)

    def weight(self, x, i, grad=False):
        s, d = self._s(x)
        val, ds = self.hat(s, i)
        if not grad:
            return val
        h = 1e-7
        n = x.shape[1]
        gd = np.stack([(self.mesh.facet_distance(x + h * np.eye(n)[a]) - self.mesh.facet_distance(x - h * np.eye(n)[a]))
                       / (2 * h) for a in range(n)], axis=1)
        factor = ds * (-1.0 / (np.maximum(d, 1e-300) * math.log(2)))
        return val, factor[:, None] * gd

    def inner_radius(self, i):
        """Points of the support of layer ``i < top`` lie beyond this distance."""
        return self.d0 * 2.0 ** (-i - 1)


def _layer_fields(cover: LayerCover, i, x, u, ec, pc):
    """``[phi u, phi e, grad phi (.) u, phi p]`` of layer ``i`` at ``x`` (zero outside)."""
    mesh = cover.mesh
    n = mesh.dim
    sb = sym_basis(n)
    m = len(sb)
    out = np.zeros((len(x), n + 3 * m))
    cell, bary = mesh.locate(x)
    inside = np.nonzero(cell >= 0)[0]
    if len(inside) == 0:
        return out
    xi, ci = x[inside], cell[inside]
    phi, gphi = cover.weight(xi, i, grad=True)
    live = np.nonzero((phi > 0) | np.any(gphi != 0, axis=1))[0]
    xi, ci, phi, gphi, rows = xi[live], ci[live], phi[live], gphi[live], inside[live]
    uu = np.einsum("pk,pki->pi", bary[rows], u[mesh.cells[ci]])
    cross = 0.5 * (gphi[:, :, None] * uu[:, None, :] + uu[:, :, None] * gphi[:, None, :])
    out[rows, :n] = phi[:, None] * uu
    out[rows, n:n + m] = phi[:, None] * ec[ci]
    out[rows, n + m:n + 2 * m] = coords(cross, sb)
    out[rows, n + 2 * m:] = phi[:, None] * pc[ci]
    return out


@dataclass
class BudgetReport:
    k: int
    eps: list
    halvings: list
    errors: list          # per layer: [u, grad phi (.) u, e, |TV difference|]
    budgets: list
    psi_err: float
    tv_pk: float
    tv_p: float
    slack: dict
    div_residual: float
    restarts: int = 0     # halvings of all starting radii forced by the trace target

    @property
    def tv_bound_ok(self):
        return self.tv_pk <= self.tv_p + sum(self.slack.values()) + 1e-12 * (1 + self.tv_p)


def _mollify_layers(cover: LayerCover, t: Triplet, pts, cfg: PipelineConfig, k, cap):
    """Per-layer radius search; the starting radius of every layer is scaled by ``cap``."""
    mesh = t.mesh
    n = mesh.dim
    sb = sym_basis(n)
    m = len(sb)
    ec = coords(t.e, sb)
    pc = coords(t.p.ac, sb)
    qw = cell_quadrature_points(mesh)[1]
    nq = qw.shape[1]
    p_exp = bd_exponent(n)
    acc = np.zeros((len(pts), n + 3 * m))
    eps_used, halvings, errors, budgets = [], [], [], []
    for i in range(cover.top + 1):
        raw = _layer_fields(cover, i, pts, t.u, ec, pc)
        budget = cfg.budget_scale / (k * 2.0**i)
        budgets.append(budget)
        if i == cover.top:
            # boundary layer: left as is
            acc += raw
            eps_used.append(0.0)
            halvings.append(0)
            errors.append([0.0] * 4)
            continue
        eps = 0.45 * cover.inner_radius(i) * cap
        rq = raw[mesh.nv:].reshape(mesh.nc, nq, -1)
        tv_r = float(np.sum(norm(from_coords(rq[..., n + 2 * m:], sb)) * qw))
        for attempt in range(MAX_HALVINGS + 1):
            y, wq = bump_stencil(eps, n, cfg.stencil_radius)
            moll = sum(wq_ * _layer_fields(cover, i, pts - yq, t.u, ec, pc) for yq, wq_ in zip(y, wq))
            mq = moll[mesh.nv:].reshape(mesh.nc, nq, -1)
            dq = mq - rq
            e_u = float(np.sum(np.linalg.norm(dq[..., :n], axis=-1) ** p_exp * qw)) ** (1 / p_exp)
            gx = norm(from_coords(dq[..., n + m:n + 2 * m], sb))
            e_x = float(np.sum(gx**p_exp * qw)) ** (1 / p_exp)
            e_e = math.sqrt(float(np.sum(norm(from_coords(dq[..., n:n + m], sb)) ** 2 * qw)))
            tv_m = float(np.sum(norm(from_coords(mq[..., n + 2 * m:], sb)) * qw))
            err = [e_u, e_x, e_e, abs(tv_m - tv_r)]
            if max(err) <= budget:
                break
            if attempt == MAX_HALVINGS:
                raise BudgetError(f"layer {i}: budget {budget:.3g} not met after {MAX_HALVINGS} halvings at k={k}")
            eps *= 0.5
        acc += moll
        eps_used.append(eps)
        halvings.append(attempt)
        errors.append(err)
    return acc, eps_used, halvings, errors, budgets


def mollify_budget(t: Triplet, k, cfg: PipelineConfig | None = None, cover: LayerCover | None = None):
    """Regular triplet from a triplet vanishing on the Dirichlet boundary.

    Layer ``i`` of the dyadic cover is mollified with its own radius, halved
    until the four errors (``phi u`` in ``L^{n/(n-1)}``, ``grad phi (.) u`` in
    the same norm, ``phi e`` in ``L^2``, total variation of ``phi p``) are each
    below ``budget_scale / (k 2^i)``. If the trace target ``psi`` is then
    further than ``budget_scale / k`` from ``div u`` in ``L^2``, all starting
    radii are halved and the search repeats. Returns ``(triplet, BudgetReport)``.
    """
    cfg = cfg or PipelineConfig()
    mesh = t.mesh
    n = mesh.dim
    if k < 1:
        raise ValueError("k must be a positive integer")
    v0 = mesh.gamma0_vertices
    scale = 1e-12 * (1 + float(np.abs(t.u).max(initial=0.0)))
    if np.abs(t.u[v0]).max(initial=0.0) > scale or np.abs(t.w[v0]).max(initial=0.0) > scale:
        raise ValueError("mollify_budget needs u = w = 0 on the Dirichlet boundary")
    cover = cover or LayerCover(mesh)
    sb = sym_basis(n)
    m = len(sb)
    qp, qw = cell_quadrature_points(mesh)
    nq = qp.shape[1]
    pts = np.concatenate([mesh.vertices, qp.reshape(-1, n)])
    vol = mesh.volumes
    div_u = trace(sym_gradient(t.u, mesh))
    cap = 1.0
    for outer in range(MAX_HALVINGS + 1):
        acc, eps_used, halvings, errors, budgets = _mollify_layers(cover, t, pts, cfg, k, cap)
        uhat = acc[:mesh.nv, :n].copy()
        cq = acc[mesh.nv:].reshape(mesh.nc, nq, -1)
        cavg = np.einsum("cqk,cq->ck", cq, qw) / vol[:, None]
        ehat = from_coords(cavg[:, n:n + m], sb)
        # boundary values are those of u (zero on the Dirichlet part)
        uhat[mesh.boundary_vertices] = t.u[mesh.boundary_vertices]
        div_hat = trace(sym_gradient(uhat, mesh))
        psi = trace(ehat) if cfg.psi_rule == "trace" else div_hat
        psi_err = math.sqrt(float(np.sum((psi - div_u) ** 2 * vol)))
        if psi_err <= cfg.budget_scale / k:
            break
        if outer == MAX_HALVINGS:
            raise BudgetError(f"trace target misses div u by {psi_err:.3g} at k={k}")
        cap *= 0.5
    cross = from_coords(cavg[:, n + m:n + 2 * m], sb)
    pmoll = from_coords(cavg[:, n + 2 * m:], sb)
    sol = solver_for(mesh).solve(mean_project(psi - div_hat, mesh))
    uk = uhat + sol.v
    eu = sym_gradient(uk, mesh)
    ek = deviator(ehat) + (trace(eu) / n)[:, None, None] * np.eye(n)
    tk = Triplet.from_displacement(mesh, uk, ek, t.w, regular=True)
    ev = deviator(sym_gradient(sol.v, mesh))
    interp = deviator(sym_gradient(uhat, mesh) - ehat) - deviator(pmoll + cross)
    slack = dict(
        tv_layers=float(sum(e[3] for e in errors)),
        cross=float(np.sum(norm(deviator(cross)) * vol)),
        corrector=float(np.sum(norm(ev) * vol)),
        interpolation=float(np.sum(norm(interp) * vol)),
    )
    report = BudgetReport(
        k=int(k), eps=eps_used, halvings=halvings, errors=errors, budgets=budgets, psi_err=psi_err,
        tv_pk=tk.p.total_variation(), tv_p=float(np.sum(norm(t.p.ac) * vol)),
        slack=slack, div_residual=sol.residual, restarts=outer,
    )
    return tk, report


# ---------------------------------------------------------------------------
# boundary peeling


@dataclass
class PeelReport:
    k: int
    strip_tv: float        # k int_{d < 1/k} |grad d (.) v|
    facet_integral: float  # int_{Gamma_0} |nu (.) v|
    gradient_tv: float     # int |grad eta_k (.) v| with the discrete cut-off
    gradient_trace: float  # max cellwise |tr(grad eta_k (.) v)| / |v|
    tangential: float      # max cellwise |v . grad d| / (1 + |v|) in the strip


def _distance_gradient(mesh: Mesh, x, ids, h=1e-7):
    n = mesh.dim
    return np.stack([(mesh.facet_distance(x + h * np.eye(n)[a], ids) - mesh.facet_distance(x - h * np.eye(n)[a], ids))
                     / (2 * h) for a in range(n)], axis=1)


def peel_boundary(t: Triplet, v, k, tol=1e-8):
    """``u + eta_k v`` with the cut-off ``eta_k = max(0, 1 - k d)``, ``d`` the distance to the Dirichlet part.

    ``v`` is a P1 field (vertex array or callable) tangential to the level
    sets of ``d`` in the strip. The cut-off is interpolated at the vertices,
    the trace of ``e`` absorbs ``div(eta_k v)`` and the plastic part the rest,
    so ``Eu = e + p`` still holds per cell. Returns ``(triplet, PeelReport)``.
    """
    mesh = t.mesh
    n = mesh.dim
    if k < 1:
        raise ValueError("k must be a positive integer")
    ids = np.nonzero(mesh.gamma0)[0]
    v = np.asarray(v(mesh.vertices) if callable(v) else v, dtype=float).reshape(mesh.nv, n)
    dv = mesh.facet_distance(mesh.vertices, ids)
    # the strip must contain at least one full layer of cells
    touching = np.any(dv[mesh.cells] < 1e-12 * mesh.h.max(), axis=1)
    layer = float(dv[mesh.cells[touching]].max(initial=0.0))
    if 1.0 / k < layer * (1 - 1e-9):
        raise ResolutionError(f"strip width 1/{k} is thinner than the cell layer {layer:.3g}")
    eta = np.maximum(0.0, 1.0 - k * dv)
    strip = np.any(eta[mesh.cells] > 0, axis=1)
    cells = np.nonzero(strip)[0]
    vbar = v[mesh.cells].mean(axis=1)
    gd = _distance_gradient(mesh, mesh.centroids[cells], ids)
    vn = np.abs(np.einsum("ci,ci->c", vbar[cells], gd))
    tang = float((vn / (1 + np.linalg.norm(vbar[cells], axis=1))).max(initial=0.0))
    if tang > tol:
        raise ValueError(f"v is not tangential in the boundary strip (|v . grad d| = {tang:.2e})")
    geta = np.einsum("ca,cai->ci", eta[mesh.cells], mesh.grad_basis)
    gterm = 0.5 * (geta[:, :, None] * vbar[:, None, :] + vbar[:, :, None] * geta[:, None, :])
    # the trace-free check applies where the discrete cut-off gradient is parallel to grad d
    gc = geta[cells]
    cr = gc[:, 0] * gd[:, 1] - gc[:, 1] * gd[:, 0] if n == 2 else np.linalg.norm(np.cross(gc, gd), axis=1)
    par = np.abs(cr) <= 1e-8 * (1 + np.linalg.norm(gc, axis=1))
    gtr = np.abs(trace(gterm[cells][par])) / (1 + np.linalg.norm(vbar[cells][par], axis=1))
    gtr = float(gtr.max(initial=0.0))
    if gtr > tol:
        raise ValueError(f"grad eta (.) v has trace {gtr:.2e} in the strip")
    inc = eta[:, None] * v
    einc = sym_gradient(inc, mesh)
    ek = t.e + (trace(einc) / n)[:, None, None] * np.eye(n)
    uk = t.u + inc
    v0 = mesh.gamma0_vertices
    regular = np.abs(uk[v0] - t.w[v0]).max(initial=0.0) <= 1e-12 * (1 + np.abs(t.w).max(initial=0.0))
    tk = Triplet.from_displacement(mesh, uk, ek, t.w, regular=bool(regular))
    # closed-form-comparable diagnostics
    qp, qw = cell_quadrature_points(mesh)
    qs = qp[cells].reshape(-1, n)
    dq = mesh.facet_distance(qs, ids)
    vq = evaluate_p1(v, mesh, qs)
    gq = _distance_gradient(mesh, qs, ids)
    sym = 0.5 * (gq[:, :, None] * vq[:, None, :] + vq[:, :, None] * gq[:, None, :])
    strip_tv = float(k * np.sum(np.where(dq < 1.0 / k, norm(sym), 0.0) * qw[cells].ravel()))
    fp, fw = facet_quadrature_points(mesh)
    fv = evaluate_p1(v, mesh, fp[ids].reshape(-1, n)).reshape(len(ids), -1, n)
    nu = mesh.normals[ids]
    fsym = 0.5 * (nu[:, None, :, None] * fv[:, :, None, :] + fv[:, :, :, None] * nu[:, None, None, :])
    facet_integral = float(np.sum(norm(fsym) * fw[ids]))
    report = PeelReport(int(k), strip_tv, facet_integral, float(np.sum(norm(gterm) * mesh.volumes)), gtr, tang)
    return tk, report


# ---------------------------------------------------------------------------
# layered lifting of a tangential trace on the model half-cube (n = 2)


@dataclass
class LiftResult:
    """Layered field ``v = (theta(x', x_n), 0)`` on ``(a, b) x (0, tau_0)``, zero above ``tau_0``."""

    xgrid: np.ndarray
    taus: np.ndarray
    thetas: np.ndarray      # (J + 1, len(xgrid)), thetas[0] = 0
    norms: dict
    bounds: dict            # name -> (computed, bound)
    trace_errors: np.ndarray  # ||v(., tau_j) - u0||_{L1}, j = 0..J

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xn = pts[:, 1]
        taus = self.taus
        vals = np.array([np.interp(pts[:, 0], self.xgrid, th) for th in self.thetas])
        # slab j holds tau_{j+1} <= x_n < tau_j; below the last height the last theta is kept
        j = np.searchsorted(-taus, -xn, side="right") - 1
        out = np.zeros(len(pts))
        top = j < 0
        deep = j >= len(taus) - 1
        mid = ~top & ~deep
        jm = j[mid]
        r = np.arange(len(pts))[mid]
        lam = (xn[mid] - taus[jm]) / (taus[jm + 1] - taus[jm])
        out[mid] = vals[jm, r] + lam * (vals[jm + 1, r] - vals[jm, r])
        out[deep] = vals[-1, deep]
        return np.stack([out, np.zeros_like(out)], axis=1)

    @property
    def bounds_hold(self):
        return all(a <= b * (1 + 1e-12) + 1e-300 for a, b in self.bounds.values())


def _schedule(obj, count, name):
    if callable(obj):
        return [obj(j) for j in range(count)]
    seq = list(obj)
    if len(seq) < 2:
        raise ValueError(f"{name} needs at least two entries")
    return seq


def lift_trace_cube(u0, taus, thetas, xgrid, depth=12, tail_ratio=0.1):
    """Layered extension of a tangential boundary trace ``u0`` into ``x_n > 0``.

    ``taus`` (decreasing heights) and ``thetas`` (approximations of ``u0``
    with ``thetas[0] = 0``) are sequences or callables of ``j``; callables
    are sampled for ``j = 0 .. 2 depth``. Inside slab ``j`` the field
    interpolates linearly in ``x_n`` between ``thetas[j]`` at ``taus[j]``
    and ``thetas[j+1]`` at ``taus[j+1]``. Norms are exact in ``x_n`` and
    trapezoidal in ``x'`` on ``xgrid``. A schedule whose increments do not
    settle (the second half carries more than ``tail_ratio`` of the first
    half's ``L^1`` movement) raises ``NonSummableSchedule``.
    """
    x = np.asarray(xgrid, dtype=float)
    if x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("xgrid must be a strictly increasing 1-d grid")
    count = 2 * depth + 1
    tau = np.asarray(_schedule(taus, count, "taus"), dtype=float)
    ths = _schedule(thetas, count, "thetas")
    ths = np.array([np.broadcast_to(th(x) if callable(th) else np.asarray(th, float), x.shape) for th in ths])
    jn = min(len(tau), len(ths))
    tau, ths = tau[:jn], ths[:jn]
    if np.any(tau <= 0) or np.any(np.diff(tau) >= 0):
        raise ValueError("taus must be positive and strictly decreasing")
    if np.abs(ths[0]).max() > 0:
        raise ValueError("the schedule must start from theta_0 = 0")
    u0v = np.broadcast_to(u0(x) if callable(u0) else np.asarray(u0, float), x.shape)

    def l1(f):
        return float(np.trapezoid(np.abs(f), x))

    def l2sq(f):
        return float(np.trapezoid(f * f, x))

    inc = np.array([l1(ths[j + 1] - ths[j]) for j in range(jn - 1)])
    half = (jn - 1) // 2
    head, tail = inc[:half].sum(), inc[half:].sum()
    if tail > tail_ratio * max(head, 1e-300) and tail > 1e-14 * (1 + l1(u0v)):
        raise NonSummableSchedule(f"increments do not settle: tail {tail:.3g} against head {head:.3g}")
    dth = np.array([np.gradient(th, x) for th in ths])
    h = -np.diff(tau)
    a, b = ths[:-1], ths[1:]
    da, db = dth[:-1], dth[1:]
    # exact integrals over x_n of a linear interpolant, then trapezoid in x'
    v2 = float(np.sum(h * np.array([_l2sq_ab(a[j], b[j], x) for j in range(jn - 1)])))
    d2 = float(np.sum(h * np.array([_l2sq_ab(da[j], db[j], x) for j in range(jn - 1)])))
    v1 = float(np.sum(h * np.array([_l1_ab(a[j], b[j], x) for j in range(jn - 1)])))
    d1 = float(np.sum(h * np.array([_l1_ab(da[j], db[j], x) for j in range(jn - 1)])))
    dn1 = float(inc.sum())
    # below the last height v keeps the last theta
    low = tau[-1]
    v2 += low * l2sq(ths[-1])
    d2 += low * l2sq(dth[-1])
    v1 += low * l1(ths[-1])
    d1 += low * l1(dth[-1])
    sq = np.array([l2sq(th) for th in ths])
    dsq = np.array([l2sq(d) for d in dth])
    bounds = {
        "L2": (v2, float(np.sum(h * (sq[:-1] + sq[1:]))) + low * sq[-1]),
        "tangential_derivative_L2": (d2, float(np.sum(h * (dsq[:-1] + dsq[1:]))) + low * dsq[-1]),
        "normal_derivative_L1": (dn1, float(inc.sum())),
    }
    norms = {"L1": v1, "L2": math.sqrt(v2), "tangential_derivative_L1": d1,
             "tangential_derivative_L2": math.sqrt(d2), "normal_derivative_L1": dn1,
             "W11": v1 + d1 + dn1}
    norms = {key: float(val) for key, val in norms.items()}
    errs = np.array([l1(th - u0v) for th in ths])
    return LiftResult(x, tau, ths, norms, bounds, errs)


def _l2sq_ab(a, b, x):
    """``int_x int_0^1 (a + s (b - a))^2 ds dx``."""
    return float(np.trapezoid((a * a + a * b + b * b) / 3.0, x))


def _l1_ab(a, b, x):
    """``int_x int_0^1 |a + s (b - a)| ds dx`` (exact in ``s``)."""
    same = a * b >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (a * a + b * b) / (2 * (np.abs(a) + np.abs(b)))
    f = np.where(same, 0.5 * (np.abs(a) + np.abs(b)), np.nan_to_num(cross))
    return float(np.trapezoid(f, x))
