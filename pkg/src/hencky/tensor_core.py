"""Small-dimension symmetric tensor algebra, elastic energy, yield sets.

Tensors are plain numpy arrays of shape ``(..., n, n)`` holding full,
exactly symmetric matrices. Every function broadcasts over the leading
axes, so a per-cell field of shape ``(ncells, n, n)`` is handled the same
way as a single tensor.

Component ordering used by :func:`to_components` / :func:`from_components`
is ``(11, 22, [33,] 12, [13, 23])`` with off-diagonal entries unscaled.
Norms are always computed from the full matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull

DEVIATORIC_RTOL = 1e-10


class ConvergenceError(RuntimeError):
    """An inner iterative solve did not reach its tolerance."""


# ---------------------------------------------------------------------------
# basic algebra


def _pairs(n):
    diag = [(i, i) for i in range(n)]
    off = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return diag + off


def to_components(xi):
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    return np.stack([xi[..., i, j] for i, j in _pairs(n)], axis=-1)


def from_components(c, n=None):
    c = np.asarray(c, dtype=float)
    m = c.shape[-1]
    if n is None:
        n = {3: 2, 6: 3, 1: 1}[m]
    out = np.zeros(c.shape[:-1] + (n, n))
    for k, (i, j) in enumerate(_pairs(n)):
        out[..., i, j] = c[..., k]
        out[..., j, i] = c[..., k]
    return out


def sym(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def trace(xi):
    return np.trace(xi, axis1=-2, axis2=-1)


def ddot(a, b):
    """Euclidean scalar product ``a : b``."""
    return np.einsum("...ij,...ij->...", a, b)


def norm(xi):
    return np.sqrt(np.maximum(ddot(xi, xi), 0.0))


def deviator(xi):
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    return xi - (trace(xi) / n)[..., None, None] * np.eye(n)


def spherical(xi):
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    return (trace(xi) / n)[..., None, None] * np.eye(n)


def sym_outer(a, b):
    """Symmetrised tensor product ``(a_i b_j + a_j b_i) / 2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = a[..., :, None] * b[..., None, :]
    return 0.5 * (ab + np.swapaxes(ab, -1, -2))


def is_deviatoric(xi, rtol=DEVIATORIC_RTOL):
    xi = np.asarray(xi, dtype=float)
    # the max entry does not underflow the way a sum of squares can
    scale = np.abs(xi).max(axis=(-2, -1)) * xi.shape[-1]
    return np.abs(trace(xi)) <= rtol * scale


def check_deviatoric(xi, rtol=DEVIATORIC_RTOL):
    if not np.all(is_deviatoric(xi, rtol)):
        raise ValueError("tensor argument is not trace-free")


def sym_basis(n):
    """Orthonormal basis of the symmetric matrices, shape ``(n(n+1)/2, n, n)``."""
    out = []
    for i, j in _pairs(n):
        b = np.zeros((n, n))
        if i == j:
            b[i, i] = 1.0
        else:
            b[i, j] = b[j, i] = 1.0 / np.sqrt(2.0)
        out.append(b)
    return np.array(out)


def dev_basis(n):
    """Orthonormal basis of the trace-free symmetric matrices."""
    # diagonal part: orthonormal complement of (1,...,1)
    ones = np.ones((n, 1)) / np.sqrt(n)
    q, _ = np.linalg.qr(np.hstack([ones, np.eye(n)[:, : n - 1]]))
    out = [np.diag(q[:, k]) for k in range(1, n)]
    for i, j in _pairs(n)[n:]:
        b = np.zeros((n, n))
        b[i, j] = b[j, i] = 1.0 / np.sqrt(2.0)
        out.append(b)
    return np.array(out)


def coords(xi, basis):
    return np.einsum("...ij,kij->...k", xi, basis)


def from_coords(y, basis):
    return np.einsum("...k,kij->...ij", y, basis)


# ---------------------------------------------------------------------------
# elastic energy


@dataclass(frozen=True)
class ElasticModuli:
    """Elastic quadratic form.

    Isotropic: ``Q(e) = mu |e_D|^2 + kappa/2 (tr e)^2``. When ``matrix`` is
    given, ``Q(e) = c . matrix . c`` with ``c = to_components(e)`` and
    ``mu``/``kappa`` are ignored.
    """

    mu: float = 1.0
    kappa: float = 1.0
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix is None:
            if not (self.mu > 0 and self.kappa > 0):
                raise ValueError("moduli must be positive")
        else:
            m = np.asarray(self.matrix, dtype=float)
            if m.shape not in ((3, 3), (6, 6)) or not np.allclose(m, m.T):
                raise ValueError("matrix must be symmetric 3x3 or 6x6")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError("matrix must be positive definite")
            object.__setattr__(self, "matrix", m)

    @property
    def isotropic(self):
        return self.matrix is None

    @classmethod
    def from_isotropic_matrix(cls, mu, kappa, n):
        """General-form moduli that reproduce the isotropic law exactly."""
        m = n * (n + 1) // 2
        mat = np.zeros((m, m))
        mat[:n, :n] = kappa / 2.0 - mu / n
        mat[np.arange(n), np.arange(n)] += mu
        mat[np.arange(n, m), np.arange(n, m)] = 2.0 * mu
        return cls(matrix=mat)

    def energy(self, e):
        e = np.asarray(e, dtype=float)
        if self.isotropic:
            return self.mu * ddot(deviator(e), deviator(e)) + 0.5 * self.kappa * trace(e) ** 2
        c = to_components(e)
        return np.einsum("...i,ij,...j->...", c, self.matrix, c)

    def gram(self, n):
        """Matrix of Q in the orthonormal :func:`sym_basis` coordinates."""
        b = sym_basis(n)
        m = len(b)
        g = np.empty((m, m))
        for a in range(m):
            for c in range(m):
                g[a, c] = 0.5 * (self.energy(b[a] + b[c]) - self.energy(b[a]) - self.energy(b[c]))
        return g

    def conjugate(self, sigma):
        """Convex conjugate ``Q*(sigma) = sup_e sigma:e - Q(e)``."""
        sigma = np.asarray(sigma, dtype=float)
        n = sigma.shape[-1]
        if self.isotropic:
            s = deviator(sigma)
            return ddot(s, s) / (4 * self.mu) + trace(sigma) ** 2 / (2 * self.kappa * n * n)
        y = coords(sigma, sym_basis(n))
        ginv = np.linalg.inv(self.gram(n))
        return 0.25 * np.einsum("...i,ij,...j->...", y, ginv, y)


# ---------------------------------------------------------------------------
# yield sets


class YieldSet:
    """Convex compact set K of trace-free stresses containing 0."""

    dim: int
    r: float
    R: float

    def support(self, xi):
        raise NotImplementedError

    def project(self, sigma):
        raise NotImplementedError

    def gauge(self, sigma):
        raise NotImplementedError

    def contains(self, sigma, tol=1e-10):
        return self.gauge(sigma) <= 1.0 + tol


@dataclass(frozen=True)
class Ball(YieldSet):
    """Von Mises set ``{sigma : |sigma| <= radius}``."""

    radius: float
    dim: int = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def r(self):
        return float(self.radius)

    @property
    def R(self):
        return float(self.radius)

    def support(self, xi):
        check_deviatoric(xi)
        return self.radius * norm(xi)

    def project(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        nrm = norm(sigma)
        scale = np.where(nrm > self.radius, self.radius / np.maximum(nrm, 1e-300), 1.0)
        return sigma * scale[..., None, None]

    def gauge(self, sigma):
        return norm(sigma) / self.radius


@dataclass(frozen=True, eq=False)
class Polytope(YieldSet):
    """Convex hull of finitely many trace-free vertices.

    Lower-dimensional hulls are allowed (``r`` is then 0). Projection uses
    Dykstra's alternating projections over the defining halfspaces of the
    hull, taken inside its affine span.
    """

    vertices: np.ndarray
    tol: float = 1e-10
    max_sweeps: int = 10_000

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 3 or v.shape[1] != v.shape[2] or len(v) == 0:
            raise ValueError("vertices must have shape (k, n, n)")
        if not np.allclose(v, np.swapaxes(v, 1, 2)):
            raise ValueError("vertices must be symmetric")
        if np.any(np.abs(trace(v)) > 1e-12):
            raise ValueError("polytope vertices must be trace-free")
        object.__setattr__(self, "vertices", v)
        h = self._hull
        if not h["contains_origin"]:
            raise ValueError("the yield set must contain the zero stress")

    @property
    def dim(self):
        return self.vertices.shape[-1]

    @cached_property
    def _hull(self):
        n = self.dim
        basis = dev_basis(n)
        pts = coords(self.vertices, basis)  # (k, d)
        center = pts.mean(axis=0)
        _, s, vt = np.linalg.svd(pts - center, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * max(1.0, s.max(initial=0.0))))
        span = vt[:rank]  # (rank, d)
        red = (pts - center) @ span.T  # (k, rank)
        if rank == 0:
            normals = np.zeros((0, 0))
            offsets = np.zeros(0)
        elif rank == 1:
            lo, hi = red[:, 0].min(), red[:, 0].max()
            normals = np.array([[1.0], [-1.0]])
            offsets = np.array([hi, -lo])
        else:
            hull = ConvexHull(red)
            normals = hull.equations[:, :-1]
            offsets = -hull.equations[:, -1]
            # drop duplicated facet planes produced by triangulated facets
            _, keep = np.unique(np.round(np.hstack([normals, offsets[:, None]]), 12), axis=0, return_index=True)
            keep = np.sort(keep)
            normals, offsets = normals[keep], offsets[keep]
        # origin in reduced coordinates
        o_full = -center
        o_red = o_full @ span.T if rank else np.zeros(0)
        off_span = np.linalg.norm(o_full - o_red @ span) if rank else np.linalg.norm(o_full)
        slack = offsets - normals @ o_red if rank else np.zeros(0)
        contains = off_span <= 1e-12 and np.all(slack >= -1e-12)
        full_dim = rank == len(basis)
        r = float(slack.min()) if (full_dim and rank) else 0.0
        return dict(basis=basis, center=center, span=span, rank=rank, normals=normals,
                    offsets=offsets, o_red=o_red, contains_origin=bool(contains), r=max(r, 0.0))

    @property
    def r(self):
        return self._hull["r"]

    @property
    def R(self):
        return float(norm(self.vertices).max())

    def support(self, xi):
        check_deviatoric(xi)
        xi = np.asarray(xi, dtype=float)
        vals = np.einsum("kij,...ij->...k", self.vertices, xi)
        return vals.max(axis=-1)

    def _to_reduced(self, sigma):
        h = self._hull
        y = coords(sigma, h["basis"]) - h["center"]
        red = y @ h["span"].T
        perp = y - red @ h["span"]
        return red, perp

    def _from_reduced(self, red):
        h = self._hull
        y = red @ h["span"] + h["center"]
        return from_coords(y, h["basis"])

    def project(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        check_deviatoric(sigma, 1e-8)
        shape = sigma.shape[:-2]
        n = self.dim
        red, _ = self._to_reduced(sigma.reshape(-1, n, n))
        h = self._hull
        a, b = h["normals"], h["offsets"]
        if h["rank"] == 0:
            return np.broadcast_to(self._from_reduced(np.zeros((1, 0))), sigma.shape).copy()
        viol = (red @ a.T - b > 0).any(axis=1)
        out = red.copy()
        if viol.any():
            out[viol] = self._dykstra(red[viol], a, b)
        return self._from_reduced(out).reshape(shape + (n, n))

    def _dykstra(self, x0, a, b):
        x = x0.copy()
        incr = np.zeros((len(a),) + x.shape)
        nn = np.einsum("ij,ij->i", a, a)
        scale = 1.0 + np.abs(x0).max()
        for _ in range(self.max_sweeps):
            x_prev = x.copy()
            for i in range(len(a)):
                y = x + incr[i]
                over = np.maximum(y @ a[i] - b[i], 0.0) / nn[i]
                x = y - over[:, None] * a[i]
                incr[i] = y - x
            if np.abs(x - x_prev).max() <= self.tol * scale:
                return x
        raise ConvergenceError("Dykstra projection did not converge")

    def gauge(self, sigma):
        """Minkowski gauge; ``inf`` for directions leaving the hull's span."""
        sigma = np.asarray(sigma, dtype=float)
        h = self._hull
        y = coords(sigma, h["basis"])
        if h["rank"] == 0:
            return np.where(np.linalg.norm(y, axis=-1) > 0, np.inf, 0.0)
        red = y @ h["span"].T
        perp = np.linalg.norm(y - red @ h["span"], axis=-1)
        # halfspaces through the origin's representation: a.(o + t) <= b
        slack = h["offsets"] - h["normals"] @ h["o_red"]
        lin = red @ h["normals"].T
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lin > 0, lin / slack, 0.0)
        g = ratio.max(axis=-1)
        scale = np.linalg.norm(y, axis=-1)
        return np.where(perp > 1e-12 * (1 + scale), np.inf, g)


def support(K: YieldSet, xi):
    return K.support(xi)


def project_K(K: YieldSet, sigma):
    return K.project(sigma)


def square_polytope(n=2, half_width=1.0):
    """Axis-aligned square in the orthonormal deviatoric basis (n=2)."""
    if n != 2:
        raise ValueError("square polytope is defined for n=2")
    b = dev_basis(2)
    corners = [(s1, s2) for s1 in (-1, 1) for s2 in (-1, 1)]
    return Polytope(np.array([half_width * (s1 * b[0] + s2 * b[1]) for s1, s2 in corners]))


def segment_polytope(n=2):
    """The segment with vertices ``+-diag(1, -1)``."""
    v = np.zeros((2, n, n))
    v[0, 0, 0], v[0, 1, 1] = 1.0, -1.0
    v[1] = -v[0]
    return Polytope(v)


# ---------------------------------------------------------------------------
# reduced (inf-convolution) density


@dataclass(frozen=True)
class ReducedDensity:
    """``f(xi) = min_{p trace-free} Q(xi - p) + H(p)``.

    With isotropic moduli the minimiser is explicit for any K through the
    Moreau decomposition ``p = x - proj_K(2 mu x) / (2 mu)``, ``x = xi_D``;
    for a ball this is the Huber-type closed form. General moduli fall back
    to an accelerated proximal-gradient inner solve.
    """

    moduli: ElasticModuli
    yield_set: YieldSet
    tol: float = 1e-10
    max_iter: int = 100_000

    @property
    def mode(self):
        return "closed" if self.moduli.isotropic else "numeric"

    def split(self, xi):
        """Optimal ``(e, p)`` with ``e + p = xi``."""
        xi = np.asarray(xi, dtype=float)
        if self.mode == "closed":
            mu = self.moduli.mu
            x = deviator(xi)
            stress = self.yield_set.project(2 * mu * x)
            p = x - stress / (2 * mu)
            p = deviator(p)
            return xi - p, p
        p = self._numeric_plastic(xi)
        return xi - p, p

    def __call__(self, xi):
        e, p = self.split(xi)
        return self.moduli.energy(e) + self.yield_set.support(p)

    def _numeric_plastic(self, xi):
        n = xi.shape[-1]
        sb, db = sym_basis(n), dev_basis(n)
        g = self.moduli.gram(n)
        emb = np.einsum("aij,kij->ak", sb, db)  # dev coords -> sym coords
        hd = emb.T @ g @ emb
        lip = 2 * np.linalg.eigvalsh(hd).max()
        x = coords(xi, sb).reshape(-1, len(sb))
        rhs = x @ g @ emb  # (N, d)

        def grad(z):
            return 2 * (z @ hd - rhs)

        def prox(v, t):
            return v - t * coords(self.yield_set.project(from_coords(v / t, db)), db)

        z = _fista(grad, prox, lip, np.zeros((len(x), len(db))), self.tol, self.max_iter)
        return from_coords(z, db).reshape(xi.shape)

    def prox(self, xi, tau):
        """``argmin_zeta |zeta - xi|^2 / (2 tau) + f(zeta)``."""
        if not tau > 0:
            raise ValueError("tau must be positive")
        xi = np.asarray(xi, dtype=float)
        n = xi.shape[-1]
        if self.mode == "closed" and isinstance(self.yield_set, Ball):
            mu, kappa, sy = self.moduli.mu, self.moduli.kappa, self.yield_set.radius
            tr = trace(xi) / (1 + kappa * tau * n)
            x = deviator(xi)
            s = norm(x)
            c = sy / (2 * mu)
            rho = np.where(s / (1 + 2 * mu * tau) <= c, s / (1 + 2 * mu * tau), s - sy * tau)
            scale = np.where(s > 0, rho / np.maximum(s, 1e-300), 0.0)
            return x * scale[..., None, None] + (tr / n)[..., None, None] * np.eye(n)
        return self._numeric_prox(xi, tau)

    def _numeric_prox(self, xi, tau):
        n = xi.shape[-1]
        sb, db = sym_basis(n), dev_basis(n)
        g = self.moduli.gram(n)
        emb = np.einsum("aij,kij->ak", sb, db)
        m, d = len(sb), len(db)
        x = coords(xi, sb).reshape(-1, m)
        lip = 1.0 / tau + 4 * np.linalg.eigvalsh(g).max()

        def grad(w):
            y, z = w[:, :m], w[:, m:]
            r = (y - z @ emb.T) @ g
            return np.hstack([(y - x) / tau + 2 * r, -2 * r @ emb])

        def prox(v, t):
            z = v[:, m:]
            z = z - t * coords(self.yield_set.project(from_coords(z / t, db)), db)
            return np.hstack([v[:, :m], z])

        w = _fista(grad, prox, lip, np.hstack([x, np.zeros((len(x), d))]), self.tol, self.max_iter)
        return from_coords(w[:, :m], sb).reshape(xi.shape)


def reduced_density(f: ReducedDensity, xi):
    return f(xi)


def reduced_density_prox(f: ReducedDensity, xi, tau):
    return f.prox(xi, tau)


def _fista(grad, prox, lip, z0, tol, max_iter):
    step = 1.0 / lip
    z = z0.copy()
    yk = z.copy()
    t = 1.0
    for _ in range(max_iter):
        z_new = prox(yk - step * grad(yk), step)
        change = np.abs(z_new - z).max()
        if change <= tol * (1.0 + np.abs(z_new).max()):
            return z_new
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        # adaptive restart keeps the iteration monotone enough for tight tolerances
        if np.sum((yk - z_new) * (z_new - z)) > 0:
            t_new, yk = 1.0, z_new.copy()
        else:
            yk = z_new + ((t - 1) / t_new) * (z_new - z)
        z, t = z_new, t_new
    raise ConvergenceError("inner minimisation did not converge")
