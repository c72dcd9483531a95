"""Simplicial meshes with a marked Dirichlet part of the boundary."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

SIDES_2D = {"left": (0, 0), "right": (0, 1), "bottom": (1, 0), "top": (1, 1)}
SIDES_3D = {"x0": (0, 0), "x1": (0, 1), "y0": (1, 0), "y1": (1, 1), "z0": (2, 0), "z1": (2, 1)}


class MeshError(ValueError):
    pass


@dataclass(eq=False)
class Mesh:
    """Immutable simplicial mesh.

    ``facets`` are the boundary facets only, each with the index of the
    single cell it belongs to, an outward unit normal and its measure.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cell: np.ndarray
    gamma0: np.ndarray
    normals: np.ndarray = field(repr=False)
    facet_measures: np.ndarray = field(repr=False)
    volumes: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nc(self):
        return len(self.cells)

    @property
    def nf(self):
        return len(self.facets)

    @classmethod
    def from_arrays(cls, vertices, cells, gamma0=None, facets=None):
        """Build a mesh, fixing cell orientation and extracting the boundary.

        ``gamma0`` is either a boolean per boundary facet (ordered as
        ``facets`` if given), a callable ``f(midpoints, normals) -> bool``,
        or ``None`` (whole boundary).
        """
        v = np.ascontiguousarray(vertices, dtype=float)
        c = np.array(cells, dtype=np.int64)
        n = v.shape[1]
        if c.shape[1] != n + 1:
            raise MeshError("cells must have n+1 vertices")
        jac = v[c[:, 1:]] - v[c[:, :1]]
        det = np.linalg.det(jac)
        if np.any(np.abs(det) <= 1e-14 * np.abs(det).max()):
            raise MeshError("degenerate cell")
        flip = det < 0
        c[flip, 0], c[flip, 1] = c[flip, 1].copy(), c[flip, 0].copy()
        vol = np.abs(det) / math.factorial(n)

        # boundary facets: faces owned by exactly one cell
        faces = {}
        for ci, cell in enumerate(c):
            for skip in range(n + 1):
                face = tuple(sorted(np.delete(cell, skip)))
                faces.setdefault(face, []).append(ci)
        bnd = {f: owners[0] for f, owners in faces.items() if len(owners) == 1}
        if any(len(o) > 2 for o in faces.values()):
            raise MeshError("non-manifold mesh")
        if facets is not None:
            order = [tuple(sorted(f)) for f in np.asarray(facets, dtype=np.int64)]
            if set(order) != set(bnd):
                raise MeshError("given facets do not tile the boundary")
            fac = np.array(order, dtype=np.int64)
        else:
            fac = np.array(sorted(bnd), dtype=np.int64).reshape(-1, n)
        owner = np.array([bnd[tuple(f)] for f in fac], dtype=np.int64)

        normals, meas = _facet_geometry(v, fac)
        cell_centroid = v[c[owner]].mean(axis=1)
        fac_centroid = v[fac].mean(axis=1)
        sgn = np.sign(np.einsum("ij,ij->i", normals, fac_centroid - cell_centroid))
        normals = normals * sgn[:, None]

        if gamma0 is None:
            g0 = np.ones(len(fac), dtype=bool)
        elif callable(gamma0):
            g0 = np.asarray(gamma0(fac_centroid, normals), dtype=bool)
        else:
            g0 = np.asarray(gamma0, dtype=bool)
            if g0.shape != (len(fac),):
                raise MeshError("gamma0 marker has wrong length")
        return cls(v, c, fac, owner, g0, normals, meas, vol)

    # -- derived geometry -------------------------------------------------

    @cached_property
    def grad_basis(self):
        """Gradients of the P1 hat functions, shape ``(nc, n+1, n)``."""
        v = self.vertices[self.cells]
        jac = v[:, 1:] - v[:, :1]  # (nc, n, n), rows are edge vectors
        inv = np.linalg.inv(jac)  # columns are gradients of lambda_1..lambda_n
        g = np.swapaxes(inv, 1, 2)
        g0 = -g.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g], axis=1)

    @cached_property
    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def facet_centroids(self):
        return self.vertices[self.facets].mean(axis=1)

    @cached_property
    def h(self):
        """Cell diameters."""
        v = self.vertices[self.cells]
        d = [np.linalg.norm(v[:, i] - v[:, j], axis=1) for i, j in itertools.combinations(range(self.dim + 1), 2)]
        return np.max(d, axis=0)

    @property
    def volume(self):
        return float(np.sum(self.volumes))

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.facets)

    @cached_property
    def gamma0_vertices(self):
        return np.unique(self.facets[self.gamma0])

    def checksum(self):
        import hashlib

        hsh = hashlib.sha256()
        for arr in (self.vertices, self.cells, self.facets, self.gamma0.astype(np.int8)):
            hsh.update(np.ascontiguousarray(arr).tobytes())
        return hsh.hexdigest()

    # -- point queries ----------------------------------------------------

    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.centroids)

    def locate(self, points, tol=1e-12):
        """Cell index and barycentric coordinates of each point (-1 outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(24, self.nc)
        _, cand = self._centroid_tree.query(pts, k=k)
        cand = np.asarray(cand).reshape(len(pts), k)
        cell = np.full(len(pts), -1, dtype=np.int64)
        bary = np.zeros((len(pts), self.dim + 1))
        todo = np.arange(len(pts))
        for j in range(k):
            if len(todo) == 0:
                break
            cj = cand[todo, j]
            lam = self._bary(pts[todo], cj)
            ok = lam.min(axis=1) >= -tol
            cell[todo[ok]] = cj[ok]
            bary[todo[ok]] = lam[ok]
            todo = todo[~ok]
        return cell, bary

    def _bary(self, pts, cells):
        v0 = self.vertices[self.cells[cells, 0]]
        g = self.grad_basis[cells]  # (m, n+1, n)
        lam = np.einsum("mkn,mn->mk", g[:, 1:], pts - v0)
        return np.hstack([1 - lam.sum(axis=1, keepdims=True), lam])

    def contains(self, points, tol=1e-12):
        return self.locate(points, tol)[0] >= 0

    def facet_distance(self, points, facet_ids=None):
        """Distance from each point to the union of the selected boundary facets."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ids = np.arange(self.nf) if facet_ids is None else np.asarray(facet_ids)
        if len(ids) == 0:
            return np.full(len(pts), np.inf)
        out = np.full(len(pts), np.inf)
        chunk = max(1, 2_000_000 // max(len(ids), 1))
        for s in range(0, len(pts), chunk):
            p = pts[s : s + chunk]
            if self.dim == 2:
                d = _segment_distance(p, self.vertices[self.facets[ids, 0]], self.vertices[self.facets[ids, 1]])
            else:
                tri = self.vertices[self.facets[ids]]
                d = _triangle_distance(p, tri[:, 0], tri[:, 1], tri[:, 2])
            out[s : s + chunk] = d.min(axis=1)
        return out

    def boundary_distance(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not np.all(self.contains(pts, tol=1e-10)):
            raise MeshError("point outside the closed domain")
        return self.facet_distance(pts)

    def refine(self):
        """Uniform midpoint subdivision (triangles only)."""
        if self.dim != 2:
            raise NotImplementedError("uniform refinement is implemented for n=2")
        v = list(map(tuple, self.vertices))
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                mid[key] = len(v)
                v.append(tuple(0.5 * (self.vertices[a] + self.vertices[b])))
            return mid[key]

        cells = []
        for a, b, c in self.cells:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            cells += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        facets, g0 = [], []
        for (a, b), mark in zip(self.facets, self.gamma0):
            m = midpoint(a, b)
            facets += [(a, m), (m, b)]
            g0 += [mark, mark]
        out = Mesh.from_arrays(np.array(v), np.array(cells), gamma0=np.array(g0), facets=np.array(facets))
        return out


def _facet_geometry(v, fac):
    n = v.shape[1]
    p = v[fac]
    if n == 2:
        t = p[:, 1] - p[:, 0]
        meas = np.linalg.norm(t, axis=1)
        nrm = np.stack([t[:, 1], -t[:, 0]], axis=1) / meas[:, None]
    elif n == 3:
        cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        meas = 0.5 * np.linalg.norm(cr, axis=1)
        nrm = cr / (2 * meas[:, None])
    else:
        raise MeshError("only n=2,3 supported")
    return nrm, meas


def _segment_distance(p, a, b):
    ab = b - a  # (f, 2)
    ap = p[:, None, :] - a[None]  # (m, f, 2)
    t = np.clip(np.einsum("mfi,fi->mf", ap, ab) / np.einsum("fi,fi->f", ab, ab), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - closest, axis=2)


def _triangle_distance(p, a, b, c):
    # closest point on triangle: inside-face projection else nearest edge
    nrm = np.cross(b - a, c - a)
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    ap = p[:, None, :] - a[None]
    h = np.einsum("mfi,fi->mf", ap, nrm)
    q = p[:, None, :] - h[..., None] * nrm[None]
    inside = np.ones(h.shape, dtype=bool)
    for x, y in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("mfi,fi->mf", np.cross(y - x, q - x[None]), nrm) >= 0
    d_face = np.where(inside, np.abs(h), np.inf)
    d_edge = np.minimum.reduce([_segment_distance3(p, x, y) for x, y in ((a, b), (b, c), (c, a))])
    return np.minimum(d_face, d_edge)


def _segment_distance3(p, a, b):
    ab = b - a
    ap = p[:, None, :] - a[None]
    t = np.clip(np.einsum("mfi,fi->mf", ap, ab) / np.einsum("fi,fi->f", ab, ab), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - closest, axis=2)


# ---------------------------------------------------------------------------
# generators


def _side_selector(widths, gamma0):
    n = len(widths)
    table = SIDES_2D if n == 2 else SIDES_3D
    if gamma0 in (None, "all"):
        return None
    names = [s.strip() for s in gamma0.split(",")] if isinstance(gamma0, str) else list(gamma0)
    for s in names:
        if s not in table:
            raise MeshError(f"unknown side {s!r}")

    def select(mid, normals):
        out = np.zeros(len(mid), dtype=bool)
        for s in names:
            axis, end = table[s]
            target = widths[axis] * end
            out |= np.isclose(mid[:, axis], target, atol=1e-12) & np.isclose(np.abs(normals[:, axis]), 1.0)
        return out

    return select


def gen_rectangle(widths, m, gamma0="all"):
    """Structured simplicial mesh of ``[0, w1] x ... x [0, wn]``.

    ``m`` is the number of subdivisions per axis (int or per-axis list).
    ``gamma0`` selects Dirichlet sides: ``"all"`` or names such as
    ``"bottom,top"`` (n=2) or ``"x0,z1"`` (n=3).
    """
    widths = [float(w) for w in widths]
    n = len(widths)
    if n not in (2, 3):
        raise MeshError("only n=2,3 supported")
    if any(w <= 0 for w in widths):
        raise MeshError("zero or negative width")
    ms = [int(m)] * n if np.isscalar(m) else [int(x) for x in m]
    if any(x < 1 for x in ms):
        raise MeshError("need at least one subdivision per axis")
    axes = [np.linspace(0.0, w, k + 1) for w, k in zip(widths, ms)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    shape = [k + 1 for k in ms]

    def idx(*ijk):
        return np.ravel_multi_index(ijk, shape)

    cells = []
    if n == 2:
        for i in range(ms[0]):
            for j in range(ms[1]):
                a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
                cells += [(a, b, c), (a, c, d)]
    else:
        # Kuhn subdivision of each cube into 6 tetrahedra
        for i in range(ms[0]):
            for j in range(ms[1]):
                for k in range(ms[2]):
                    base = np.array([i, j, k])
                    for perm in itertools.permutations(range(3)):
                        path = [base.copy()]
                        cur = base.copy()
                        for ax in perm:
                            cur = cur.copy()
                            cur[ax] += 1
                            path.append(cur)
                        cells.append(tuple(idx(*p) for p in path))
    return Mesh.from_arrays(grid, np.array(cells), gamma0=_side_selector(widths, gamma0))


def gen_lshape(m, gamma0="all"):
    """L-shaped domain ``[0,1]^2 minus [1/2,1]^2``; ``m`` even, cells per unit."""
    if m < 2 or m % 2:
        raise MeshError("m must be an even integer >= 2")
    full = gen_rectangle([1.0, 1.0], m)
    keep = ~((full.centroids[:, 0] > 0.5) & (full.centroids[:, 1] > 0.5))
    cells = full.cells[keep]
    used = np.unique(cells)
    remap = -np.ones(full.nv, dtype=np.int64)
    remap[used] = np.arange(len(used))
    if gamma0 not in (None, "all"):
        raise MeshError("L-shape supports gamma0='all' only")
    return Mesh.from_arrays(full.vertices[used], remap[cells])


# ---------------------------------------------------------------------------
# plain-text format


def write_mesh(mesh: Mesh, path):
    n = mesh.dim
    with open(path, "w") as fh:
        fh.write(f"{n} {mesh.nv} {mesh.nc} {mesh.nf}\n")
        for x in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in x) + "\n")
        for c in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")
        for f, g in zip(mesh.facets, mesh.gamma0):
            fh.write(" ".join(str(int(i)) for i in f) + f" {int(g)}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    try:
        n, nv, nc, nf = (int(x) for x in lines[0].split())
        verts = np.array([[float(x) for x in ln.split()] for ln in lines[1 : 1 + nv]])
        cells = np.array([[int(x) for x in ln.split()] for ln in lines[1 + nv : 1 + nv + nc]])
        fl = np.array([[int(x) for x in ln.split()] for ln in lines[1 + nv + nc : 1 + nv + nc + nf]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if verts.shape != (nv, n) or cells.shape != (nc, n + 1) or fl.shape != (nf, n + 1):
        raise MeshError(f"malformed mesh file {path}: inconsistent sizes")
    return Mesh.from_arrays(verts, cells, gamma0=fl[:, -1] == 1, facets=fl[:, :-1])


# ---------------------------------------------------------------------------
# boundary cover with inward translations


@dataclass(eq=False)
class CoverPatch:
    kind: str  # "interior", "vertex" or "edge"
    direction: np.ndarray  # inward unit vector (zero for the interior patch)
    vertex: np.ndarray | None = None
    facet_ids: np.ndarray | None = None
    radius: float = 0.0


@dataclass(eq=False)
class Cover:
    """Partition of unity over a polygon with one inward direction per patch.

    Moving the support of boundary patch ``j`` by ``direction_j / k`` keeps
    it inside the domain for every ``k >= k0``, at distance at least
    ``depth / k`` from the boundary.
    """

    mesh: Mesh
    patches: list
    collar: float
    k0: int = 0
    depth: float = 0.0
    style: str = "collar"
    star: "StarGeometry | None" = None
    _samples: tuple = field(default=None, repr=False)

    def weights(self, points):
        """Partition-of-unity values, shape ``(npoints, npatches)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.style == "star":
            return self.star.weights(pts)
        d = self.mesh.facet_distance(pts)
        beta = np.clip(2.0 - 2.0 * d / self.collar, 0.0, 1.0)
        out = np.zeros((len(pts), len(self.patches)))
        vert = [i for i, p in enumerate(self.patches) if p.kind == "vertex"]
        edge = [i for i, p in enumerate(self.patches) if p.kind == "edge"]
        w_sum = np.zeros(len(pts))
        for i in vert:
            p = self.patches[i]
            w = np.clip(2.0 - 2.0 * np.linalg.norm(pts - p.vertex, axis=1) / p.radius, 0.0, 1.0)
            out[:, i] = beta * w
            w_sum += w
        if edge:
            dist = np.stack([self.mesh.facet_distance(pts, self.patches[i].facet_ids) for i in edge], axis=1)
            nearest = np.argmin(dist, axis=1)
            for col, i in enumerate(edge):
                out[:, i] = beta * (1.0 - w_sum) * (nearest == col)
        out[:, 0] = 1.0 - beta
        return out

    @property
    def directions(self):
        return np.array([p.direction for p in self.patches])

    def translation_depth(self, k):
        """Smallest boundary distance of the translated boundary-patch supports."""
        samples, w = self._samples
        depth = np.inf
        for j, p in enumerate(self.patches):
            if p.kind == "interior":
                continue
            sel = samples[w[:, j] > 0]
            if len(sel) == 0:
                continue
            y = sel + p.direction / k
            if not np.all(self.mesh.contains(y)):
                return 0.0
            depth = min(depth, float(self.mesh.facet_distance(y).min()))
        return depth


@dataclass(eq=False)
class StarGeometry:
    """Gauge and corner interpolation for a polygon star-shaped about ``center``.

    Corners are ordered by angle about the centre; side ``i`` joins corner
    ``i`` to corner ``i+1``. The gauge ``g`` is 0 at the centre and 1 on the
    boundary, linear on each sector. Corner weights interpolate linearly
    along the side hit by the ray from the centre (constant on the first and
    last ``plateau`` fraction of the side), and the boundary share
    ramps from 0 at ``g = g0`` to 1 at ``g = g1``.
    """

    center: np.ndarray
    corners: np.ndarray       # (N, 2), counter-clockwise about the centre
    normals: np.ndarray       # (N, 2) outward normal of side i
    offsets: np.ndarray       # (N,) (corner_i - center) . normal_i > 0
    g0: float = 0.1
    g1: float = 0.7
    plateau: float = 0.25

    def gauge(self, pts):
        """Gauge and sector index of each point."""
        rel = pts - self.center
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        sector = (np.searchsorted(self.angles, ang, side="right") - 1) % len(self.corners)
        g = np.einsum("pi,pi->p", rel, self.normals[sector]) / self.offsets[sector]
        return g, sector

    @property
    def angles(self):
        rel = self.corners - self.center
        return np.arctan2(rel[:, 1], rel[:, 0])

    def weights(self, pts):
        g, sec = self.gauge(pts)
        n = len(self.corners)
        beta = np.clip((g - self.g0) / (self.g1 - self.g0), 0.0, 1.0)
        a = self.corners[sec]
        b = self.corners[(sec + 1) % n]
        rel = pts - self.center
        gs = np.where(g > 0, g, 1.0)
        hit = self.center + rel / gs[:, None]
        ab = b - a
        t = np.einsum("pi,pi->p", hit - a, ab) / np.einsum("pi,pi->p", ab, ab)
        # plateaus keep each corner patch away from the neighbouring corners
        t = np.clip((t - self.plateau) / (1 - 2 * self.plateau), 0.0, 1.0)
        out = np.zeros((len(pts), n + 1))
        rows = np.arange(len(pts))
        out[rows, 1 + sec] += beta * (1 - t)
        out[rows, 1 + (sec + 1) % n] += beta * t
        out[:, 0] = 1.0 - beta
        return out


def _kernel_center(mesh: Mesh):
    """Point maximising the smallest signed distance to every boundary line.

    Positive margin means the polygon is star-shaped about it with every
    facet seen from the inside.
    """
    nu = mesh.normals
    off = np.einsum("fi,fi->f", nu, mesh.facet_centroids)
    # maximise r subject to nu_f . c + r <= off_f
    a_ub = np.hstack([nu, np.ones((len(nu), 1))])
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=off,
                  bounds=[(None, None), (None, None), (0.0, None)], method="highs")
    if res.status != 0 or res.x[2] <= 0:
        return None, 0.0
    r = float(res.x[2])
    # among points with half the best margin, take the one nearest the centroid (max norm)
    cen = np.einsum("c,ci->i", mesh.volumes, mesh.centroids) / mesh.volumes.sum()
    a2 = np.vstack([np.hstack([nu, np.zeros((len(nu), 1))]),
                    [[1, 0, -1], [-1, 0, -1], [0, 1, -1], [0, -1, -1]]])
    b2 = np.concatenate([off - 0.5 * r, [cen[0], -cen[0], cen[1], -cen[1]]])
    res2 = linprog(c=[0.0, 0.0, 1.0], A_ub=a2, b_ub=b2,
                   bounds=[(None, None), (None, None), (0.0, None)], method="highs")
    c = res2.x[:2] if res2.status == 0 else res.x[:2]
    margin = float(np.min(off - nu @ c))
    return c, margin


def _polygon_pieces(mesh: Mesh):
    """Corners (with adjacent normals) and straight boundary segments."""
    nbr = {}
    for fi, f in enumerate(mesh.facets):
        for v in f:
            nbr.setdefault(int(v), []).append(fi)
    corners = {}
    for v, fs in nbr.items():
        if len(fs) != 2:
            raise MeshError("boundary is not a simple polygon")
        n1, n2 = mesh.normals[fs[0]], mesh.normals[fs[1]]
        if np.linalg.norm(n1 - n2) > 1e-9:
            corners[v] = (n1, n2)
    # group facets into straight segments between corners
    seen = np.zeros(mesh.nf, dtype=bool)
    segments = []
    for start in range(mesh.nf):
        if seen[start]:
            continue
        group = [start]
        seen[start] = True
        stack = [start]
        while stack:
            f = stack.pop()
            for v in mesh.facets[f]:
                if int(v) in corners:
                    continue
                for g in nbr[int(v)]:
                    if not seen[g]:
                        seen[g] = True
                        group.append(g)
                        stack.append(g)
        segments.append(np.array(sorted(group)))
    return corners, segments


def build_cover(mesh: Mesh, k_max=256, style="auto"):
    """Boundary patches with inward directions plus the interior patch.

    ``style="star"``: one patch per corner, translated towards a centre the
    polygon is star-shaped about; the weights vary on the scale of the
    domain. ``style="collar"``: vertex and edge patches in a thin collar
    (works for any simple polygon). ``"auto"`` picks ``star`` when possible.

    The returned cover carries the validated ``k0`` and translation depth.
    Raises :class:`MeshError` when no ``k <= k_max`` passes validation.
    """
    if mesh.dim != 2:
        raise NotImplementedError("boundary covers are built for polygons (n=2)")
    if style not in ("auto", "star", "collar"):
        raise ValueError(f"unknown cover style {style!r}")
    corners, segments = _polygon_pieces(mesh)
    if style != "collar":
        center, margin = _kernel_center(mesh)
        scale = math.sqrt(mesh.volume)
        if center is not None and margin > 1e-3 * scale:
            cover = _star_cover(mesh, corners, center, margin)
            cover.k0, cover.depth = _validate_cover(cover, k_max)
            return cover
        if style == "star":
            raise MeshError("polygon is not star-shaped about any interior point")
    seg_len = [mesh.facet_measures[s].sum() for s in segments]
    seg_of_facet = np.empty(mesh.nf, dtype=np.int64)
    for i, s in enumerate(segments):
        seg_of_facet[s] = i

    patches = [CoverPatch("interior", np.zeros(2))]
    sines = []
    radii = []
    for v, (n1, n2) in sorted(corners.items()):
        fs = [fi for fi in range(mesh.nf) if v in mesh.facets[fi]]
        r = 0.3 * min(seg_len[seg_of_facet[f]] for f in fs)
        d = -(n1 + n2)
        d = d / np.linalg.norm(d)
        x = mesh.vertices[v]
        # interior angle from the two edge directions leaving the corner
        tangents = []
        for f in fs:
            other = mesh.facets[f][mesh.facets[f] != v][0]
            t = mesh.vertices[other] - x
            tangents.append(t / np.linalg.norm(t))
        angle = math.acos(np.clip(np.dot(*tangents), -1, 1))
        if mesh.contains(x + 1e-6 * d)[0] and np.dot(d, tangents[0] + tangents[1]) < 0:
            angle = 2 * math.pi - angle
        sines.append(math.sin(min(angle, math.pi) / 2) if angle < math.pi else 1.0)
        radii.append(r)
        patches.append(CoverPatch("vertex", d, vertex=x.copy(), radius=r))
    verts = [p.vertex for p in patches if p.kind == "vertex"]
    for a, b in itertools.combinations(range(len(verts)), 2):
        if np.linalg.norm(verts[a] - verts[b]) <= radii[a] + radii[b]:
            raise MeshError("corner patches overlap; boundary features too close")
    for s in segments:
        patches.append(CoverPatch("edge", -mesh.normals[s[0]].copy(), facet_ids=s))
    collar = 0.45 * min(r * sn for r, sn in zip(radii, sines)) if radii else 0.1 * min(seg_len)
    cover = Cover(mesh, patches, collar)
    cover.k0, cover.depth = _validate_cover(cover, k_max)
    return cover


def _star_cover(mesh: Mesh, corners, center, margin):
    pos = np.array([mesh.vertices[v] for v in corners])
    ang = np.arctan2(pos[:, 1] - center[1], pos[:, 0] - center[0])
    order = np.argsort(ang)
    pos = pos[order]
    n = len(pos)
    nxt = np.roll(pos, -1, axis=0)
    tang = nxt - pos
    normals = np.stack([tang[:, 1], -tang[:, 0]], axis=1)  # outward for counter-clockwise order
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    offsets = np.einsum("fi,fi->f", pos - center, normals)
    star = StarGeometry(center.copy(), pos, normals, offsets)
    patches = [CoverPatch("interior", np.zeros(2))]
    for x in pos:
        d = center - x
        patches.append(CoverPatch("vertex", d / np.linalg.norm(d), vertex=x.copy()))
    return Cover(mesh, patches, collar=margin, style="star", star=star)


def _validate_cover(cover: Cover, k_max):
    mesh = cover.mesh
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    step = cover.collar / (6 if cover.style == "collar" else 12)
    axes = [np.arange(a, b + step / 2, step) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    # boundary samples
    t = np.linspace(0.0, 1.0, 9)
    a, b = mesh.vertices[mesh.facets[:, 0]], mesh.vertices[mesh.facets[:, 1]]
    bnd = (a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
    grid = grid[mesh.contains(grid)]
    samples = np.vstack([grid, bnd])
    cover._samples = (samples, cover.weights(samples))
    ks = sorted({int(round(x)) for x in np.geomspace(1, k_max, 40)})
    ok_from = None
    depth = np.inf
    for k in reversed(ks):
        depth_k = cover.translation_depth(k) * k
        if depth_k <= 0:
            break
        ok_from = k
        depth = min(depth, depth_k)
    if ok_from is None:
        raise MeshError("cover validation failed for every k")
    return ok_from, float(depth)
