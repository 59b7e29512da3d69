"""Catmull-Clark subdivision surfaces on quad control meshes.

Open boundaries are handled by a layer of ghost vertices obtained by linear
extrapolation across each boundary edge (``g = 2 b - i``).  Ghost vertices are
not degrees of freedom; they are rows of a sparse prolongation matrix ``P``
that maps real control vertices to the extended vertex set, so every real
face sees a complete one-ring.  With this extrapolation the limit surface
interpolates the boundary polygon in the cross-boundary direction and has
zero cross-boundary curvature there.

Faces whose four vertices are regular (valence 4) are bicubic B-spline
patches with a 16-point stencil.  A face with one extraordinary vertex is
evaluated by repeated local Catmull-Clark refinement of its one-ring: after
``k`` steps the point lies in a regular sub-patch unless it sits at the
extraordinary vertex itself, where the limit-position mask is used.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

GAUSS3 = (np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)]), np.array([5.0, 8.0, 5.0]) / 18.0)

# sub-patch offsets of the four children of a face, child k at corner k
_CHILD_OFFSETS = np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
MAX_EVAL_DEPTH = 40


class MeshError(ValueError):
    pass


def bspline_basis(t):
    """Uniform cubic B-spline basis on one span with first and second derivatives."""
    t = np.asarray(t, float)
    s = 1.0 - t
    b = np.stack([s ** 3, 3 * t ** 3 - 6 * t ** 2 + 4, -3 * t ** 3 + 3 * t ** 2 + 3 * t + 1, t ** 3], -1) / 6.0
    db = np.stack([-0.5 * s ** 2, 1.5 * t ** 2 - 2 * t, -1.5 * t ** 2 + t + 0.5, 0.5 * t ** 2], -1)
    ddb = np.stack([s, 3 * t - 2, -3 * t + 1, t], -1)
    return b, db, ddb


def bspline_patch(u, v):
    """Bicubic basis on the 4x4 stencil (index ``4 j + i``, ``i`` along ``u``).

    Returns ``N (..., 16)``, ``dN (..., 2, 16)`` and ``ddN (..., 3, 16)`` with
    second derivatives ordered ``uu, uv, vv``.
    """
    bu, dbu, ddbu = bspline_basis(u)
    bv, dbv, ddbv = bspline_basis(v)

    def outer(a, b):
        return (b[..., :, None] * a[..., None, :]).reshape(*a.shape[:-1], 16)

    N = outer(bu, bv)
    dN = np.stack([outer(dbu, bv), outer(bu, dbv)], -2)
    ddN = np.stack([outer(ddbu, bv), outer(dbu, dbv), outer(bu, ddbv)], -2)
    return N, dN, ddN


def _edge_faces(faces):
    """Map undirected edge -> list of faces, and directed edge -> face."""
    directed = {}
    undirected: dict[tuple[int, int], list[int]] = {}
    for f, quad in enumerate(faces):
        for k in range(4):
            a, b = int(quad[k]), int(quad[(k + 1) % 4])
            if (a, b) in directed:
                raise MeshError(f"non-manifold or inconsistently oriented edge ({a}, {b})")
            directed[(a, b)] = f
            undirected.setdefault((min(a, b), max(a, b)), []).append(f)
    for e, fs in undirected.items():
        if len(fs) > 2:
            raise MeshError(f"non-manifold edge {e} shared by {len(fs)} faces")
    return directed, undirected


def grid_stencil(faces, directed, face: int) -> np.ndarray | None:
    """16 vertex ids of the 4x4 B-spline stencil around a regular face.

    Grid coordinates are propagated face by face across shared edges, so
    the result follows the face's own orientation: ``faces[face][0]`` is
    grid point (1, 1) and ``faces[face][1]`` is (2, 1).  Returns None when
    the neighbourhood is incomplete or not a regular grid.
    """
    start = faces[face]
    coords = {int(start[0]): (1, 1), int(start[1]): (2, 1), int(start[2]): (2, 2), int(start[3]): (1, 2)}
    grid = -np.ones((4, 4), dtype=np.int64)
    for vid, (i, j) in coords.items():
        grid[j, i] = vid
    known_faces = {face}
    queue = [face]
    while queue:
        f = queue.pop()
        quad = faces[f]
        for k in range(4):
            a, b = int(quad[k]), int(quad[(k + 1) % 4])
            g = directed.get((b, a))
            if g is None or g in known_faces:
                continue
            pa, pb = np.array(coords[a]), np.array(coords[b])
            d = pa - pb
            left = np.array([-d[1], d[0]])
            other = faces[g]
            kb = list(other).index(b)
            na, nb = int(other[(kb + 2) % 4]), int(other[(kb + 3) % 4])
            qa, qb = pa + left, pb + left
            if min(qa.min(), qb.min()) < 0 or max(qa.max(), qb.max()) > 3:
                continue
            for vid, q in ((na, qa), (nb, qb)):
                q = (int(q[0]), int(q[1]))
                if vid in coords and coords[vid] != q:
                    return None
                if grid[q[1], q[0]] not in (-1, vid):
                    return None
                coords[vid] = q
                grid[q[1], q[0]] = vid
            known_faces.add(g)
            queue.append(g)
    if np.any(grid < 0) or len(set(grid.ravel().tolist())) != 16:
        return None
    return grid.ravel()


@dataclass
class LocalPatch:
    """A small quad mesh whose vertices are linear combinations of a fixed stencil."""
    coeffs: np.ndarray          # (nloc, nstencil)
    faces: np.ndarray           # (nf, 4) local ids
    target: int                 # face index of interest, extraordinary vertex at its corner 0

    def subdivide(self) -> "LocalPatch":
        """One Catmull-Clark step; returns the one-ring patch of child 0 of ``target``.

        Also stores the 16-point coefficient matrices of the three regular
        children of ``target`` in ``self.regular_children``.
        """
        C = self.coeffs
        faces = self.faces
        directed, undirected = _edge_faces(faces)
        nf = len(faces)
        fpts = C[faces].mean(axis=1)
        new_rows = []
        index = {}

        def add(key, row):
            index[key] = len(new_rows)
            new_rows.append(row)

        for f in range(nf):
            add(("f", f), fpts[f])
        for e, fs in undirected.items():
            if len(fs) == 2:
                add(("e", e), 0.25 * (C[e[0]] + C[e[1]] + fpts[fs[0]] + fpts[fs[1]]))
        vfaces: dict[int, list[int]] = {}
        vedges: dict[int, list[int]] = {}
        for f, quad in enumerate(faces):
            for k in range(4):
                vfaces.setdefault(int(quad[k]), []).append(f)
        for (a, b), fs in undirected.items():
            vedges.setdefault(a, []).append(b)
            vedges.setdefault(b, []).append(a)
        for v, fs in vfaces.items():
            nbrs = vedges[v]
            closed = len(fs) == len(nbrs) and all(len(undirected[(min(v, w), max(v, w))]) == 2 for w in nbrs)
            if not closed:
                continue
            n = len(fs)
            F = fpts[fs].mean(axis=0)
            R = 0.5 * (C[v] + C[nbrs].mean(axis=0))
            add(("v", v), (F + 2 * R + (n - 3) * C[v]) / n)

        def key_e(a, b):
            return ("e", (min(a, b), max(a, b)))

        new_faces = []
        child_of_target = [None] * 4
        for f, quad in enumerate(faces):
            for k in range(4):
                v0 = int(quad[k])
                vn = int(quad[(k + 1) % 4])
                vp = int(quad[(k - 1) % 4])
                keys = [("v", v0), key_e(v0, vn), ("f", f), key_e(vp, v0)]
                if all(key in index for key in keys):
                    ids = [index[key] for key in keys]
                    # rotate so the child's first vertex is at the parent's lower-left corner
                    ids = ids[-k:] + ids[:-k] if k else ids
                    if f == self.target:
                        child_of_target[k] = len(new_faces)
                    new_faces.append(ids)
        if any(c is None for c in child_of_target):
            raise MeshError("one-ring too small to refine the extraordinary face")
        coeffs = np.array(new_rows)
        new_faces = np.array(new_faces, dtype=np.int64)
        ndirected, _ = _edge_faces(new_faces)
        regular = []
        for k in (1, 2, 3):
            st = grid_stencil(new_faces, ndirected, child_of_target[k])
            if st is None:
                raise MeshError("regular child patch has an irregular neighbourhood")
            regular.append(coeffs[st])
        self.regular_children = regular
        return _one_ring_patch(coeffs, new_faces, child_of_target[0])

    @cached_property
    def limit_position_mask(self) -> np.ndarray:
        """Limit-position weights of the extraordinary vertex (corner 0 of ``target``)."""
        ev = int(self.faces[self.target][0])
        ring = [q for q in self.faces if ev in q]
        n = len(ring)
        row = n * n * self.coeffs[ev]
        for q in ring:
            q = list(q)
            k = q.index(ev)
            a, b, c = q[(k + 1) % 4], q[(k + 2) % 4], q[(k + 3) % 4]
            # each edge neighbour is visited by two faces
            row = row + 2 * self.coeffs[a] + 2 * self.coeffs[c] + self.coeffs[b]
        return row / (n * (n + 5))


def _ring(faces, target):
    """Vertices and faces of the one-ring of ``target``, reindexed locally."""
    verts = set(int(v) for v in faces[target])
    hit = np.isin(faces, list(verts)).any(axis=1)
    ring_faces = np.flatnonzero(hit)
    used = np.unique(faces[ring_faces])
    local = np.searchsorted(used, faces[ring_faces])
    return used, local, int(np.flatnonzero(ring_faces == target)[0])


def _one_ring_patch(coeffs, faces, target) -> LocalPatch:
    used, local, t = _ring(faces, target)
    return LocalPatch(coeffs[used], local, t)


class ExtraordinaryFace:
    """Evaluator for a face with one extraordinary vertex at its corner 0."""

    def __init__(self, stencil: np.ndarray, patch: LocalPatch):
        self.stencil = stencil
        self._levels = [patch]

    def level(self, k: int) -> LocalPatch:
        """Patch after ``k`` refinements, with its regular children available."""
        while len(self._levels) < k + 2:
            self._levels.append(self._levels[-1].subdivide())
        return self._levels[k]

    def evaluate(self, u: float, v: float):
        """Basis values and derivatives over the stencil at ``(u, v)``."""
        ns = len(self.stencil)
        scale = 1.0
        k = 0
        while True:
            if max(u, v) < 2.0 ** -(MAX_EVAL_DEPTH - k) or k >= MAX_EVAL_DEPTH:
                patch = self.level(k)
                N = patch.limit_position_mask
                return N, np.full((2, ns), np.nan), np.full((3, ns), np.nan)
            patch = self.level(k)
            if u >= 0.5 or v >= 0.5:
                if v < 0.5:
                    child, lu, lv = 0, 2 * u - 1, 2 * v
                elif u >= 0.5:
                    child, lu, lv = 1, 2 * u - 1, 2 * v - 1
                else:
                    child, lu, lv = 2, 2 * u, 2 * v - 1
                M = patch.regular_children[child]
                Nr, dNr, ddNr = bspline_patch(np.array(lu), np.array(lv))
                scale *= 2.0
                return Nr @ M, scale * (dNr @ M), scale * scale * (ddNr @ M)
            u, v = 2 * u, 2 * v
            scale *= 2.0
            k += 1

    def quadrature(self, depth: int):
        """Gauss points on the regular sub-patches of ``depth`` refinement levels.

        The innermost child touching the extraordinary vertex is integrated
        with its own 3x3 Gauss points, evaluated by deeper refinement.
        """
        g, gw = GAUSS3
        Ns, dNs, ddNs, ws, pts = [], [], [], [], []
        for k in range(depth):
            patch = self.level(k)
            h = 2.0 ** -(k + 1)
            for child, off in zip(range(3), _CHILD_OFFSETS[1:]):
                M = patch.regular_children[child]
                for j in range(3):
                    for i in range(3):
                        Nr, dNr, ddNr = bspline_patch(np.array(g[i]), np.array(g[j]))
                        Ns.append(Nr @ M)
                        dNs.append((dNr @ M) / h)
                        ddNs.append((ddNr @ M) / h ** 2)
                        ws.append(gw[i] * gw[j] * h * h)
                        pts.append((2.0 ** -k) * off + h * np.array([g[i], g[j]]))
        h = 2.0 ** -depth
        for j in range(3):
            for i in range(3):
                u, v = h * g[i], h * g[j]
                N, dN, ddN = self.evaluate(u, v)
                Ns.append(N)
                dNs.append(dN)
                ddNs.append(ddN)
                ws.append(gw[i] * gw[j] * h * h)
                pts.append(np.array([u, v]))
        return np.array(Ns), np.array(dNs), np.array(ddNs), np.array(ws), np.array(pts)


@dataclass
class ShellMesh:
    """Quad control mesh of a subdivision surface.

    ``faces`` are counter-clockwise vertex quadruples.  Faces containing an
    extraordinary vertex are rotated at construction so that vertex comes
    first; the parametric frame of face ``f`` runs ``u`` from ``faces[f][0]``
    to ``faces[f][1]`` and ``v`` from ``faces[f][0]`` to ``faces[f][3]``.
    """
    vertices: np.ndarray
    faces: np.ndarray
    depth: int = 3
    ghost_faces: np.ndarray = field(init=False, repr=False)
    P: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, float).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 4)
        if faces.min() < 0 or faces.max() >= len(self.vertices):
            raise MeshError("face references an unknown vertex")
        self.faces = faces
        self._build_extension()
        self._classify()

    # topology -----------------------------------------------------------
    def _build_extension(self):
        faces = self.faces
        nv = len(self.vertices)
        directed, undirected = _edge_faces(faces)
        self._directed_real = directed
        boundary = [(a, b) for (a, b) in directed if (b, a) not in directed]
        vface_count = np.bincount(faces.ravel(), minlength=nv)
        bverts = sorted({v for e in boundary for v in e})
        self.boundary_vertices = np.array(bverts, dtype=np.int64)
        for v in bverts:
            if vface_count[v] > 2:
                raise MeshError(f"boundary vertex {v} has {vface_count[v]} faces; only straight "
                                "boundary (2 faces) and convex corner (1 face) vertices are supported")
        rows: list[dict[int, float]] = [{i: 1.0} for i in range(nv)]
        ghost_of: dict[tuple[int, int], int] = {}

        def ghost(v, w):
            """Ghost vertex 2 v - w, shared between the faces that produce it."""
            key = (v, w)
            if key not in ghost_of:
                ghost_of[key] = len(rows)
                rows.append({v: 2.0, w: -1.0})
            return ghost_of[key]

        def other_neighbour(face, v, partner):
            q = list(faces[face])
            k = q.index(v)
            n1, n2 = q[(k + 1) % 4], q[(k - 1) % 4]
            return n2 if n1 == partner else n1

        ghost_faces = []
        edge_ghosts = {}
        for a, b in boundary:
            f = directed[(a, b)]
            ga = ghost(a, other_neighbour(f, a, b))
            gb = ghost(b, other_neighbour(f, b, a))
            ghost_faces.append([b, a, ga, gb])
            edge_ghosts[(a, b)] = (ga, gb)
        for v in bverts:
            if vface_count[v] != 1:
                continue
            f = int(np.flatnonzero(np.any(faces == v, axis=1))[0])
            q = list(faces[f])
            k = q.index(v)
            nxt, prv = q[(k + 1) % 4], q[(k - 1) % 4]
            g_out = edge_ghosts[(v, nxt)][0]       # across edge v->nxt
            g_in = edge_ghosts[(prv, v)][1]        # across edge prv->v
            g_prv = edge_ghosts[(prv, v)][0]
            corner = len(rows)
            row: dict[int, float] = {}
            for src, wgt in ((g_in, 2.0), (g_prv, -1.0)):
                for c, val in rows[src].items():
                    row[c] = row.get(c, 0.0) + wgt * val
            rows.append(row)
            ghost_faces.append([v, g_in, corner, g_out])
        n_ext = len(rows)
        r, c, d = [], [], []
        for i, row in enumerate(rows):
            for j, val in row.items():
                if val != 0.0:
                    r.append(i)
                    c.append(j)
                    d.append(val)
        self.P = sp.csr_matrix((d, (r, c)), shape=(n_ext, nv))
        self.ghost_faces = np.array(ghost_faces, dtype=np.int64).reshape(-1, 4)
        self.ext_faces = np.concatenate([faces, self.ghost_faces])
        self.ext_directed, _ = _edge_faces(self.ext_faces)

    def _classify(self):
        ext = self.ext_faces
        n_ext = self.P.shape[0]
        valence = np.bincount(ext.ravel(), minlength=n_ext)
        real_v = len(self.vertices)
        self.valence = valence[:real_v]
        # a real vertex is interior in the extended mesh; count its faces there
        self.extraordinary = np.flatnonzero(self.valence != 4)
        ev_set = set(self.extraordinary.tolist())
        self.face_kind = np.zeros(len(self.faces), dtype=np.int64)  # 0 regular, n>0 valence of EV
        for f, quad in enumerate(self.faces):
            evs = [k for k, v in enumerate(quad) if int(v) in ev_set]
            if len(evs) > 1:
                raise MeshError(f"face {f} has {len(evs)} extraordinary vertices; refine the control mesh")
            if evs:
                k = evs[0]
                self.face_kind[f] = int(self.valence[int(quad[k])])
                self.faces[f] = np.roll(quad, -k)
        self.ext_faces[: len(self.faces)] = self.faces
        self.ext_directed, _ = _edge_faces(self.ext_faces)
        self._stencils = {}
        self._ev_eval = {}
        for f in range(len(self.faces)):
            if self.face_kind[f] == 0:
                st = grid_stencil(self.ext_faces, self.ext_directed, f)
                if st is None:
                    raise MeshError(f"face {f} has an incomplete one-ring")
                self._stencils[f] = st
            else:
                used, local, target = _ring(self.ext_faces, f)
                patch = LocalPatch(np.eye(len(used)), local, target)
                self._stencils[f] = used
                self._ev_eval[f] = ExtraordinaryFace(used, patch)

    # queries ------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def stencil(self, f: int) -> np.ndarray:
        """Extended-vertex ids influencing face ``f``."""
        return self._stencils[f]

    def ext_positions(self, vertices=None) -> np.ndarray:
        x = self.vertices if vertices is None else np.asarray(vertices, float).reshape(-1, 3)
        return self.P @ x

    def basis_ext(self, f: int, u: float, v: float):
        """Basis (and derivatives) over ``stencil(f)`` at a point of face ``f``."""
        if self.face_kind[f] == 0:
            N, dN, ddN = bspline_patch(np.array(u), np.array(v))
            return N, dN, ddN
        return self._ev_eval[f].evaluate(float(u), float(v))

    def basis_real(self, f: int, u: float, v: float):
        """Basis over real control vertices: (vertex ids, N, dN, ddN)."""
        N, dN, ddN = self.basis_ext(f, u, v)
        Psub = self.P[self.stencil(f)]
        cols = np.unique(Psub.indices)
        Pd = Psub[:, cols].toarray()
        with np.errstate(invalid="ignore"):
            return cols, N @ Pd, dN @ Pd, ddN @ Pd

    def with_vertices(self, vertices) -> "ShellMesh":
        """Same topology, new control positions (topology data is shared)."""
        new = object.__new__(ShellMesh)
        new.__dict__.update(self.__dict__)
        new.vertices = np.asarray(vertices, float).reshape(-1, 3)
        return new

    @cached_property
    def quadrature(self) -> "Quadrature":
        return build_quadrature(self)

    def face_point(self, f, u, v, vertices=None):
        X = self.ext_positions(vertices)[self.stencil(f)]
        N, dN, ddN = self.basis_ext(f, u, v)
        return N @ X, dN @ X, ddN @ X

    def diameter(self) -> float:
        return float(np.linalg.norm(np.ptp(self.vertices, axis=0)))

    def ring_neighbours(self, v: int) -> np.ndarray:
        """Real vertices sharing an edge with ``v``."""
        nb = set()
        for (a, b) in self._directed_real:
            if a == v:
                nb.add(b)
            elif b == v:
                nb.add(a)
        return np.array(sorted(nb), dtype=np.int64)


@dataclass
class QuadGroup:
    """Faces sharing quadrature size and stencil size, stored as stacked arrays."""
    faces: np.ndarray     # (ne,)
    stencils: np.ndarray  # (ne, ns) extended vertex ids
    N: np.ndarray         # (ne, nq, ns)
    dN: np.ndarray        # (ne, nq, 2, ns)
    ddN: np.ndarray       # (ne, nq, 3, ns)
    w: np.ndarray         # (ne, nq) parametric weights
    points: np.ndarray    # (ne, nq, 2) face parameters of the points


@dataclass
class Quadrature:
    groups: list


def build_quadrature(mesh: ShellMesh) -> Quadrature:
    g, gw = GAUSS3
    uu, vv = np.meshgrid(g, g)
    uu, vv = uu.ravel(), vv.ravel()
    wreg = np.outer(gw, gw).ravel()
    Nr, dNr, ddNr = bspline_patch(uu, vv)
    buckets: dict[tuple[int, int], list] = {}
    for f in range(mesh.n_faces):
        if mesh.face_kind[f] == 0:
            item = (f, mesh.stencil(f), Nr, dNr, ddNr, wreg, np.stack([uu, vv], -1))
        else:
            N, dN, ddN, w, pts = mesh._ev_eval[f].quadrature(mesh.depth)
            item = (f, mesh.stencil(f), N, dN, ddN, w, pts)
        buckets.setdefault((len(item[5]), len(item[1])), []).append(item)
    groups = []
    for key in sorted(buckets):
        items = buckets[key]
        groups.append(QuadGroup(
            np.array([it[0] for it in items]),
            np.array([it[1] for it in items]),
            np.array([it[2] for it in items]),
            np.array([it[3] for it in items]),
            np.array([it[4] for it in items]),
            np.array([it[5] for it in items]),
            np.array([it[6] for it in items]),
        ))
    return Quadrature(groups)


def limit_evaluate(mesh: ShellMesh, face: int, theta):
    """Limit position and basis functions at parameter ``theta`` of ``face``.

    Returns ``(position, vertex_ids, N, dN, ddN)`` with the basis restricted to
    the real control vertices that influence the point.
    """
    u, v = float(theta[0]), float(theta[1])
    if not (-1e-12 <= u <= 1 + 1e-12 and -1e-12 <= v <= 1 + 1e-12):
        raise MeshError(f"parameter {theta} outside [0, 1]^2")
    u, v = min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0)
    ids, N, dN, ddN = mesh.basis_real(face, u, v)
    return N @ mesh.vertices[ids], ids, N, dN, ddN


# ---------------------------------------------------------------------------
# mesh generators


def grid_mesh(nx: int, ny: int, size=(1.0, 1.0), origin=(0.0, 0.0, 0.0), *, plane: str = "xy", depth: int = 3) -> ShellMesh:
    """Flat ``nx`` x ``ny`` quad grid of control vertices spanning ``size``."""
    xs = np.linspace(0.0, size[0], nx + 1)
    ys = np.linspace(0.0, size[1], ny + 1)
    X, Y = np.meshgrid(xs, ys)
    a, b = X.ravel(), Y.ravel()
    z = np.zeros_like(a)
    axes = {"xy": (a, b, z), "xz": (a, z, b), "yz": (z, a, b)}[plane]
    verts = np.stack(axes, -1) + np.asarray(origin, float)
    faces = []
    for j in range(ny):
        for i in range(nx):
            v0 = j * (nx + 1) + i
            faces.append([v0, v0 + 1, v0 + nx + 2, v0 + nx + 1])
    faces = np.array(faces)
    if plane == "xz":
        faces = faces[:, ::-1]  # keep the normal along +y
    return ShellMesh(verts, faces, depth=depth)


def merge_meshes(meshes, *, depth: int | None = None) -> ShellMesh:
    """Disjoint union of several control meshes; vertex ids are offset in order."""
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += m.n_vertices
    return ShellMesh(np.vstack(verts), np.vstack(faces), depth=depth or meshes[0].depth)


def polygon_mesh(n_sides: int, radius: float, m: int, *, depth: int = 3, z: float = 0.0) -> ShellMesh:
    """Regular polygon split into ``n_sides`` quad blocks meeting at the centre.

    Block ``k`` spans centre, the midpoint of edge ``k-1``, corner ``k`` and
    the midpoint of edge ``k``; each block is an ``m`` x ``m`` grid.  The
    centre is an extraordinary vertex of valence ``n_sides``.
    """
    ang = 2 * np.pi * np.arange(n_sides) / n_sides + np.pi / 2
    corners = radius * np.stack([np.cos(ang), np.sin(ang)], -1)
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    centre = np.zeros(2)
    pts: list[np.ndarray] = []
    index: dict[tuple, int] = {}

    def vid(p):
        key = tuple(np.round(p / radius, 10))
        if key not in index:
            index[key] = len(pts)
            pts.append(p)
        return index[key]

    faces = []
    for k in range(n_sides):
        p00, p10, p11, p01 = centre, mids[k - 1], corners[k], mids[k]
        ids = np.empty((m + 1, m + 1), dtype=np.int64)
        for j in range(m + 1):
            for i in range(m + 1):
                s, t = i / m, j / m
                p = (1 - s) * (1 - t) * p00 + s * (1 - t) * p10 + s * t * p11 + (1 - s) * t * p01
                ids[j, i] = vid(p)
        for j in range(m):
            for i in range(m):
                faces.append([ids[j, i], ids[j, i + 1], ids[j + 1, i + 1], ids[j + 1, i]])
    faces = np.array(faces)
    P2 = np.array(pts)
    verts = np.column_stack([P2, np.full(len(P2), z)])
    # orient counter-clockwise seen from +z
    e1 = verts[faces[:, 1]] - verts[faces[:, 0]]
    e2 = verts[faces[:, 3]] - verts[faces[:, 0]]
    flip = np.cross(e1, e2)[:, 2] < 0
    faces[flip] = faces[flip][:, ::-1]
    return ShellMesh(verts, faces, depth=depth)
