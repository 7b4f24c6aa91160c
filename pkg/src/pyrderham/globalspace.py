"""Global conforming spaces on a mixed mesh.

Numbering and orientation conventions
-------------------------------------
* H1: one DOF per vertex, in vertex order.
* Hcurl: one DOF per edge, edges sorted by (low id, high id); a local edge
  gets sign +1 iff its tail has the lower global id.
* Hdiv: one DOF per face (faces sorted by their sorted id tuple), then one
  private cell DOF per pyramid.  The face owner is the adjacent element
  with the smallest index (sign +1); the other side gets -1.
* L2: one DOF per tet/hex, two per pyramid, in element order.

Shared coefficients are always taken from the owner element.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .dof import DofKind, dof_set
from .femspace import FieldFn, _check, derivative_matrix, numeric_rank, pull_values, push_values
from .mesh import ThpMesh, require_valid
from .quadrature import NORM_DEGREE, rule_for
from .refbasis import SIZES, Space, basis, tabulate
from .refgeom import (
    EDGES, FACES, REF_VERTICES, Kind, batch_jacobian, batch_map, face_subtets, pointwise_map, pyramid_subtet_of,
)

CHUNK = 4096


@dataclass(frozen=True, eq=False)
class GlobalDofMap:
    """Local-to-global DOF tables.

    Attributes
    ----------
    index : dict kind -> (m, nloc) int array of global indices
    sign : dict kind -> (m, nloc) float array of +/-1
    size : int
        Total number of global DOFs.
    owner : (size,) int array
        Element that owns each global DOF.
    """

    space: Space
    mesh: ThpMesh = field(repr=False)
    index: dict = field(repr=False)
    sign: dict = field(repr=False)
    size: int = 0
    owner: np.ndarray = field(default=None, repr=False)

    def element_dofs(self, e):
        kind, _ = self.mesh.elements[e]
        idx, _ = self.mesh.blocks[kind]
        r = int(np.searchsorted(idx, e))
        return self.index[kind][r], self.sign[kind][r]


def build_dof_map(mesh: ThpMesh, space, check=False) -> GlobalDofMap:
    space = Space(space)
    if check:
        require_valid(mesh)
    index, sign = {}, {}
    if space is Space.H1:
        for kind, (_, conn) in mesh.blocks.items():
            index[kind] = conn.copy()
            sign[kind] = np.ones(conn.shape)
        size = len(mesh.vertices)
    elif space is Space.HCURL:
        E = mesh.edges
        key = E[:, 0] * len(mesh.vertices) + E[:, 1]
        for kind, (_, conn) in mesh.blocks.items():
            loc = np.array(EDGES[kind])
            a, b = conn[:, loc[:, 0]], conn[:, loc[:, 1]]
            k = np.minimum(a, b) * len(mesh.vertices) + np.maximum(a, b)
            index[kind] = np.searchsorted(key, k)
            sign[kind] = np.where(a < b, 1.0, -1.0)
        size = len(E)
    elif space is Space.HDIV:
        nf = len(mesh.faces)
        for kind, (idx, _) in mesh.blocks.items():
            n = SIZES[kind][Space.HDIV]
            index[kind] = np.zeros((len(idx), n), dtype=np.int64)
            sign[kind] = np.ones((len(idx), n))
        t = mesh.face_table
        for j in (0, 1):
            el, lf = t["elem"][:, j], t["local"][:, j]
            for kind, (idx, _) in mesh.blocks.items():
                sel = np.flatnonzero(el >= 0)
                sel = sel[np.isin(el[sel], idx)]
                r = np.searchsorted(idx, el[sel])
                index[kind][r, lf[sel]] = sel
                sign[kind][r, lf[sel]] = 1.0 if j == 0 else -1.0
        size = nf
        if Kind.PYR in mesh.blocks:
            idx, _ = mesh.blocks[Kind.PYR]
            index[Kind.PYR][:, 5] = nf + np.arange(len(idx))
            size += len(idx)
    else:
        counts = np.array([SIZES[k][Space.L2] for k, _ in mesh.elements])
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for kind, (idx, _) in mesh.blocks.items():
            n = SIZES[kind][Space.L2]
            index[kind] = start[idx][:, None] + np.arange(n)
            sign[kind] = np.ones((len(idx), n))
        size = int(counts.sum())
    owner = np.full(size, len(mesh.elements), dtype=np.int64)
    for kind, (idx, _) in mesh.blocks.items():
        np.minimum.at(owner, index[kind].ravel(), np.repeat(idx, index[kind].shape[1]))
    for d in (index, sign):
        for a in d.values():
            a.setflags(write=False)
    return GlobalDofMap(space, mesh, index, sign, int(size), owner)


@dataclass(frozen=True, eq=False)
class GlobalField:
    space: Space
    mesh: ThpMesh = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    dofmap: GlobalDofMap = field(default=None, repr=False)

    def __post_init__(self):
        if self.dofmap is None:
            object.__setattr__(self, "dofmap", dof_map(self.mesh, self.space))

    def local_coefficients(self, kind):
        return self.coefficients[self.dofmap.index[kind]] * self.dofmap.sign[kind]

    def evaluate(self, e, xhat, sub=None, derivative=False):
        """Pushed-forward value (or derivative) on element ``e`` at reference points."""
        kind, nodes = self.mesh.elements[e]
        gi, sg = self.dofmap.element_dofs(e)
        c = self.coefficients[gi] * sg
        V = self.mesh.vertices[list(nodes)][None]
        F, J = batch_jacobian(kind, V, xhat, sub)
        b = basis(self.space, kind)
        vals = b.derivatives(xhat, sub) if derivative else b.values(xhat, sub)
        target = self.space.next if derivative else self.space
        return push_values(target, F[0], J[0], np.tensordot(c, vals, axes=(0, 0)))

    def as_field(self, tol=1e-12):
        """This field as a :class:`FieldFn` evaluated by point location."""
        loc = PointLocator(self.mesh)
        arity = "vector" if self.space.is_vector else "scalar"

        def value(x):
            el, xh, sub = loc.locate(x)
            out = np.zeros((len(x), 3) if self.space.is_vector else len(x))
            for e in np.unique(el):
                m = el == e
                out[m] = self.evaluate(int(e), xh[m], sub[m])
            return out

        return FieldFn(value, arity, name=f"{self.space.value}-field")


_DOFMAP_CACHE = {}


def dof_map(mesh, space):
    key = (id(mesh), Space(space))
    hit = _DOFMAP_CACHE.get(key)
    if hit is None or hit[0] is not mesh:
        hit = (mesh, build_dof_map(mesh, space))
        _DOFMAP_CACHE[key] = hit
    return hit[1]


# ------------------------------------------------------------ interpolation

def _field_values(field, X):
    n = X.shape[:-1]
    v = np.asarray(field.value(X.reshape(-1, 3)), dtype=float)
    return v.reshape(*n, *v.shape[1:])


def batch_local_dofs(space, kind, V, field):
    """Local DOF values of ``field`` on many elements of one kind.

    ``V`` is ``(m, nv, 3)``; returns ``(m, nloc)``.
    """
    space, kind = Space(space), Kind(kind)
    _check(space, field)
    ds = dof_set(space, kind)
    m, q = len(V), len(ds.points)
    X = batch_map(kind, V, ds.points, ds.sub)
    v = _field_values(field, X)
    if space is not Space.H1:
        F, J = batch_jacobian(kind, V, ds.points, ds.sub)
        v = pull_values(space, F.reshape(-1, 3, 3), J.ravel(), v.reshape(m * q, *v.shape[2:]))
        v = v.reshape(m, q, *v.shape[1:])
    from .dof import _check_arity

    _check_arity(v.reshape(m * q, *v.shape[2:]), ds.vector)
    contrib = np.sum(ds.weights * v, axis=2) if ds.vector else ds.weights * v
    A = sp.csr_matrix((np.ones(q), (ds.owner, np.arange(q))), shape=(len(ds), q))
    out = (A @ contrib.T).T
    div = getattr(field, "div", None)
    if space is Space.HDIV and div is not None:
        for i, fn in enumerate(ds.functionals):
            if fn.kind is DofKind.SIGNED_DIV_DIFF:
                Xd = batch_map(kind, V, fn.div_points, fn.div_sub)
                _, Jd = batch_jacobian(kind, V, fn.div_points, fn.div_sub)
                d = np.asarray(div(Xd.reshape(-1, 3)), dtype=float).reshape(m, -1)
                out[:, i] = (Jd * d) @ fn.div_weights
    return np.asarray(out)


def local_dof_values(mesh, space, field):
    """``{kind: (m, nloc)}`` local DOF values on every element, unsigned."""
    out = {}
    for kind, (idx, conn) in mesh.blocks.items():
        parts = [batch_local_dofs(space, kind, mesh.vertices[conn[s:s + CHUNK]], field) for s in range(0, len(idx), CHUNK)]
        out[kind] = np.vstack(parts)
    return out


def interpolate_global(mesh: ThpMesh, space, field) -> GlobalField:
    """Global interpolant; shared coefficients come from the owner element."""
    space = Space(space)
    dm = dof_map(mesh, space)
    coeffs = np.full(dm.size, np.nan)
    loc = local_dof_values(mesh, space, field)
    for kind, (idx, _) in mesh.blocks.items():
        gi = dm.index[kind]
        own = dm.owner[gi] == idx[:, None]
        coeffs[gi[own]] = (loc[kind] * dm.sign[kind])[own]
    return GlobalField(space, mesh, coeffs, dm)


# ---------------------------------------------------------------- derivative

def derivative_operator(mesh: ThpMesh, space) -> sp.csr_matrix:
    """Sparse global exterior derivative from ``space`` into ``space.next``.

    Each target row is assembled from its owner element's local matrix.
    """
    space = Space(space)
    src, dst = dof_map(mesh, space), dof_map(mesh, space.next)
    rows, cols, vals = [], [], []
    for kind, (idx, _) in mesh.blocks.items():
        D = derivative_matrix(space, kind).matrix
        ti, ts = dst.index[kind], dst.sign[kind]
        si, ss = src.index[kind], src.sign[kind]
        own = dst.owner[ti] == idx[:, None]
        r, a = np.nonzero(own)
        for b in range(D.shape[1]):
            w = D[a, b] * ts[r, a] * ss[r, b]
            keep = w != 0
            rows.append(ti[r, a][keep])
            cols.append(si[r, b][keep])
            vals.append(w[keep])
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dst.size, src.size))
    return M.tocsr()


def global_derivative(field: GlobalField) -> GlobalField:
    if field.space is Space.L2:
        raise ValueError("no derivative out of L2")
    D = derivative_operator(field.mesh, field.space)
    return GlobalField(field.space.next, field.mesh, D @ field.coefficients)


def global_ranks(mesh: ThpMesh, rtol=1e-10):
    """Numeric ranks of the assembled grad, curl and div operators."""
    return {s: numeric_rank(derivative_operator(mesh, s).toarray(), rtol) for s in (Space.H1, Space.HCURL, Space.HDIV)}


def dof_counts(mesh: ThpMesh):
    return {s: dof_map(mesh, s).size for s in Space}


# --------------------------------------------------------------- conformity

def _unit_samples(n_side=5):
    t = (np.arange(n_side) + 0.5) / n_side
    return np.array([(a, b) for a in t for b in t])


def _face_params(nc, n=25):
    """Face parameters of ``n`` interior sample points (``n`` a square)."""
    k = int(round(np.sqrt(n)))
    if nc == 4:
        return _unit_samples(k)
    # centroids of the k^2 sub-triangles of a uniform subdivision
    up = [((i + 1 / 3) / k, (j + 1 / 3) / k) for i in range(k) for j in range(k - i)]
    down = [((i + 2 / 3) / k, (j + 2 / 3) / k) for i in range(k - 1) for j in range(k - 1 - i)]
    return np.array(up + down)


def _canonical_corners(corners):
    """Cyclic rotation/reflection of a face's corner ids starting at the smallest id."""
    c = list(corners)
    i = c.index(min(c))
    c = c[i:] + c[:i]
    if len(c) == 4 and c[3] < c[1]:
        c = [c[0], c[3], c[2], c[1]]
    if len(c) == 3 and c[2] < c[1]:
        c = [c[0], c[2], c[1]]
    return c


def _ref_points_on_face(kind, nodes, lf, canon, uv):
    """Reference points of element (kind, nodes) on local face ``lf`` at face parameters ``uv``."""
    rv = REF_VERTICES[kind]
    local = {nodes[i]: rv[i] for i in FACES[kind][lf]}
    P = np.array([local[g] for g in canon])
    u, v = uv[:, :1], uv[:, 1:]
    if len(canon) == 3:
        return P[0] + u * (P[1] - P[0]) + v * (P[2] - P[0])
    return (1 - u) * (1 - v) * P[0] + u * (1 - v) * P[1] + u * v * P[2] + (1 - u) * v * P[3]


@dataclass
class JumpReport:
    space: Space
    max_jump: float
    per_face: np.ndarray = field(repr=False)
    n_faces: int = 0
    max_mismatch: float = 0.0


def check_conformity(gf: GlobalField, n_points=25) -> JumpReport:
    """Jumps of value/tangential/normal traces across interior faces."""
    mesh = gf.mesh
    if gf.space is Space.L2:
        return JumpReport(gf.space, 0.0, np.zeros(0), 0)
    jumps, mism = [], 0.0
    for key, adj in mesh.faces:
        if len(adj) != 2:
            continue
        (ea, la), (eb, lb) = adj
        ka, na = mesh.elements[ea]
        corners = [na[i] for i in FACES[ka][la]]
        canon = _canonical_corners(corners)
        uv = _face_params(len(canon), n_points)
        side = []
        for e, lf in ((ea, la), (eb, lb)):
            kind, nodes = mesh.elements[e]
            xh = _ref_points_on_face(kind, nodes, lf, canon, uv)
            sub = face_subtets(kind, lf, xh)
            V = mesh.vertices[list(nodes)][None]
            x = batch_map(kind, V, xh, sub)[0]
            side.append((x, gf.evaluate(e, xh, sub)))
        (xa, ua), (xb, ub) = side
        mism = max(mism, float(np.abs(xa - xb).max()))
        d = ua - ub
        if gf.space is Space.H1:
            j = np.abs(d)
        else:
            nrm = _physical_normals(mesh.vertices[canon], uv)
            if gf.space is Space.HCURL:
                j = np.linalg.norm(np.cross(nrm, d), axis=1)
            else:
                j = np.abs(np.sum(nrm * d, axis=1))
        jumps.append(j.max())
    jumps = np.array(jumps)
    return JumpReport(gf.space, float(jumps.max()) if len(jumps) else 0.0, jumps, len(jumps), mism)


def _physical_normals(P, uv):
    u, v = uv[:, :1], uv[:, 1:]
    if len(P) == 3:
        n = np.cross(P[1] - P[0], P[2] - P[0])[None].repeat(len(uv), 0)
    else:
        du = (1 - v) * (P[1] - P[0]) + v * (P[2] - P[3])
        dv = (1 - u) * (P[3] - P[0]) + u * (P[2] - P[1])
        n = np.cross(du, dv)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


# ------------------------------------------------------------------ errors

def _chunks(idx, conn):
    for s in range(0, len(idx), CHUNK):
        yield idx[s:s + CHUNK], conn[s:s + CHUNK]


def element_errors(gf: GlobalField, field: FieldFn, degree=NORM_DEGREE):
    """Per-element squared errors ``(e_l2^2, e_deriv^2)``, each ``(nelem,)``.

    The derivative column is ``nan`` for L2 fields.
    """
    mesh = gf.mesh
    e0 = np.zeros(len(mesh.elements))
    e1 = np.full(len(mesh.elements), np.nan if gf.space is Space.L2 else 0.0)
    for kind, (idx_all, conn_all) in mesh.blocks.items():
        rule = rule_for(kind, degree)
        vals = tabulate(gf.space, kind, rule)
        dvals = None if gf.space is Space.L2 else tabulate(gf.space, kind, rule, derivative=True)
        C_all = gf.local_coefficients(kind)
        for s in range(0, len(idx_all), CHUNK):
            idx, conn = idx_all[s:s + CHUNK], conn_all[s:s + CHUNK]
            C = C_all[s:s + CHUNK]
            V = mesh.vertices[conn]
            m, q = len(idx), len(rule)
            X = batch_map(kind, V, rule.points, rule.sub)
            F, J = batch_jacobian(kind, V, rule.points, rule.sub)
            Ff, Jf = F.reshape(-1, 3, 3), J.ravel()
            w = rule.weights[None, :] * J
            uh = push_values(gf.space, Ff, Jf, np.tensordot(C, vals, axes=(1, 0)).reshape(m * q, *vals.shape[2:]))
            diff = _field_values(field, X).reshape(uh.shape) - uh
            sq = diff**2 if diff.ndim == 1 else np.sum(diff**2, axis=1)
            e0[idx] = np.sum(w * sq.reshape(m, q), axis=1)
            if dvals is not None:
                duh = push_values(gf.space.next, Ff, Jf, np.tensordot(C, dvals, axes=(1, 0)).reshape(m * q, *dvals.shape[2:]))
                dv = np.asarray(field.derivative(gf.space, X.reshape(-1, 3)), dtype=float)
                dd = dv.reshape(duh.shape) - duh
                sq = dd**2 if dd.ndim == 1 else np.sum(dd**2, axis=1)
                e1[idx] = np.sum(w * sq.reshape(m, q), axis=1)
    return e0, e1


def interpolation_errors(gf: GlobalField, field: FieldFn, degree=NORM_DEGREE):
    """Global ``(||v - Pi v||, ||d(v - Pi v)||)``, summed in element order."""
    e0, e1 = element_errors(gf, field, degree)
    d = float(np.sqrt(np.sum(e1))) if gf.space is not Space.L2 else float("nan")
    return float(np.sqrt(np.sum(e0))), d


# --------------------------------------------------------------- locating

class PointLocator:
    """Find the element and reference coordinates of physical points.

    Candidates come from a KD-tree over element centroids; reference
    coordinates are found by Newton iteration on the element map.
    """

    def __init__(self, mesh: ThpMesh):
        from scipy.spatial import cKDTree

        self.mesh = mesh
        cents = np.array([mesh.element_vertices(e).mean(0) for e in range(len(mesh.elements))])
        self.tree = cKDTree(cents)
        self.radius = float(mesh.h)

    @staticmethod
    def _inside(kind, xh, tol):
        x, y, z = xh.T
        if kind is Kind.HEX:
            return np.all((xh >= -tol) & (xh <= 1 + tol), axis=1)
        if kind is Kind.TET:
            return np.all(xh >= -tol, axis=1) & (x + y + z <= 1 + tol)
        return ((z >= -tol) & (z <= 1 + tol) & (x >= z / 2 - tol) & (y >= z / 2 - tol)
                & (x <= 1 - z / 2 + tol) & (y <= 1 - z / 2 + tol))

    def _newton(self, kind, V, P):
        """Batched Newton solve of ``Phi_i(xh_i) = P_i`` on elements ``V``."""
        xh = np.broadcast_to(REF_VERTICES[kind].mean(0), P.shape).copy()
        for _ in range(30):
            sub = pyramid_subtet_of(xh) if kind is Kind.PYR else None
            x, F = pointwise_map(kind, V, xh, sub)
            r = x - P
            active = np.linalg.norm(r, axis=1) >= 1e-14 * max(1.0, self.radius)
            if not active.any():
                break
            ok = np.abs(np.linalg.det(F)) > 1e-300
            F[~ok] = np.eye(3)
            step = np.linalg.solve(F, r[..., None])[..., 0]
            xh = xh - np.where((active & ok)[:, None], step, 0.0)
        sub = pyramid_subtet_of(xh) if kind is Kind.PYR else np.zeros(len(xh), dtype=int)
        x, _ = pointwise_map(kind, V, xh, sub if kind is Kind.PYR else None)
        return xh, np.asarray(sub), np.linalg.norm(x - P, axis=1)

    def locate(self, X, tol=1e-9):
        """Element (lowest index on ties), reference point and sub-tet label per point."""
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        cands = self.tree.query_ball_point(X, self.radius)
        pi = np.repeat(np.arange(len(X)), [len(c) for c in cands])
        pe = np.concatenate([np.asarray(c, dtype=np.int64) for c in cands]) if len(pi) else np.zeros(0, dtype=np.int64)
        qh = np.zeros((len(pi), 3))
        qs = np.zeros(len(pi), dtype=np.int64)
        good = np.zeros(len(pi), dtype=bool)
        kinds = np.array([Kind(self.mesh.elements[e][0]) is k for e in pe for k in Kind]).reshape(len(pe), 3)
        for ki, kind in enumerate(Kind):
            if kind not in self.mesh.blocks:
                continue
            idx, conn = self.mesh.blocks[kind]
            sel = np.flatnonzero(kinds[:, ki])
            V = self.mesh.vertices[conn[np.searchsorted(idx, pe[sel])]]
            q, s, res = self._newton(kind, V, X[pi[sel]])
            qh[sel], qs[sel] = q, s
            good[sel] = (res < 1e-10 * max(1.0, self.radius)) & self._inside(kind, q, tol)
        # first valid candidate in element order
        order = np.lexsort((pe, ~good, pi))
        pi, pe, qh, qs, good = pi[order], pe[order], qh[order], qs[order], good[order]
        first = np.flatnonzero(np.r_[True, pi[1:] != pi[:-1]]) if len(pi) else np.zeros(0, dtype=int)
        hit = np.zeros(len(X), dtype=bool)
        hit[pi[first[good[first]]]] = True
        if not hit.all():
            p = X[np.flatnonzero(~hit)[0]]
            raise ValueError(f"point {p.tolist()} is outside the mesh")
        return pe[first], qh[first], qs[first]
