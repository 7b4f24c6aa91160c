"""Mixed tetrahedral/hexahedral/pyramidal meshes.

A mesh is an immutable pair (vertex coordinates, element connectivity).
Element node tuples follow the reference local orderings of
:mod:`pyrderham.refgeom`.  Uniform refinement splits

* a tet into 8 tets (edge midpoints),
* a hex into 8 hexes (edge midpoints, face centroids, cell centroid),
* a pyramid into 4 pyramids and 8 tets (edge midpoints, base centroid).

New vertices are keyed by the sorted tuple of the parent vertex ids that
generate them, so neighbouring elements create bit-identical shared nodes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .quadrature import rule_for
from .refgeom import (
    FACES,
    N_VERTICES,
    REF_VERTICES,
    Kind,
    batch_jacobian,
    batch_map,
    face_subtets,
    vp_defect,
)

DUPLICATE_TOL = 1e-12


class InvalidMeshError(ValueError):
    """Raised when a mesh fails validation where a valid mesh is required."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ThpMesh:
    """Conforming mesh of tets, hexes and pyramids.

    Parameters
    ----------
    vertices : array_like, shape (nv, 3)
    elements : sequence of (kind, node ids)
    """

    def __init__(self, vertices, elements):
        v = np.array(vertices, dtype=float).reshape(-1, 3)
        v.setflags(write=False)
        self.vertices = v
        els = []
        for kind, nodes in elements:
            kind = Kind(kind)
            nodes = tuple(int(i) for i in nodes)
            if len(nodes) != N_VERTICES[kind]:
                raise ValueError(f"{kind.value} needs {N_VERTICES[kind]} nodes, got {len(nodes)}")
            els.append((kind, nodes))
        self.elements = tuple(els)

    def __repr__(self):
        counts = {k.value: n for k, n in self.counts().items()}
        return f"ThpMesh({len(self.vertices)} vertices, {counts})"

    def __len__(self):
        return len(self.elements)

    def counts(self):
        out = {k: 0 for k in Kind}
        for kind, _ in self.elements:
            out[kind] += 1
        return out

    @cached_property
    def blocks(self):
        """``{kind: (element indices, connectivity (m, nv))}`` for kinds present."""
        out = {}
        for kind in Kind:
            idx = [i for i, (k, _) in enumerate(self.elements) if k is kind]
            if idx:
                conn = np.array([self.elements[i][1] for i in idx], dtype=np.int64)
                out[kind] = (np.array(idx, dtype=np.int64), conn)
        return out

    def element_vertices(self, i):
        kind, nodes = self.elements[i]
        return self.vertices[list(nodes)]

    def element_map(self, i):
        from .refgeom import ElementMap

        kind, nodes = self.elements[i]
        return ElementMap(kind, self.vertices[list(nodes)])

    # -------------------------------------------------------------- topology

    @cached_property
    def edges(self):
        """Sorted unique edges as an ``(ne, 2)`` array with ``a < b``."""
        from .refgeom import EDGES

        chunks = []
        for kind, (_, conn) in self.blocks.items():
            loc = np.array(EDGES[kind])
            chunks.append(np.sort(conn[:, loc].reshape(-1, 2), axis=1))
        if not chunks:
            return np.zeros((0, 2), dtype=np.int64)
        return np.unique(np.vstack(chunks), axis=0)

    @cached_property
    def face_table(self):
        """Unique faces as arrays, sorted by their sorted vertex ids.

        Returns a dict with ``keys`` ``(nf, 4)`` (triangles padded with -1),
        ``corners`` ``(nf,)``, ``elem`` and ``local`` ``(nf, 2)`` (adjacent
        elements in increasing order, -1 where absent) and ``count``.
        """
        els, lfs, keys, ncs = [], [], [], []
        for kind, (idx, conn) in self.blocks.items():
            for lf, verts in enumerate(FACES[kind]):
                k = np.full((len(idx), 4), -1, dtype=np.int64)
                k[:, :len(verts)] = np.sort(conn[:, list(verts)], axis=1)
                els.append(idx)
                lfs.append(np.full(len(idx), lf))
                keys.append(k)
                ncs.append(np.full(len(idx), len(verts)))
        el, lf = np.concatenate(els), np.concatenate(lfs)
        keys, nc = np.vstack(keys), np.concatenate(ncs)
        uniq, first, inv, count = np.unique(keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        order = np.lexsort((lf, el, inv))
        start = np.searchsorted(inv[order], np.arange(len(uniq)))
        elem = np.full((len(uniq), 2), -1, dtype=np.int64)
        local = np.full((len(uniq), 2), -1, dtype=np.int64)
        elem[:, 0], local[:, 0] = el[order[start]], lf[order[start]]
        two = count >= 2
        elem[two, 1], local[two, 1] = el[order[start[two] + 1]], lf[order[start[two] + 1]]
        return {"keys": uniq, "corners": nc[first], "elem": elem, "local": local, "count": count}

    @cached_property
    def faces(self):
        """Unique faces as ``(key, [(element, local face), ...])`` in key order.

        Adjacency lists are ordered by element index (at most the first two
        are listed; see ``face_table['count']`` for over-shared faces).
        """
        t = self.face_table
        out = []
        for k, nc, e, l in zip(t["keys"].tolist(), t["corners"].tolist(), t["elem"].tolist(), t["local"].tolist()):
            out.append((tuple(k[:nc]), [(a, b) for a, b in zip(e, l) if a >= 0]))
        return out

    @cached_property
    def face_index(self):
        return {key: i for i, (key, _) in enumerate(self.faces)}

    @cached_property
    def h(self):
        return float(max(self.diameters())) if self.elements else 0.0

    def diameters(self):
        out = np.empty(len(self.elements))
        for kind, (idx, conn) in self.blocks.items():
            P = self.vertices[conn]
            d = P[:, :, None, :] - P[:, None, :, :]
            out[idx] = np.sqrt((d**2).sum(-1)).max(axis=(1, 2))
        return out

    def volumes(self, degree=4):
        """Element volumes by quadrature of the Jacobian."""
        out = np.empty(len(self.elements))
        for kind, (idx, conn) in self.blocks.items():
            rule = rule_for(kind, degree)
            _, J = batch_jacobian(kind, self.vertices[conn], rule.points, rule.sub)
            out[idx] = J @ rule.weights
        return out

    def volume(self, degree=4):
        return float(np.sum(self.volumes(degree)))

    # -------------------------------------------------------------------- io

    def to_dict(self):
        return {
            "version": 1,
            "vertices": self.vertices.tolist(),
            "elements": [{"kind": k.value, "nodes": list(n)} for k, n in self.elements],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("version") != 1:
            raise ValueError(f"unsupported mesh version {data.get('version')!r}")
        return cls(data["vertices"], [(e["kind"], e["nodes"]) for e in data["elements"]])


def load_mesh(path) -> ThpMesh:
    with open(path) as fh:
        return ThpMesh.from_dict(json.load(fh))


def save_mesh(mesh: ThpMesh, path):
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh)
        fh.write("\n")


# ------------------------------------------------------------------ validate

@dataclass
class Violation:
    kind: str
    message: str
    elements: tuple = ()


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def by_kind(self, kind):
        return [v for v in self.violations if v.kind == kind]

    def summary(self):
        if self.ok:
            return "valid"
        lines = [f"{len(self.violations)} violation(s)"]
        lines += [f"  [{v.kind}] {v.message}" for v in self.violations[:20]]
        return "\n".join(lines)


def _cyclic_equal(a, b):
    n = len(a)
    rots = [tuple(a[i:] + a[:i]) for i in range(n)]
    ra = tuple(reversed(a))
    rots += [tuple(ra[i:] + ra[:i]) for i in range(n)]
    return tuple(b) in rots


def face_normals(mesh, elems, locals_):
    """Outward unit normals at the centre of local faces ``locals_`` of ``elems``."""
    out = np.zeros((len(elems), 3))
    if not len(elems):
        return out
    kinds = np.array([mesh.elements[e][0] is k for e in elems for k in Kind]).reshape(len(elems), 3)
    for ki, kind in enumerate(Kind):
        if kind not in mesh.blocks:
            continue
        idx, conn = mesh.blocks[kind]
        rv = REF_VERTICES[kind]
        for lf, verts in enumerate(FACES[kind]):
            sel = np.flatnonzero(kinds[:, ki] & (locals_ == lf))
            if not len(sel):
                continue
            P = rv[list(verts)]
            x = P.mean(0)
            n_ref = np.cross(P[1] - P[0], P[-1] - P[0])
            if n_ref @ (x - rv.mean(0)) < 0:
                n_ref = -n_ref
            rows = np.searchsorted(idx, elems[sel])
            F, _ = batch_jacobian(kind, mesh.vertices[conn[rows]], x, face_subtets(kind, lf, x))
            # cofactor form of F^-T n, defined even where J vanishes
            G = F[:, 0]
            cof = np.stack([np.cross(G[:, :, 1], G[:, :, 2]), np.cross(G[:, :, 2], G[:, :, 0]), np.cross(G[:, :, 0], G[:, :, 1])], axis=2)
            n = cof @ n_ref
            norm = np.linalg.norm(n, axis=1, keepdims=True)
            out[sel] = n / np.where(norm > 0, norm, 1.0)
    return out


def validate(mesh: ThpMesh, degree=4) -> ValidationReport:
    """Collect conformity and validity violations of ``mesh``."""
    rep = ValidationReport()
    nv = len(mesh.vertices)
    if nv == 0 or not mesh.elements:
        rep.violations.append(Violation("empty", "mesh has no vertices or no elements"))
        return rep
    if not np.all(np.isfinite(mesh.vertices)):
        rep.violations.append(Violation("bad_vertex", "non-finite vertex coordinates"))
        return rep

    for i, j in sorted(cKDTree(mesh.vertices).query_pairs(DUPLICATE_TOL)):
        rep.violations.append(Violation("duplicate_vertex", f"vertices {i} and {j} coincide"))

    used = np.zeros(nv, dtype=bool)
    bad = False
    for e, (kind, nodes) in enumerate(mesh.elements):
        if min(nodes) < 0 or max(nodes) >= nv:
            rep.violations.append(Violation("bad_element", f"element {e} references a missing vertex", (e,)))
            bad = True
            continue
        if len(set(nodes)) != len(nodes):
            rep.violations.append(Violation("bad_element", f"element {e} repeats a vertex", (e,)))
            bad = True
        used[list(nodes)] = True
    if bad:
        return rep
    for i in np.flatnonzero(~used):
        rep.violations.append(Violation("unused_vertex", f"vertex {i} belongs to no element"))

    # positive Jacobian at quadrature points and vertices
    for kind, (idx, conn) in mesh.blocks.items():
        rule = rule_for(kind, degree)
        pts = np.vstack([rule.points, REF_VERTICES[kind] * (1 - 1e-9) + 1e-9 * REF_VERTICES[kind].mean(0)])
        sub = None
        _, J = batch_jacobian(kind, mesh.vertices[conn], pts, sub)
        for r in np.flatnonzero(~np.all(J > 0, axis=1)):
            e = int(idx[r])
            rep.violations.append(Violation("inverted_element", f"element {e} ({kind.value}) has J <= 0 (min {J[r].min():.3e})", (e,)))

    t = mesh.face_table
    for f in np.flatnonzero(t["count"] > 2):
        key = tuple(t["keys"][f][: t["corners"][f]].tolist())
        rep.violations.append(Violation("overshared_face", f"face {key} belongs to {t['count'][f]} elements", tuple(t["elem"][f].tolist())))
    shared = np.flatnonzero(t["count"] == 2)
    ea, eb = t["elem"][shared, 0], t["elem"][shared, 1]
    la, lb = t["local"][shared, 0], t["local"][shared, 1]
    for f, a, b, x, y in zip(shared[t["corners"][shared] == 4], *(v[t["corners"][shared] == 4] for v in (ea, eb, la, lb))):
        ca = [mesh.elements[a][1][i] for i in FACES[mesh.elements[a][0]][x]]
        cb = [mesh.elements[b][1][i] for i in FACES[mesh.elements[b][0]][y]]
        if not _cyclic_equal(ca, cb):
            rep.violations.append(Violation("face_mismatch", f"quad face {tuple(sorted(ca))} has inconsistent corner order", (int(a), int(b))))
    dots = np.sum(face_normals(mesh, ea, la) * face_normals(mesh, eb, lb), axis=1)
    for f in np.flatnonzero(dots >= 0):
        key = tuple(t["keys"][shared[f]][: t["corners"][shared[f]]].tolist())
        rep.violations.append(Violation("face_mismatch", f"elements {ea[f]} and {eb[f]} lie on the same side of face {key}", (int(ea[f]), int(eb[f]))))

    bnd = np.flatnonzero(t["count"] == 1)
    boundary = [(tuple(t["keys"][f][: t["corners"][f]].tolist()), (int(t["elem"][f, 0]), int(t["local"][f, 0]))) for f in bnd]
    _check_boundary_overlap(mesh, boundary, rep)
    return rep


def _check_boundary_overlap(mesh, boundary, rep, rtol=1e-6):
    """Flag boundary faces whose centroid lies on another boundary face.

    Such pairs are glued geometrically without sharing vertex ids (a
    non-matching interface or a hanging node).
    """
    if len(boundary) < 2:
        return
    X = mesh.vertices
    corners = []
    for key, (el, lf) in boundary:
        kind, nodes = mesh.elements[el]
        c = [nodes[i] for i in FACES[kind][lf]]
        corners.append(c + [c[0]] if len(c) == 3 else c)
    C = np.array(corners)  # triangles repeat their first corner
    P = X[C]
    cents = np.array([X[list(k)].mean(0) for k, _ in boundary])
    sizes = np.ptp(P, axis=1).max(axis=1)
    pairs = cKDTree(cents).query_pairs(float(sizes.max()), output_type="ndarray")
    if not len(pairs):
        return
    pairs = np.vstack([pairs, pairs[:, ::-1]])
    f, g = pairs[:, 0], pairs[:, 1]
    p = cents[f]
    hit = np.zeros(len(pairs), dtype=bool)
    tol = rtol * np.maximum(sizes[f], sizes[g])
    for tri in ((0, 1, 2), (0, 2, 3)):
        A, B, Cc = (P[g, i] for i in tri)
        n = np.cross(B - A, Cc - A)
        a2 = np.linalg.norm(n, axis=1)
        ok = a2 > 0
        a2 = np.where(ok, a2, 1.0)
        near = np.abs(np.sum((p - A) * n, axis=1)) / a2 <= tol
        lam = np.stack([
            np.sum(np.cross(Cc - B, p - B) * n, axis=1),
            np.sum(np.cross(A - Cc, p - Cc) * n, axis=1),
            np.sum(np.cross(B - A, p - A) * n, axis=1),
        ], axis=1) / (a2**2)[:, None]
        hit |= ok & near & np.all(lam >= -1e-9, axis=1)
    seen = set()
    for i in np.flatnonzero(hit):
        a, b = sorted((int(f[i]), int(g[i])))
        if (a, b) in seen:
            continue
        seen.add((a, b))
        rep.violations.append(Violation(
            "coincident_faces",
            f"boundary faces {boundary[a][0]} and {boundary[b][0]} overlap without shared ids",
            (boundary[a][1][0], boundary[b][1][0]),
        ))


def require_valid(mesh: ThpMesh):
    rep = validate(mesh)
    if not rep.ok:
        raise InvalidMeshError(rep.summary(), rep)
    return mesh


# -------------------------------------------------------------------- refine

# Symbols name parent local vertices (1-based digits); "0" is the cell centroid.
TET_CHILDREN = (
    ("1", "12", "13", "14"), ("12", "2", "23", "24"), ("13", "23", "3", "34"), ("14", "24", "34", "4"),
    ("14", "12", "13", "24"), ("13", "12", "23", "24"), ("13", "23", "34", "24"), ("13", "34", "14", "24"),
)
HEX_CHILDREN = (
    ("15", "1562", "0", "1485", "5", "56", "5678", "58"),
    ("1485", "0", "3487", "48", "58", "5678", "78", "8"),
    ("1562", "26", "2376", "0", "56", "6", "67", "5678"),
    ("0", "2376", "37", "3487", "5678", "67", "7", "78"),
    ("1", "12", "1234", "14", "15", "1562", "0", "1485"),
    ("14", "1234", "34", "4", "1485", "0", "3487", "48"),
    ("12", "2", "23", "1234", "1562", "26", "2376", "0"),
    ("1234", "23", "3", "34", "0", "2376", "37", "3487"),
)
# The 2nd and 3rd tets have their middle nodes swapped to keep positive orientation.
PYR_CHILDREN = (
    (Kind.PYR, ("1", "12", "1234", "14", "15")),
    (Kind.PYR, ("12", "2", "23", "1234", "25")),
    (Kind.PYR, ("1234", "23", "3", "34", "35")),
    (Kind.PYR, ("14", "1234", "34", "4", "45")),
    (Kind.TET, ("12", "15", "25", "1234")),
    (Kind.TET, ("23", "25", "35", "1234")),
    (Kind.TET, ("34", "35", "45", "1234")),
    (Kind.TET, ("14", "45", "15", "1234")),
    (Kind.TET, ("15", "25", "35", "5")),
    (Kind.TET, ("15", "35", "45", "5")),
    (Kind.TET, ("15", "35", "25", "1234")),
    (Kind.TET, ("15", "45", "35", "1234")),
)

STRATEGIES = ("fixed", "shortest")

# Octahedron diagonals of a refined tet and the equatorial cycle around each.
_TET_DIAGONALS = {
    ("13", "24"): ("12", "23", "34", "14"),
    ("14", "23"): ("12", "13", "34", "24"),
    ("12", "34"): ("13", "14", "24", "23"),
}


def _symbol_set(kind, sym):
    if sym == "0":
        return tuple(range(N_VERTICES[kind]))
    return tuple(sorted(int(c) - 1 for c in sym))


def _children_table(kind):
    if kind is Kind.TET:
        return tuple((Kind.TET, c) for c in TET_CHILDREN)
    if kind is Kind.HEX:
        return tuple((Kind.HEX, c) for c in HEX_CHILDREN)
    return PYR_CHILDREN


def _tet_children_shortest(P, syms_pos):
    """Corner tets plus the 4 tets around the shortest octahedron diagonal."""
    best = None
    for (a, b), ring in _TET_DIAGONALS.items():
        length = np.linalg.norm(P[syms_pos[a]] - P[syms_pos[b]])
        ids = tuple(sorted((syms_pos[a], syms_pos[b])))
        cand = (length, ids, a, b, ring)
        if best is None or cand[0] < best[0] * (1 - 1e-12) or (abs(cand[0] - best[0]) <= 1e-12 * best[0] and ids < best[1]):
            best = cand
    _, _, a, b, ring = best
    inner = [(a, b, ring[i], ring[(i + 1) % 4]) for i in range(4)]
    return TET_CHILDREN[:4], inner


def refine(mesh: ThpMesh, strategy="fixed", check=True) -> ThpMesh:
    """One level of uniform refinement.

    Parameters
    ----------
    strategy : {"fixed", "shortest"}
        Interior diagonal of refined tets: the fixed 13-24 diagonal, or
        the shortest of the three octahedron diagonals (ties broken by the
        sorted endpoint ids).
    check : bool
        Validate the input mesh first.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown refinement strategy {strategy!r}")
    if check:
        require_valid(mesh)
    X = mesh.vertices
    nv0 = len(X)

    # collect generating keys for every new vertex
    keys = {}
    per_kind_syms = {}
    for kind, (idx, conn) in mesh.blocks.items():
        syms = sorted({s for _, c in _children_table(kind) for s in c} | (
            {s for pair in _TET_DIAGONALS for s in pair} if kind is Kind.TET else set()))
        per_kind_syms[kind] = syms
        for s in syms:
            loc = _symbol_set(kind, s)
            if len(loc) == 1:
                continue
            k = np.sort(conn[:, list(loc)], axis=1)
            keys.setdefault(len(loc), []).append(k)
    new_keys = {n: np.unique(np.vstack(ks), axis=0) for n, ks in keys.items()}
    offsets, coords, off = {}, [X], nv0
    for n in sorted(new_keys):
        offsets[n] = off
        coords.append(X[new_keys[n]].mean(axis=1))
        off += len(new_keys[n])
    V = np.vstack(coords)

    def ids_for(conn, loc):
        if len(loc) == 1:
            return conn[:, loc[0]]
        k = np.sort(conn[:, list(loc)], axis=1)
        table = new_keys[len(loc)]
        # row lookup through a structured view
        tv = np.ascontiguousarray(table).view([("", table.dtype)] * table.shape[1]).ravel()
        kv = np.ascontiguousarray(k).view([("", k.dtype)] * k.shape[1]).ravel()
        return offsets[len(loc)] + np.searchsorted(tv, kv)

    children = []  # (parent, local child, kind, ids)
    for kind, (idx, conn) in mesh.blocks.items():
        sid = {s: ids_for(conn, _symbol_set(kind, s)) for s in per_kind_syms[kind]}
        if kind is Kind.TET and strategy == "shortest":
            for r, e in enumerate(idx):
                pos = {s: sid[s][r] for s in sid}
                corners, inner = _tet_children_shortest(V, pos)
                for c, tup in enumerate(list(corners) + inner):
                    ids = [int(pos[s]) for s in tup]
                    if np.linalg.det(V[ids[1:]] - V[ids[0]]) < 0:
                        ids[2], ids[3] = ids[3], ids[2]
                    children.append((int(e), c, Kind.TET, tuple(ids)))
            continue
        for c, (ck, tup) in enumerate(_children_table(kind)):
            cols = np.stack([sid[s] for s in tup], axis=1)
            for r, e in enumerate(idx):
                children.append((int(e), c, ck, tuple(int(i) for i in cols[r])))
    children.sort(key=lambda t: (t[0], t[1]))
    return ThpMesh(V, [(k, ids) for _, _, k, ids in children])


def refine_n(mesh: ThpMesh, levels: int, strategy="fixed"):
    """Return ``[mesh, refine(mesh), ...]`` with ``levels + 1`` entries."""
    out = [mesh]
    for _ in range(levels):
        out.append(refine(out[-1], strategy, check=False))
    return out


# ---------------------------------------------------------------- distortion

# Hex faces by pairs (bot/top naming for z); each listed cyclically.
HEX_FACE_NAMES = ("x0", "x1", "y0", "y1", "bot", "top")


@dataclass
class DistortionReport:
    """Geometric distortion of a mesh.

    Attributes
    ----------
    h : float
        Maximum element diameter.
    pyr_vp : ndarray, shape (npyr, 3)
        Base defects ``v1 - v2 + v3 - v4`` per pyramid.
    hex_vp : ndarray, shape (nhex, 6, 3)
        Face defects per hexahedron in the order of ``HEX_FACE_NAMES``.
    max_F, min_F, max_J, min_J : float
        Extremes of ``|F|`` (spectral norm) and ``J`` over quadrature points.
    max_d2 : float
        Largest second derivative of any element map at quadrature points.
    """

    h: float
    pyr_vp: np.ndarray
    hex_vp: np.ndarray
    max_F: float
    min_F: float
    max_J: float
    min_J: float
    max_d2: float

    @property
    def max_pyr_vp(self):
        return float(np.linalg.norm(self.pyr_vp, axis=1).max()) if len(self.pyr_vp) else 0.0

    @property
    def max_hex_vp(self):
        return float(np.linalg.norm(self.hex_vp, axis=2).max()) if len(self.hex_vp) else 0.0


def distortion(mesh: ThpMesh, degree=4) -> DistortionReport:
    X = mesh.vertices
    pyr_vp = np.zeros((0, 3))
    hex_vp = np.zeros((0, 6, 3))
    Fmax, Fmin, Jmax, Jmin, d2 = 0.0, np.inf, 0.0, np.inf, 0.0
    for kind, (idx, conn) in mesh.blocks.items():
        P = X[conn]
        if kind is Kind.PYR:
            pyr_vp = P[:, 0] - P[:, 1] + P[:, 2] - P[:, 3]
        elif kind is Kind.HEX:
            hex_vp = np.stack([vp_defect(np.moveaxis(P[:, list(f)], 1, 0)) for f in FACES[Kind.HEX]], axis=1)
        rule = rule_for(kind, degree)
        F, J = batch_jacobian(kind, P, rule.points, rule.sub)
        nF = np.linalg.norm(F, ord=2, axis=(2, 3))
        Fmax, Fmin = max(Fmax, nF.max()), min(Fmin, nF.min())
        Jmax, Jmin = max(Jmax, np.abs(J).max()), min(Jmin, np.abs(J).min())
        if kind is not Kind.TET:
            from .refgeom import ElementMap

            for r in range(len(idx)):
                H = ElementMap(kind, P[r]).second_derivatives(rule.points, rule.sub)
                d2 = max(d2, float(np.abs(H).max()))
    return DistortionReport(mesh.h, pyr_vp, hex_vp, float(Fmax), float(Fmin), float(Jmax), float(Jmin), d2)
