"""Reference domains, barycentric coordinates and element mappings.

Three element kinds are supported: the affine tetrahedron, the trilinear
hexahedron and the composite pyramid.  The pyramid is split along the
v1-v3 diagonal into two sub-tetrahedra ``T1 = (v3, v1, v2, v5)`` and
``T2 = (v1, v3, v4, v5)`` (local barycentric order), and its map is affine
on each half plus a quadratic correction proportional to the base defect
``vP = v1 - v2 + v3 - v4``.

All point arguments are arrays of shape ``(n, 3)`` (a single ``(3,)`` point
is accepted and promoted).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np


class Kind(str, Enum):
    TET = "tet"
    HEX = "hex"
    PYR = "pyr"


class DegenerateElementError(ValueError):
    """Raised for zero-volume simplices."""


class InvalidElementError(ValueError):
    """Raised when an element map has a non-positive Jacobian."""

    def __init__(self, message, location=None, element=None):
        super().__init__(message)
        self.location = location
        self.element = element


REF_VERTICES = {
    Kind.TET: np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float),
    Kind.HEX: np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
         [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
        dtype=float,
    ),
    Kind.PYR: np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0.5, 0.5, 1]], dtype=float
    ),
}

REF_VOLUME = {Kind.TET: 1 / 6, Kind.HEX: 1.0, Kind.PYR: 1 / 3}

# Sub-tetrahedra of the pyramid as pyramid-vertex indices in local order.
PYR_SUBTETS = ((2, 0, 1, 4), (0, 2, 3, 4))

# Oriented edges (tail, head) in DOF order, 0-based local vertex ids.
EDGES = {
    Kind.TET: ((1, 2), (0, 3), (2, 3), (0, 1), (3, 1), (0, 2)),
    Kind.HEX: (
        (0, 1), (4, 5), (3, 2), (0, 3), (1, 2), (4, 7),
        (0, 4), (3, 7), (1, 5), (7, 6), (5, 6), (2, 6),
    ),
    Kind.PYR: ((0, 1), (0, 3), (0, 4), (1, 2), (1, 4), (2, 3), (2, 4), (3, 4)),
}

# Faces in DOF order; quads are listed cyclically.
FACES = {
    Kind.TET: ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)),
    Kind.HEX: (
        (0, 3, 7, 4), (1, 2, 6, 5), (0, 1, 5, 4),
        (3, 2, 6, 7), (0, 1, 2, 3), (4, 5, 6, 7),
    ),
    Kind.PYR: ((0, 1, 4), (0, 3, 4), (1, 2, 4), (2, 3, 4), (0, 1, 2, 3)),
}

# Sub-tet containing each lateral pyramid face (the base straddles both).
PYR_FACE_SUBTET = (1, 2, 1, 2, None)

N_VERTICES = {Kind.TET: 4, Kind.HEX: 8, Kind.PYR: 5}


def as_points(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 3)


@dataclass(frozen=True)
class ReferenceElement:
    kind: Kind
    vertices: np.ndarray = field(repr=False)

    @property
    def volume(self):
        return REF_VOLUME[self.kind]


def reference_element(kind) -> ReferenceElement:
    kind = Kind(kind)
    return ReferenceElement(kind, REF_VERTICES[kind].copy())


def barycentric_affine(tet_vertices):
    """Return ``(G, g)`` with ``lambda(x) = x @ G.T + g``.

    Row ``i`` of ``G`` is the (constant) gradient of the i-th barycentric
    coordinate.
    """
    tv = np.asarray(tet_vertices, dtype=float)
    M = np.vstack([tv.T, np.ones(4)])
    vol6 = np.linalg.det(M)
    scale = max(np.abs(tv - tv[0]).max(), 1e-300)
    if abs(vol6) <= 1e-14 * scale**3:
        raise DegenerateElementError("tetrahedron has zero volume")
    Minv = np.linalg.inv(M)
    return Minv[:, :3], Minv[:, 3]


def barycentric(tet_vertices, p):
    """Barycentric coordinates of ``p`` with respect to ``tet_vertices``."""
    G, g = barycentric_affine(tet_vertices)
    single = np.ndim(p) == 1
    lam = as_points(p) @ G.T + g
    return lam[0] if single else lam


# Reference sub-tet barycentrics; these reproduce the closed forms
# lambda_1^{T1} = y - z/2, lambda_2^{T1} = 1 - x - z/2, ... exactly.
PYR_BARY = tuple(barycentric_affine(REF_VERTICES[Kind.PYR][list(s)]) for s in PYR_SUBTETS)
TET_BARY = barycentric_affine(REF_VERTICES[Kind.TET])


def pyramid_subtet_of(x):
    """Return 1 where ``x2 <= x1`` (sub-tet T1, ties included) and 2 elsewhere."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return 1 if x[1] <= x[0] else 2
    return np.where(x[:, 1] <= x[:, 0], 1, 2)


def face_subtets(kind, local_face, x):
    """Sub-tet labels for reference points on a face (None off pyramids).

    Lateral pyramid faces lie in one sub-tet; using that label keeps the
    face trace one-sided on edges inside the diagonal plane.
    """
    if Kind(kind) is not Kind.PYR:
        return None
    ell = PYR_FACE_SUBTET[local_face]
    if ell is None:
        return np.asarray(pyramid_subtet_of(as_points(x)))
    return np.full(len(as_points(x)), ell)


def vp_defect(quad):
    """Parallelogram defect ``v1 - v2 + v3 - v4`` of a cyclic quadrilateral."""
    q = np.asarray(quad, dtype=float)
    return q[0] - q[1] + q[2] - q[3]


def _hex_q1(x):
    X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
    a, b, c = 1 - X, 1 - Y, 1 - Z
    return np.stack([a * b * c, X * b * c, X * Y * c, a * Y * c,
                     a * b * Z, X * b * Z, X * Y * Z, a * Y * Z], axis=1)


def _hex_q1_grad(x):
    X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
    a, b, c = 1 - X, 1 - Y, 1 - Z
    gx = np.stack([-b * c, b * c, Y * c, -Y * c, -b * Z, b * Z, Y * Z, -Y * Z], axis=1)
    gy = np.stack([-a * c, -X * c, X * c, a * c, -a * Z, -X * Z, X * Z, a * Z], axis=1)
    gz = np.stack([-a * b, -X * b, -X * Y, -a * Y, a * b, X * b, X * Y, a * Y], axis=1)
    return np.stack([gx, gy, gz], axis=2)  # (n, 8, 3)


def _subs(x, sub):
    if sub is None:
        return pyramid_subtet_of(x)
    return np.broadcast_to(np.asarray(sub), (len(x),))


def batch_map(kind, V, xhat, sub=None):
    """Map reference points through many elements of one kind at once.

    ``V`` has shape ``(m, nv, 3)``; the result has shape ``(m, n, 3)``.
    """
    kind = Kind(kind)
    V = np.asarray(V, dtype=float)
    x = as_points(xhat)
    if kind is Kind.TET:
        return np.einsum("nk,mkd->mnd", x, V[:, 1:] - V[:, :1]) + V[:, :1]
    if kind is Kind.HEX:
        return np.einsum("nk,mkd->mnd", _hex_q1(x), V)
    out = np.empty((len(V), len(x), 3))
    s = _subs(x, sub)
    vp = V[:, 0] - V[:, 1] + V[:, 2] - V[:, 3]
    for ell in (1, 2):
        msk = s == ell
        if not msk.any():
            continue
        G, g = PYR_BARY[ell - 1]
        lam = x[msk] @ G.T + g
        Vs = V[:, list(PYR_SUBTETS[ell - 1])]
        out[:, msk] = np.einsum("nk,mkd->mnd", lam, Vs) - (lam[:, 0] * lam[:, 1])[None, :, None] * vp[:, None, :]
    return out


def batch_jacobian(kind, V, xhat, sub=None):
    """Jacobians ``F`` of shape ``(m, n, 3, 3)`` and determinants ``(m, n)``."""
    kind = Kind(kind)
    V = np.asarray(V, dtype=float)
    x = as_points(xhat)
    m, n = len(V), len(x)
    if kind is Kind.TET:
        F = np.broadcast_to(np.transpose(V[:, 1:] - V[:, :1], (0, 2, 1))[:, None], (m, n, 3, 3)).copy()
    elif kind is Kind.HEX:
        F = np.einsum("mki,nkj->mnij", V, _hex_q1_grad(x))
    else:
        F = np.empty((m, n, 3, 3))
        s = _subs(x, sub)
        vp = V[:, 0] - V[:, 1] + V[:, 2] - V[:, 3]
        for ell in (1, 2):
            msk = s == ell
            if not msk.any():
                continue
            G, g = PYR_BARY[ell - 1]
            lam = x[msk] @ G.T + g
            lin = np.einsum("mki,kj->mij", V[:, list(PYR_SUBTETS[ell - 1])], G)
            dq = lam[:, [0]] * G[1] + lam[:, [1]] * G[0]
            F[:, msk] = lin[:, None] - vp[:, None, :, None] * dq[None, :, None, :]
    return F, np.linalg.det(F)


def pointwise_map(kind, V, xhat, sub=None):
    """Map point ``i`` through element ``i``: ``V`` is ``(m, nv, 3)``, ``xhat`` is ``(m, 3)``.

    Returns ``(x, F)`` with shapes ``(m, 3)`` and ``(m, 3, 3)``.
    """
    kind = Kind(kind)
    V = np.asarray(V, dtype=float)
    x = as_points(xhat)
    if kind is Kind.TET:
        E = V[:, 1:] - V[:, :1]
        return np.einsum("mk,mkd->md", x, E) + V[:, 0], np.transpose(E, (0, 2, 1))
    if kind is Kind.HEX:
        return np.einsum("mk,mkd->md", _hex_q1(x), V), np.einsum("mki,mkj->mij", V, _hex_q1_grad(x))
    out, F = np.empty((len(x), 3)), np.empty((len(x), 3, 3))
    s = _subs(x, sub)
    vp = V[:, 0] - V[:, 1] + V[:, 2] - V[:, 3]
    for ell in (1, 2):
        msk = s == ell
        G, g = PYR_BARY[ell - 1]
        lam = x[msk] @ G.T + g
        Vs = V[msk][:, list(PYR_SUBTETS[ell - 1])]
        out[msk] = np.einsum("mk,mkd->md", lam, Vs) - (lam[:, 0] * lam[:, 1])[:, None] * vp[msk]
        dq = lam[:, [0]] * G[1] + lam[:, [1]] * G[0]
        F[msk] = np.einsum("mki,kj->mij", Vs, G) - vp[msk][:, :, None] * dq[:, None, :]
    return out, F


class ElementMap:
    """Map from a reference element onto a physical element.

    Parameters
    ----------
    kind : Kind or str
        ``"tet"``, ``"hex"`` or ``"pyr"``.
    vertices : array_like, shape (4|8|5, 3)
        Physical vertices in the reference local ordering.
    """

    def __init__(self, kind, vertices):
        self.kind = Kind(kind)
        v = np.array(vertices, dtype=float)
        if v.shape != (N_VERTICES[self.kind], 3):
            raise ValueError(f"{self.kind.value} needs {N_VERTICES[self.kind]} vertices, got {v.shape}")
        v.setflags(write=False)
        self.vertices = v
        if self.kind is Kind.PYR:
            self.vp = vp_defect(v[:4])
            # per sub-tet: physical vertex matrix (4, 3) in local order
            self._sub_vertices = tuple(v[list(s)] for s in PYR_SUBTETS)

    def __repr__(self):
        return f"ElementMap({self.kind.value}, {self.vertices.tolist()})"

    @cached_property
    def diameter(self):
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def _subs(self, x, sub):
        return _subs(x, sub)

    def map_point(self, xhat, sub=None):
        single = np.ndim(xhat) == 1
        out = batch_map(self.kind, self.vertices[None], as_points(xhat), sub)[0]
        return out[0] if single else out

    __call__ = map_point

    def jacobian(self, xhat, sub=None):
        """Return ``(F, J)`` with ``F[n, i, j] = d Phi_i / d xhat_j``."""
        single = np.ndim(xhat) == 1
        F, J = batch_jacobian(self.kind, self.vertices[None], as_points(xhat), sub)
        if single:
            return F[0, 0], J[0, 0]
        return F[0], J[0]

    def second_derivatives(self, xhat, sub=None):
        """Hessian tensor ``H[n, i, j, k] = d^2 Phi_i / d xhat_j d xhat_k``."""
        x = as_points(xhat)
        n = len(x)
        H = np.zeros((n, 3, 3, 3))
        if self.kind is Kind.HEX:
            X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
            v = self.vertices
            bot, top = vp_defect(v[:4]), vp_defect(v[4:])
            # mixed derivatives of the trilinear map
            dxy = np.outer(1 - Z, bot) + np.outer(Z, top)
            fx0, fx1 = vp_defect(v[[0, 3, 7, 4]]), vp_defect(v[[1, 2, 6, 5]])
            dyz = np.outer(1 - X, fx0) + np.outer(X, fx1)
            fy0, fy1 = vp_defect(v[[0, 1, 5, 4]]), vp_defect(v[[3, 2, 6, 7]])
            dxz = np.outer(1 - Y, fy0) + np.outer(Y, fy1)
            H[:, :, 0, 1] = H[:, :, 1, 0] = dxy
            H[:, :, 1, 2] = H[:, :, 2, 1] = dyz
            H[:, :, 0, 2] = H[:, :, 2, 0] = dxz
        elif self.kind is Kind.PYR:
            s = self._subs(x, sub)
            for ell in (1, 2):
                m = s == ell
                G, _ = PYR_BARY[ell - 1]
                sym = np.outer(G[0], G[1]) + np.outer(G[1], G[0])
                H[m] = -self.vp[:, None, None] * sym[None]
        return H

    def check_valid(self, xhat, sub=None):
        """Raise :class:`InvalidElementError` if ``J <= 0`` at any sample point."""
        _, J = self.jacobian(xhat, sub)
        J = np.atleast_1d(J)
        bad = np.flatnonzero(~(J > 0))
        if bad.size:
            k = bad[0]
            raise InvalidElementError(
                f"non-positive Jacobian {J[k]:.3e} at reference point {as_points(xhat)[k].tolist()}",
                location=as_points(xhat)[k],
            )
        return J
