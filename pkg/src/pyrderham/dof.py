"""Degrees of freedom on the reference elements.

Every functional is stored as a set of reference points with (scalar or
vector) weights, so applying it is a weighted sum of field samples:

* vertex evaluation: one point, weight 1
* edge tangential integral: Gauss points on the edge, weight ``w * (b - a)``
* face flux: points on the face, weight ``w * N`` with ``N`` the outward
  area-scaled normal of the reference face
* cell integrals: volume quadrature, with sign ``+/-`` per pyramid sub-tet

The pyramid cell functional ``int_T1 div v - int_T2 div v`` uses the
divergence directly when the field supplies one and otherwise the
divergence theorem (outward fluxes through the four faces of each
sub-tet), which is exact up to quadrature for any field.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable

import numpy as np

from .quadrature import DOF_DEGREE, rule_for
from .refbasis import BasisSet, ShapeFunction, Space, basis
from .refgeom import EDGES, FACES, PYR_SUBTETS, REF_VERTICES, Kind, pyramid_subtet_of


class ArityError(ValueError):
    """Field returned scalars where vectors were expected, or vice versa."""


class DofKind(str, Enum):
    VERTEX_EVAL = "vertex"
    EDGE_TANGENTIAL = "edge"
    FACE_FLUX = "face"
    CELL_INTEGRAL = "cell"
    CELL_MOMENT_SUM = "cell_sum"
    CELL_MOMENT_DIFF = "cell_diff"
    SIGNED_DIV_DIFF = "div_diff"


@dataclass(frozen=True)
class RefField:
    """A field on a reference element.

    ``value(x, sub)`` returns ``(n,)`` or ``(n, 3)``; ``sub`` is the pyramid
    sub-tet label array (or None).  ``div`` is optional.
    """

    value: Callable
    div: Callable | None = None


def as_ref_field(f):
    if isinstance(f, (RefField, ShapeFunction)):
        return f
    if callable(f):
        return RefField(lambda x, sub=None: f(x))
    raise TypeError(f"cannot use {type(f).__name__} as a field")


def _field_div(f):
    if isinstance(f, ShapeFunction):
        return f.div if f.space is Space.HDIV else None
    return getattr(f, "div", None)


@dataclass(frozen=True, eq=False)
class DofFunctional:
    kind: DofKind
    carrier: tuple
    index: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    sub: np.ndarray = field(repr=False)
    # interior quadrature for the analytic-divergence route
    div_points: np.ndarray | None = field(default=None, repr=False)
    div_weights: np.ndarray | None = field(default=None, repr=False)
    div_sub: np.ndarray | None = field(default=None, repr=False)

    @property
    def vector(self):
        return self.weights.ndim == 2


def _check_arity(vals, vector):
    vals = np.asarray(vals, dtype=float)
    if vector and (vals.ndim != 2 or vals.shape[1] != 3):
        raise ArityError(f"expected a vector field, got values of shape {vals.shape}")
    if not vector and vals.ndim != 1:
        raise ArityError(f"expected a scalar field, got values of shape {vals.shape}")
    return vals


def apply(functional: DofFunctional, f) -> float:
    """Apply one functional to a reference-domain field."""
    f = as_ref_field(f)
    if functional.kind is DofKind.SIGNED_DIV_DIFF:
        div = _field_div(f)
        if div is not None:
            d = _check_arity(div(functional.div_points, functional.div_sub), False)
            return float(functional.div_weights @ d)
    vals = _check_arity(f.value(functional.points, functional.sub), functional.vector)
    if functional.vector:
        return float(np.sum(functional.weights * vals))
    return float(functional.weights @ vals)


# ------------------------------------------------------------------ builders

def _subs_for(kind, pts):
    if kind is Kind.PYR:
        return np.asarray(pyramid_subtet_of(pts))
    return np.zeros(len(pts), dtype=int)


def _edge(kind, a, b, index, degree):
    rv = REF_VERTICES[kind]
    r = rule_for("segment", degree)
    t = rv[b] - rv[a]
    pts = rv[a] + r.points[:, :1] * t
    return DofFunctional(DofKind.EDGE_TANGENTIAL, (a, b), index, pts, np.outer(r.weights, t), _subs_for(kind, pts))


def _triangle_points(a, b, c, degree):
    r = rule_for("triangle", degree)
    pts = a + r.points[:, :1] * (b - a) + r.points[:, 1:] * (c - a)
    return pts, r.weights, np.cross(b - a, c - a)


def _outward(N, face_pts, centroid):
    return N if N @ (face_pts.mean(0) - centroid) > 0 else -N


def _face(kind, verts, index, degree):
    rv = REF_VERTICES[kind]
    centroid = rv.mean(0)
    P = rv[list(verts)]
    if len(verts) == 3:
        pts, w, N = _triangle_points(*P, degree)
        N = _outward(N, P, centroid)
        return DofFunctional(DofKind.FACE_FLUX, verts, index, pts, np.outer(w, N), _subs_for(kind, pts))
    if kind is Kind.PYR:
        # the base is split along the v1-v3 diagonal, matching the sub-tets
        chunks, wts, subs = [], [], []
        for ell, tri in ((1, (0, 1, 2)), (2, (0, 2, 3))):
            pts, w, N = _triangle_points(*P[list(tri)], degree)
            N = _outward(N, P, centroid)
            chunks.append(pts)
            wts.append(np.outer(w, N))
            subs.append(np.full(len(pts), ell))
        return DofFunctional(DofKind.FACE_FLUX, verts, index, np.vstack(chunks), np.vstack(wts), np.concatenate(subs))
    r = rule_for("quad", degree)
    a, b, _, d = P
    pts = a + r.points[:, :1] * (b - a) + r.points[:, 1:] * (d - a)
    N = _outward(np.cross(b - a, d - a), P, centroid)
    return DofFunctional(DofKind.FACE_FLUX, verts, index, pts, np.outer(r.weights, N), _subs_for(kind, pts))


def _cell(kind, dkind, index, degree):
    r = rule_for(kind, degree)
    if dkind is DofKind.CELL_INTEGRAL:
        return DofFunctional(dkind, (), index, r.points, r.weights, _subs_for(kind, r.points))
    sign = np.where(r.sub == 1, 1.0, 1.0 if dkind is DofKind.CELL_MOMENT_SUM else -1.0)
    return DofFunctional(dkind, (1, 2), index, r.points, r.weights * sign, r.sub)


def _signed_div_diff(index, degree):
    pv = REF_VERTICES[Kind.PYR]
    chunks, wts, subs = [], [], []
    for ell, sign in ((1, 1.0), (2, -1.0)):
        tv = pv[list(PYR_SUBTETS[ell - 1])]
        c = tv.mean(0)
        for omit in range(4):
            tri = tv[[k for k in range(4) if k != omit]]
            pts, w, N = _triangle_points(*tri, degree)
            N = _outward(N, tri, c)
            chunks.append(pts)
            wts.append(sign * np.outer(w, N))
            subs.append(np.full(len(pts), ell))
    r = rule_for(Kind.PYR, degree)
    return DofFunctional(
        DofKind.SIGNED_DIV_DIFF, (1, 2), index,
        np.vstack(chunks), np.vstack(wts), np.concatenate(subs),
        div_points=r.points, div_weights=r.weights * np.where(r.sub == 1, 1.0, -1.0), div_sub=r.sub,
    )


@dataclass(frozen=True, eq=False)
class DofSet:
    space: Space
    kind: Kind
    functionals: tuple

    def __len__(self):
        return len(self.functionals)

    def __getitem__(self, i):
        """1-based access."""
        if not 1 <= i <= len(self.functionals):
            raise IndexError(i)
        return self.functionals[i - 1]

    def __iter__(self):
        return iter(self.functionals)

    @property
    def vector(self):
        return self.space.is_vector

    def __post_init__(self):
        fs = self.functionals
        object.__setattr__(self, "points", np.vstack([f.points for f in fs]))
        object.__setattr__(self, "weights", np.concatenate([f.weights for f in fs]))
        object.__setattr__(self, "sub", np.concatenate([f.sub for f in fs]))
        object.__setattr__(self, "owner", np.concatenate([np.full(len(f.points), i) for i, f in enumerate(fs)]))

    def apply_values(self, vals):
        """DOF values from field samples already taken at ``self.points``."""
        vals = _check_arity(vals, self.vector)
        contrib = np.sum(self.weights * vals, axis=1) if self.vector else self.weights * vals
        return np.bincount(self.owner, weights=contrib, minlength=len(self.functionals))

    def apply(self, f):
        """All DOF values of ``f`` in one batched evaluation."""
        f = as_ref_field(f)
        out = self.apply_values(f.value(self.points, self.sub))
        div = _field_div(f)
        if div is not None:
            for i, fn in enumerate(self.functionals):
                if fn.kind is DofKind.SIGNED_DIV_DIFF:
                    out[i] = apply(fn, f)
        return out

    def matrix(self, shapes: BasisSet | None = None):
        shapes = shapes if shapes is not None else basis(self.space, self.kind)
        return np.column_stack([self.apply(s) for s in shapes])


@lru_cache(maxsize=None)
def _dof_set(space, kind, degree):
    fs = []
    if space is Space.H1:
        for i, v in enumerate(REF_VERTICES[kind]):
            p = v[None, :]
            fs.append(DofFunctional(DofKind.VERTEX_EVAL, (i,), i + 1, p, np.ones(1), _subs_for(kind, p)))
    elif space is Space.HCURL:
        for i, (a, b) in enumerate(EDGES[kind]):
            fs.append(_edge(kind, a, b, i + 1, degree))
    elif space is Space.HDIV:
        for i, verts in enumerate(FACES[kind]):
            fs.append(_face(kind, verts, i + 1, degree))
        if kind is Kind.PYR:
            fs.append(_signed_div_diff(len(fs) + 1, degree))
    elif kind is Kind.PYR:
        fs.append(_cell(kind, DofKind.CELL_MOMENT_SUM, 1, degree))
        fs.append(_cell(kind, DofKind.CELL_MOMENT_DIFF, 2, degree))
    else:
        fs.append(_cell(kind, DofKind.CELL_INTEGRAL, 1, degree))
    return DofSet(space, kind, tuple(fs))


def dof_set(space, kind, degree=DOF_DEGREE) -> DofSet:
    return _dof_set(Space(space), Kind(kind), int(degree))
