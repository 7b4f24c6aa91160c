"""Lowest-order reference shape functions for H1, H(curl), H(div) and L2.

Tetrahedral and hexahedral bases are the classical first-kind
Nedelec / Raviart-Thomas families.  Pyramid bases are composite: on each
sub-tetrahedron a shape function is a short expansion in that sub-tet's
barycentric coordinates,

* H1     ``c * lam_a`` or ``c * lam_a * lam_b``
* Hcurl  ``c * lam_a grad(lam_b)``
* Hdiv   ``c * lam_a grad(lam_b) x grad(lam_c)``
* L2     a constant per sub-tet

which makes exterior derivatives exact: ``curl(lam_a grad lam_b) =
grad lam_a x grad lam_b`` and ``div(lam_a grad lam_b x grad lam_c) =
det(grad lam_a, grad lam_b, grad lam_c)``.

Indices in term tuples are 0-based; ``ShapeFunction.index`` is 1-based to
match the usual element tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .refgeom import PYR_BARY, PYR_SUBTETS, REF_VERTICES, Kind, as_points, pyramid_subtet_of


class Space(str, Enum):
    H1 = "h1"
    HCURL = "hcurl"
    HDIV = "hdiv"
    L2 = "l2"

    @property
    def is_vector(self):
        return self in (Space.HCURL, Space.HDIV)

    @property
    def next(self):
        order = list(Space)
        i = order.index(self)
        if i == len(order) - 1:
            raise ValueError("L2 is the end of the complex")
        return order[i + 1]


class UnsupportedDerivativeError(ValueError):
    """L2 shape functions carry no exterior derivative."""


SIZES = {
    Kind.TET: {Space.H1: 4, Space.HCURL: 6, Space.HDIV: 4, Space.L2: 1},
    Kind.HEX: {Space.H1: 8, Space.HCURL: 12, Space.HDIV: 6, Space.L2: 1},
    Kind.PYR: {Space.H1: 5, Space.HCURL: 8, Space.HDIV: 6, Space.L2: 2},
}


# ---------------------------------------------------------------- pyramid terms

def _w(i, j):
    """Whitney edge form ``lam_i grad lam_j - lam_j grad lam_i``."""
    return ((1.0, i, j), (-1.0, j, i))


def _chi(i, j, k):
    """Whitney face form (without the usual factor 2)."""
    return ((1.0, i, j, k), (1.0, j, k, i), (1.0, k, i, j))


def _scaled(c, terms):
    return tuple((c * t[0],) + tuple(t[1:]) for t in terms)


_L1, _L2, _L3 = (1.0, (0,)), (1.0, (1,)), (1.0, (2,))
_L12, _mL12 = (1.0, (0, 1)), (-1.0, (0, 1))

PYR_H1 = (
    ((_L2, _mL12), (_L1, _mL12)),
    ((_L3, _L12), (_L12,)),
    ((_L1, _mL12), (_L2, _mL12)),
    ((_L12,), (_L3, _L12)),
    (((1.0, (3,)),), ((1.0, (3,)),)),
)

PYR_HCURL = (
    (_w(1, 2) + ((1.0, 1, 0),), ((1.0, 0, 1),)),
    (((1.0, 1, 0),), _w(0, 2) + ((1.0, 0, 1),)),
    (_w(1, 3), _w(0, 3)),
    (_w(2, 0) + ((-1.0, 0, 1),), ((-1.0, 1, 0),)),
    (_w(2, 3), ()),
    (((1.0, 0, 1),), _w(1, 2) + ((1.0, 1, 0),)),
    (_w(0, 3), _w(1, 3)),
    ((), _w(2, 3)),
)

PYR_HDIV = (
    (_scaled(2, _chi(1, 2, 3)) + _scaled(-1, _chi(0, 1, 3)), _chi(0, 1, 3)),
    (_chi(0, 1, 3), _scaled(2, _chi(0, 3, 2)) + _scaled(-1, _chi(0, 1, 3))),
    (_scaled(2, _chi(0, 3, 2)) + _scaled(-1, _chi(0, 1, 3)), _chi(0, 1, 3)),
    (_chi(0, 1, 3), _scaled(2, _chi(1, 2, 3)) + _scaled(-1, _chi(0, 1, 3))),
    (_chi(0, 2, 1), _chi(0, 2, 1)),
    (_chi(0, 1, 3), _scaled(-1, _chi(0, 1, 3))),
)


def _subtet_volumes():
    pv = REF_VERTICES[Kind.PYR]
    out = []
    for s in PYR_SUBTETS:
        tv = pv[list(s)]
        out.append(abs(np.linalg.det(tv[1:] - tv[0])) / 6.0)
    return tuple(out)


_VOL_T1, _VOL_T2 = _subtet_volumes()
PYR_L2 = (
    (1 / (2 * _VOL_T1), 1 / (2 * _VOL_T2)),
    (1 / (2 * _VOL_T1), -1 / (2 * _VOL_T2)),
)


def _eval_pyr_piece(space, terms, lam, G, derivative):
    n = len(lam)
    scalar = (space is Space.H1 and not derivative) or (space is Space.HDIV and derivative) or space is Space.L2
    out = np.zeros(n) if scalar else np.zeros((n, 3))
    if space is Space.L2:
        out += terms
        return out
    for t in terms:
        c = t[0]
        if space is Space.H1:
            idx = t[1]
            if not derivative:
                val = c * np.ones(n)
                for a in idx:
                    val = val * lam[:, a]
                out += val
            elif len(idx) == 1:
                out += c * G[idx[0]]
            else:
                a, b = idx
                out += c * (lam[:, [a]] * G[b] + lam[:, [b]] * G[a])
        elif space is Space.HCURL:
            _, a, b = t
            if derivative:
                out += c * np.cross(G[a], G[b])
            else:
                out += c * lam[:, [a]] * G[b]
        else:
            _, a, b, d = t
            bxd = np.cross(G[b], G[d])
            if derivative:
                out += c * (G[a] @ bxd)
            else:
                out += c * lam[:, [a]] * bxd
    return out


# --------------------------------------------------------------- tet / hex forms

def _tet_h1(i):
    def value(x):
        X, Y, Z = x.T
        return (1 - X - Y - Z, X, Y, Z)[i]

    grads = np.array([[-1, -1, -1], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)

    def deriv(x):
        return np.broadcast_to(grads[i], (len(x), 3)).copy()

    return value, deriv


_TET_HCURL = (
    (lambda X, Y, Z: (-Y, X, 0 * X), (0, 0, 2)),
    (lambda X, Y, Z: (Z, Z, 1 - X - Y), (-2, 2, 0)),
    (lambda X, Y, Z: (0 * X, -Z, Y), (2, 0, 0)),
    (lambda X, Y, Z: (1 - Y - Z, X, X), (0, -2, 2)),
    (lambda X, Y, Z: (Z, 0 * X, -X), (0, 2, 0)),
    (lambda X, Y, Z: (Y, 1 - X - Z, Y), (2, 0, -2)),
)


def _tet_hcurl(i):
    f, curl = _TET_HCURL[i]

    def value(x):
        return np.stack(f(*x.T), axis=1)

    def deriv(x):
        return np.broadcast_to(np.array(curl, dtype=float), (len(x), 3)).copy()

    return value, deriv


def _tet_hdiv(i):
    v = REF_VERTICES[Kind.TET][i]

    def value(x):
        return 2.0 * (x - v)

    def deriv(x):
        return np.full(len(x), 6.0)

    return value, deriv


def _const(c):
    def value(x):
        return np.full(len(x), float(c))

    return value, None


# 1D factors on [0, 1]: 'o' -> 1, 'p' -> t, 'm' -> 1 - t
_F = {"o": (lambda t: np.ones_like(t), 0.0), "p": (lambda t: t, 1.0), "m": (lambda t: 1 - t, -1.0)}


def _factor_product(x, code):
    vals = [_F[c][0](x[:, k]) for k, c in enumerate(code)]
    f = vals[0] * vals[1] * vals[2]
    grad = np.empty((len(x), 3))
    for k in range(3):
        d = _F[code[k]][1] * np.ones(len(x))
        others = [vals[j] for j in range(3) if j != k]
        grad[:, k] = d * others[0] * others[1]
    return f, grad


_HEX_H1 = ("mmm", "pmm", "ppm", "mpm", "mmp", "pmp", "ppp", "mpp")
_HEX_HCURL = (
    (0, "omm"), (0, "omp"), (0, "opm"),
    (1, "mom"), (1, "pom"), (1, "mop"),
    (2, "mmo"), (2, "mpo"), (2, "pmo"),
    (0, "opp"), (1, "pop"), (2, "ppo"),
)
_HEX_HDIV = ((0, -1.0, "m"), (0, 1.0, "p"), (1, -1.0, "m"), (1, 1.0, "p"), (2, -1.0, "m"), (2, 1.0, "p"))


def _hex_h1(i):
    code = _HEX_H1[i]
    return (lambda x: _factor_product(x, code)[0]), (lambda x: _factor_product(x, code)[1])


def _hex_hcurl(i):
    d, code = _HEX_HCURL[i]

    def value(x):
        f, _ = _factor_product(x, code)
        out = np.zeros((len(x), 3))
        out[:, d] = f
        return out

    def deriv(x):
        _, g = _factor_product(x, code)
        # curl(f e_d) = grad f x e_d
        e = np.zeros(3)
        e[d] = 1.0
        return np.cross(g, e)

    return value, deriv


def _hex_hdiv(i):
    d, sign, c = _HEX_HDIV[i]

    def value(x):
        out = np.zeros((len(x), 3))
        out[:, d] = sign * _F[c][0](x[:, d])
        return out

    def deriv(x):
        return np.full(len(x), sign * _F[c][1])

    return value, deriv


# ------------------------------------------------------------------ public API

@dataclass(frozen=True, eq=False)
class ShapeFunction:
    """One reference shape function.

    ``pieces`` holds the per-sub-tet term lists for pyramids and is empty
    for tetrahedra and hexahedra, which use closed-form evaluators.
    """

    space: Space
    kind: Kind
    index: int
    pieces: tuple = ()
    _value: object = field(default=None, repr=False)
    _deriv: object = field(default=None, repr=False)

    def __repr__(self):
        return f"ShapeFunction({self.space.value}, {self.kind.value}, {self.index})"

    def _pyr(self, x, sub, derivative):
        s = pyramid_subtet_of(x) if sub is None else np.broadcast_to(np.asarray(sub), (len(x),))
        out = None
        for ell in (1, 2):
            m = s == ell
            G, g = PYR_BARY[ell - 1]
            vals = _eval_pyr_piece(self.space, self.pieces[ell - 1], x[m] @ G.T + g, G, derivative)
            if out is None:
                out = np.zeros((len(x),) + vals.shape[1:])
            out[m] = vals
        return out

    def value(self, x, sub=None):
        single = np.ndim(x) == 1
        pts = as_points(x)
        out = self._pyr(pts, sub, False) if self.kind is Kind.PYR else self._value(pts)
        return out[0] if single else out

    def derivative(self, x, sub=None):
        """Gradient (H1), curl (Hcurl) or divergence (Hdiv)."""
        if self.space is Space.L2:
            raise UnsupportedDerivativeError("L2 shape functions have no exterior derivative")
        single = np.ndim(x) == 1
        pts = as_points(x)
        out = self._pyr(pts, sub, True) if self.kind is Kind.PYR else self._deriv(pts)
        return out[0] if single else out

    # used by the DOF machinery for the pyramid cell functional
    def div(self, x, sub=None):
        if self.space is not Space.HDIV:
            raise UnsupportedDerivativeError("div is only defined for H(div) shapes")
        return self.derivative(x, sub)


@dataclass(frozen=True, eq=False)
class BasisSet:
    space: Space
    kind: Kind
    shapes: tuple

    def __len__(self):
        return len(self.shapes)

    def __getitem__(self, i):
        """1-based access, matching the element tables."""
        if not 1 <= i <= len(self.shapes):
            raise IndexError(i)
        return self.shapes[i - 1]

    def __iter__(self):
        return iter(self.shapes)

    def values(self, x, sub=None):
        """Stacked values, shape ``(nshape, n)`` or ``(nshape, n, 3)``."""
        pts = as_points(x)
        return np.stack([s.value(pts, sub) for s in self.shapes])

    def derivatives(self, x, sub=None):
        pts = as_points(x)
        return np.stack([s.derivative(pts, sub) for s in self.shapes])


_TABLES = {
    Space.H1: PYR_H1,
    Space.HCURL: PYR_HCURL,
    Space.HDIV: PYR_HDIV,
    Space.L2: PYR_L2,
}

_CLOSED = {
    (Space.H1, Kind.TET): _tet_h1,
    (Space.HCURL, Kind.TET): _tet_hcurl,
    (Space.HDIV, Kind.TET): _tet_hdiv,
    (Space.L2, Kind.TET): lambda i: _const(6.0),
    (Space.H1, Kind.HEX): _hex_h1,
    (Space.HCURL, Kind.HEX): _hex_hcurl,
    (Space.HDIV, Kind.HEX): _hex_hdiv,
    (Space.L2, Kind.HEX): lambda i: _const(1.0),
}


@lru_cache(maxsize=None)
def basis(space, kind) -> BasisSet:
    space, kind = Space(space), Kind(kind)
    shapes = []
    for i in range(SIZES[kind][space]):
        if kind is Kind.PYR:
            shapes.append(ShapeFunction(space, kind, i + 1, pieces=_TABLES[space][i]))
        else:
            value, deriv = _CLOSED[(space, kind)](i)
            shapes.append(ShapeFunction(space, kind, i + 1, _value=value, _deriv=deriv))
    return BasisSet(space, kind, tuple(shapes))


def eval_value(shape: ShapeFunction, x, sub=None):
    return shape.value(x, sub)


def eval_derivative(shape: ShapeFunction, x, sub=None):
    return shape.derivative(x, sub)


@lru_cache(maxsize=None)
def _tabulate(space, kind, rule, derivative):
    b = basis(space, kind)
    arr = b.derivatives(rule.points, rule.sub) if derivative else b.values(rule.points, rule.sub)
    arr.setflags(write=False)
    return arr


def tabulate(space, kind, rule, derivative=False):
    """Cached basis values (or derivatives) at the points of a quadrature rule."""
    return _tabulate(Space(space), Kind(kind), rule, bool(derivative))
