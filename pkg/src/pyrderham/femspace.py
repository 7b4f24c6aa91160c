"""Physical elements, nodal interpolation and local exterior derivatives.

Fields on a physical element are pulled back to the reference element by

    H1     v_hat = v o Phi
    Hcurl  v_hat = F^T (v o Phi)
    Hdiv   v_hat = J F^{-1} (v o Phi)
    L2     v_hat = J (v o Phi)

the reference DOFs are applied to ``v_hat``, and the interpolant is pushed
forward with the inverse maps.  Derivatives are pushed with the commuting
rules ``grad = F^{-T} grad_hat``, ``curl = F curl_hat / J`` and
``div = div_hat / J``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .dof import RefField, dof_set
from .quadrature import NORM_DEGREE, rule_for
from .refbasis import Space, basis, tabulate
from .refgeom import ElementMap, as_points

FD_STEP = 1e-6


def _fd_jacobian(f, x, h=FD_STEP):
    """Central-difference Jacobian ``D[n, i, j] = d f_i / d x_j`` (or ``(n, j)`` for scalars)."""
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class FieldFn:
    """A field on physical space with optional analytic derivatives.

    Missing derivatives fall back to central differences (step 1e-6,
    roughly 1e-9 relative accuracy for smooth fields).
    """

    value: Callable
    arity: str = "scalar"
    grad: Callable | None = None
    curl: Callable | None = None
    div: Callable | None = None
    name: str = ""

    def __call__(self, x):
        return self.value(as_points(x))

    def gradient(self, x):
        x = as_points(x)
        return self.grad(x) if self.grad is not None else _fd_jacobian(self.value, x)

    def curl_of(self, x):
        x = as_points(x)
        if self.curl is not None:
            return self.curl(x)
        D = _fd_jacobian(self.value, x)
        return np.stack([D[:, 2, 1] - D[:, 1, 2], D[:, 0, 2] - D[:, 2, 0], D[:, 1, 0] - D[:, 0, 1]], axis=1)

    def div_of(self, x):
        x = as_points(x)
        if self.div is not None:
            return self.div(x)
        return np.trace(_fd_jacobian(self.value, x), axis1=1, axis2=2)

    def derivative(self, space, x):
        space = Space(space)
        if space is Space.H1:
            return self.gradient(x)
        if space is Space.HCURL:
            return self.curl_of(x)
        if space is Space.HDIV:
            return self.div_of(x)
        raise ValueError("L2 fields have no derivative in the complex")

    def derivative_field(self, space):
        """The field ``d v`` as a FieldFn of the next space."""
        space = Space(space)
        zero_vec = lambda x: np.zeros((len(x), 3))  # noqa: E731
        zero = lambda x: np.zeros(len(x))  # noqa: E731
        if space is Space.H1:
            return FieldFn(self.gradient, "vector", curl=zero_vec, name=f"grad({self.name})")
        if space is Space.HCURL:
            return FieldFn(self.curl_of, "vector", div=zero, name=f"curl({self.name})")
        if space is Space.HDIV:
            return FieldFn(self.div_of, "scalar", name=f"div({self.name})")
        raise ValueError("L2 fields have no derivative in the complex")


_ARITY = {Space.H1: "scalar", Space.HCURL: "vector", Space.HDIV: "vector", Space.L2: "scalar"}


def _check(space, field):
    arity = getattr(field, "arity", None)
    if arity is not None and arity != _ARITY[space]:
        from .dof import ArityError

        raise ArityError(f"{space.value} needs a {_ARITY[space]} field, got {arity}")


def pull_values(space, F, J, v):
    if space is Space.H1:
        return v
    if space is Space.HCURL:
        return np.einsum("nji,nj->ni", F, v)
    if space is Space.HDIV:
        return J[:, None] * np.linalg.solve(F, v[..., None])[..., 0]
    return J * v


def push_values(space, F, J, vhat):
    if space is Space.H1:
        return vhat
    if space is Space.HCURL:
        return np.linalg.solve(np.transpose(F, (0, 2, 1)), vhat[..., None])[..., 0]
    if space is Space.HDIV:
        return np.einsum("nij,nj->ni", F, vhat) / J[:, None]
    return vhat / J


def pullback(space, emap: ElementMap, field) -> RefField:
    """Reference-domain representative of a physical field."""
    space = Space(space)
    _check(space, field)
    fval = field.value if isinstance(field, FieldFn) else field

    def value(xh, sub=None):
        xh = as_points(xh)
        v = np.asarray(fval(emap.map_point(xh, sub)), dtype=float)
        if space is Space.H1:
            return v
        F, J = emap.jacobian(xh, sub)
        if np.any(np.abs(J) <= 1e-300):
            raise np.linalg.LinAlgError("singular element map")
        return pull_values(space, F, J, v)

    div = None
    if space is Space.HDIV and isinstance(field, FieldFn) and field.div is not None:
        def div(xh, sub=None):
            xh = as_points(xh)
            _, J = emap.jacobian(xh, sub)
            return J * field.div(emap.map_point(xh, sub))

    return RefField(value, div)


@dataclass(frozen=True, eq=False)
class LocalInterpolant:
    space: Space
    element: ElementMap
    coefficients: np.ndarray = field(repr=False)

    def reference_value(self, xh, sub=None):
        vals = basis(self.space, self.element.kind).values(xh, sub)
        return np.tensordot(self.coefficients, vals, axes=(0, 0))

    def reference_derivative(self, xh, sub=None):
        vals = basis(self.space, self.element.kind).derivatives(xh, sub)
        return np.tensordot(self.coefficients, vals, axes=(0, 0))

    def value(self, xh, sub=None):
        single = np.ndim(xh) == 1
        xh = as_points(xh)
        F, J = self.element.jacobian(xh, sub)
        out = push_values(self.space, F, J, self.reference_value(xh, sub))
        return out[0] if single else out

    def derivative(self, xh, sub=None):
        single = np.ndim(xh) == 1
        xh = as_points(xh)
        F, J = self.element.jacobian(xh, sub)
        out = push_values(self.space.next, F, J, self.reference_derivative(xh, sub))
        return out[0] if single else out


def eval_interpolant(u: LocalInterpolant, xh, sub=None):
    return u.value(xh, sub)


def eval_interpolant_derivative(u: LocalInterpolant, xh, sub=None):
    return u.derivative(xh, sub)


def interpolate(space, emap: ElementMap, field) -> LocalInterpolant:
    space = Space(space)
    coeffs = dof_set(space, emap.kind).apply(pullback(space, emap, field))
    return LocalInterpolant(space, emap, coeffs)


@dataclass(frozen=True, eq=False)
class LocalDerivativeMatrix:
    source: Space
    target: Space
    matrix: np.ndarray = field(repr=False)


@lru_cache(maxsize=None)
def _derivative_matrix(source, kind):
    target = source.next
    ds = dof_set(target, kind)
    cols = [ds.apply(RefField(shape.derivative)) for shape in basis(source, kind)]
    M = np.column_stack(cols)
    M.setflags(write=False)
    return LocalDerivativeMatrix(source, target, M)


def derivative_matrix(source, kind) -> LocalDerivativeMatrix:
    """Target DOFs applied to the exterior derivatives of the source shapes."""
    source = Space(source)
    if source is Space.L2:
        raise ValueError("no derivative out of L2")
    from .refgeom import Kind

    return _derivative_matrix(source, Kind(kind))


def numeric_rank(M, rtol=1e-10):
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def element_errors(u: LocalInterpolant, field: FieldFn, degree=NORM_DEGREE):
    """Squared L2 errors ``(|v - u|^2, |d v - d u|^2)`` over one element.

    The second entry is ``nan`` for L2 interpolants.
    """
    emap = u.element
    rule = rule_for(emap.kind, degree)
    xh, sub = rule.points, rule.sub
    x = emap.map_point(xh, sub)
    F, J = emap.jacobian(xh, sub)
    w = rule.weights * J
    vals = tabulate(u.space, emap.kind, rule)
    uh = push_values(u.space, F, J, np.tensordot(u.coefficients, vals, axes=(0, 0)))
    diff = np.asarray(field.value(x)) - uh
    e0 = float(w @ (diff**2 if diff.ndim == 1 else np.sum(diff**2, axis=1)))
    if u.space is Space.L2:
        return e0, float("nan")
    dvals = tabulate(u.space, emap.kind, rule, derivative=True)
    duh = push_values(u.space.next, F, J, np.tensordot(u.coefficients, dvals, axes=(0, 0)))
    ddiff = field.derivative(u.space, x) - duh
    e1 = float(w @ (ddiff**2 if ddiff.ndim == 1 else np.sum(ddiff**2, axis=1)))
    return e0, e1


def commuting_residual(space, emap: ElementMap, field: FieldFn, xhat):
    """``max |Pi_next(d v) - d(Pi v)|`` over physical samples at ``xhat``."""
    space = Space(space)
    u = interpolate(space, emap, field)
    w = interpolate(space.next, emap, field.derivative_field(space))
    a = w.value(xhat)
    b = u.derivative(xhat)
    return float(np.max(np.abs(a - b)))
