"""Demo meshes, manufactured fields and convergence studies."""
from __future__ import annotations

import csv
import io
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .femspace import FieldFn
from .globalspace import interpolate_global, interpolation_errors
from .mesh import STRATEGIES, InvalidMeshError, ThpMesh, load_mesh, refine, validate
from .quadrature import MAX_DEGREE, NORM_DEGREE, rule_for
from .refbasis import SIZES, Space

log = logging.getLogger(__name__)

DEFAULT_SEED = 42
SEED_ENV = "PYRDERHAM_SEED"
MAX_LEVELS = 6
MAX_PERTURBATION = 0.2
BOX = (np.zeros(3), np.array([2.0, 1.0, 1.0]))


def resolve_seed(seed=None):
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else DEFAULT_SEED


def _oriented_pyramid(base, apex, X):
    """Order a cyclic quad so that its normal points toward ``apex``."""
    P = X[list(base)]
    n = np.cross(P[1] - P[0], P[3] - P[0])
    if n @ (X[apex] - P.mean(0)) < 0:
        base = (base[0], base[3], base[2], base[1])
    return tuple(base) + (apex,)


def _oriented_tet(ids, X):
    ids = list(ids)
    if np.linalg.det(X[ids[1:]] - X[ids[0]]) < 0:
        ids[2], ids[3] = ids[3], ids[2]
    return tuple(ids)


def build_demo_thp(perturbation=0.0, seed=None) -> ThpMesh:
    """Hex-pyramid-tet partition of the box ``[0,2] x [0,1] x [0,1]``.

    The left unit cube is one hexahedron.  The right cube is split into
    six pyramids with apex at its centre; the one on the face ``x = 2`` is
    further cut into two tetrahedra.

    With ``perturbation = p > 0`` every vertex moves by ``p * h`` times a
    seeded random unit vector, with the components normal to any bounding
    plane it lies on removed, so the box is preserved while hexes and
    pyramids become non-affine.
    """
    if not 0 <= perturbation < MAX_PERTURBATION:
        raise ValueError(f"perturbation must be in [0, {MAX_PERTURBATION}), got {perturbation}")
    X = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
         [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
         [2, 0, 0], [2, 1, 0], [2, 0, 1], [2, 1, 1],
         [1.5, 0.5, 0.5]],
        dtype=float,
    )
    c = 12
    els = [("hex", (0, 1, 2, 3, 4, 5, 6, 7))]
    faces = (
        (1, 2, 6, 5),   # x = 1, shared with the hex
        (1, 8, 10, 5),  # y = 0
        (2, 9, 11, 6),  # y = 1
        (1, 8, 9, 2),   # z = 0
        (5, 10, 11, 6), # z = 1
    )
    for f in faces:
        els.append(("pyr", _oriented_pyramid(f, c, X)))
    # face x = 2 as two tets split along the 8-11 diagonal
    els.append(("tet", _oriented_tet((8, 9, 11, c), X)))
    els.append(("tet", _oriented_tet((8, 11, 10, c), X)))
    mesh0 = ThpMesh(X, els)
    if perturbation > 0:
        rng = np.random.default_rng(resolve_seed(seed))
        u = rng.standard_normal(X.shape)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        lo, hi = BOX
        fixed = np.isclose(X, lo) | np.isclose(X, hi)
        u[fixed] = 0.0
        mesh0 = ThpMesh(X + perturbation * mesh0.h * u, els)
    rep = validate(mesh0)
    if not rep.ok:
        raise InvalidMeshError(f"demo mesh with perturbation {perturbation} is invalid: {rep.summary()}", rep)
    return mesh0


# ------------------------------------------------------------- field catalog

def _zeros(x):
    return np.zeros(len(x))


def _zeros3(x):
    return np.zeros((len(x), 3))


_A = np.array([0.3, -0.2, 0.5])
_B = np.array([0.7, 0.4, -0.6])


def _affine(space):
    if space is Space.H1:
        return FieldFn(
            lambda x: 1.0 + 2.0 * x[:, 0] - 0.5 * x[:, 1] + 0.25 * x[:, 2], "scalar",
            grad=lambda x: np.tile([2.0, -0.5, 0.25], (len(x), 1)), name="affine",
        )
    if space is Space.HCURL:
        # a + b x x, curl = 2 b
        return FieldFn(
            lambda x: _A + np.cross(_B, x), "vector",
            curl=lambda x: np.tile(2 * _B, (len(x), 1)), name="affine",
        )
    if space is Space.HDIV:
        # a + beta x, div = 3 beta
        return FieldFn(lambda x: _A + 0.8 * x, "vector", div=lambda x: np.full(len(x), 2.4), name="affine")
    return FieldFn(lambda x: np.full(len(x), 1.5), "scalar", name="affine")


def _trig(space):
    pi = np.pi
    if space in (Space.H1, Space.L2):
        def v(x):
            return np.sin(pi * x[:, 0] / 2) * np.sin(pi * x[:, 1]) * np.sin(pi * x[:, 2]) + x[:, 0]

        def g(x):
            sx, sy, sz = np.sin(pi * x[:, 0] / 2), np.sin(pi * x[:, 1]), np.sin(pi * x[:, 2])
            cx, cy, cz = np.cos(pi * x[:, 0] / 2), np.cos(pi * x[:, 1]), np.cos(pi * x[:, 2])
            return np.stack([pi / 2 * cx * sy * sz + 1, pi * sx * cy * sz, pi * sx * sy * cz], axis=1)

        return FieldFn(v, "scalar", grad=g, name="trig")

    def v(x):
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        return np.stack([np.sin(pi * Y) * np.cos(Z) + np.sin(pi * X / 2), np.sin(pi * Z) * X, np.cos(pi * X / 2) * np.exp(Y)], axis=1)

    def curl(x):
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        # the sin(pi x / 2) term of v_1 is a gradient and drops out
        return np.stack([
            np.cos(pi * X / 2) * np.exp(Y) - pi * X * np.cos(pi * Z),
            -np.sin(pi * Y) * np.sin(Z) + pi / 2 * np.sin(pi * X / 2) * np.exp(Y),
            np.sin(pi * Z) - pi * np.cos(pi * Y) * np.cos(Z),
        ], axis=1)

    def div(x):
        return pi / 2 * np.cos(pi * x[:, 0] / 2)

    return FieldFn(v, "vector", curl=curl, div=div, name="trig")


FIELD_NAMES = ("affine", "trig")


def catalog_field(space, name) -> FieldFn:
    space = Space(space)
    if name == "affine":
        return _affine(space)
    if name == "trig":
        return _trig(space)
    raise KeyError(f"unknown field {name!r}; choose from {FIELD_NAMES}")


# ------------------------------------------------------------- convergence

@dataclass
class StudyConfig:
    """Parameters of a convergence study.

    ``levels`` counts meshes: levels 0 .. levels-1 are used.
    """

    space: Space
    field: str = "trig"
    levels: int = 4
    mesh: str | None = None
    degree: int = NORM_DEGREE
    perturbation: float = 0.1
    seed: int | None = None
    strategy: str = "shortest"

    def __post_init__(self):
        self.space = Space(self.space)
        if self.field not in FIELD_NAMES:
            raise ValueError(f"unknown field {self.field!r}")
        if not 2 <= self.levels <= MAX_LEVELS:
            raise ValueError(f"levels must be in [2, {MAX_LEVELS}], got {self.levels}")
        if not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in [1, {MAX_DEGREE}]")
        if not 0 <= self.perturbation < MAX_PERTURBATION:
            raise ValueError(f"perturbation must be in [0, {MAX_PERTURBATION})")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown refinement strategy {self.strategy!r}")


@dataclass
class ErrorRow:
    level: int
    h: float
    e_l2: float
    e_deriv: float
    rate_l2: float
    rate_deriv: float
    seconds: float = 0.0


@dataclass
class ErrorReport:
    config: StudyConfig
    rows: list = field(default_factory=list)

    def final_rates(self):
        r = self.rows[-1]
        return r.rate_l2, r.rate_deriv

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "h", "e_l2", "e_deriv", "rate_l2", "rate_deriv"])
        for r in self.rows:
            w.writerow([r.level] + [_fmt(v) for v in (r.h, r.e_l2, r.e_deriv, r.rate_l2, r.rate_deriv)])
        return buf.getvalue()


def _fmt(v):
    return "nan" if not np.isfinite(v) else "%.12g" % v


def _rate(prev, cur):
    if prev is None or not (np.isfinite(prev) and np.isfinite(cur)) or prev <= 0 or cur <= 0:
        return float("nan")
    return float(np.log2(prev / cur))


def base_mesh(cfg: StudyConfig) -> ThpMesh:
    if cfg.mesh is not None:
        m = load_mesh(cfg.mesh)
        rep = validate(m)
        if not rep.ok:
            raise InvalidMeshError(f"{cfg.mesh}: {rep.summary()}", rep)
        return m
    return build_demo_thp(cfg.perturbation, cfg.seed)


def run_convergence(cfg: StudyConfig) -> ErrorReport:
    fld = catalog_field(cfg.space, cfg.field)
    report = ErrorReport(cfg)
    mesh = base_mesh(cfg)
    prev = None
    for level in range(cfg.levels):
        if level:
            mesh = refine(mesh, cfg.strategy, check=False)
        t0 = time.perf_counter()
        gf = interpolate_global(mesh, cfg.space, fld)
        e0, e1 = interpolation_errors(gf, fld, cfg.degree)
        dt = time.perf_counter() - t0
        row = ErrorRow(
            level, mesh.h, e0, e1,
            _rate(prev.e_l2 if prev else None, e0),
            _rate(prev.e_deriv if prev else None, e1),
            dt,
        )
        log.info("level %d: %d elements, h=%.4g, e_l2=%.4g, e_deriv=%.4g (%.2fs)", level, len(mesh), row.h, e0, e1, dt)
        report.rows.append(row)
        prev = row
    return report


# ---------------------------------------------------------- element suites

_EXPONENTS = np.array([(a, b, c) for a in range(3) for b in range(3) for c in range(3) if a + b + c <= 2])


def _monomials(x, E):
    return np.prod(x[:, None, :] ** E[None, :, :], axis=2)


def _monomial_grad(x, E):
    """``(n, nm, 3)`` partial derivatives of the monomials."""
    out = np.zeros((len(x), len(E), 3))
    for j in range(3):
        Ej = E.copy()
        Ej[:, j] = np.maximum(Ej[:, j] - 1, 0)
        out[:, :, j] = E[:, j] * _monomials(x, Ej)
    return out


def polynomial_field(coeffs, name="poly") -> FieldFn:
    """Quadratic polynomial field with exact derivatives.

    ``coeffs`` has shape ``(10,)`` (scalar) or ``(3, 10)`` (vector) over the
    monomials of degree at most 2.
    """
    C = np.asarray(coeffs, dtype=float)
    E = _EXPONENTS
    if C.ndim == 1:
        return FieldFn(
            lambda x: _monomials(x, E) @ C, "scalar",
            grad=lambda x: np.einsum("k,nkj->nj", C, _monomial_grad(x, E)), name=name,
        )

    def jac(x):
        return np.einsum("ik,nkj->nij", C, _monomial_grad(x, E))

    def curl(x):
        D = jac(x)
        return np.stack([D[:, 2, 1] - D[:, 1, 2], D[:, 0, 2] - D[:, 2, 0], D[:, 1, 0] - D[:, 0, 1]], axis=1)

    return FieldFn(
        lambda x: _monomials(x, E) @ C.T, "vector",
        curl=curl, div=lambda x: np.trace(jac(x), axis1=1, axis2=2), name=name,
    )


def random_polynomial_field(space, rng) -> FieldFn:
    space = Space(space)
    shape = (3, len(_EXPONENTS)) if space.is_vector else (len(_EXPONENTS),)
    return polynomial_field(rng.uniform(-1, 1, shape), name=f"random-{space.value}")


def random_element(kind, rng, amplitude=0.15):
    """A valid element with every vertex moved by up to ``amplitude``."""
    from .refgeom import REF_VERTICES, ElementMap, Kind

    kind = Kind(kind)
    rule = rule_for(kind, 4)
    for _ in range(100):
        V = REF_VERTICES[kind] + rng.uniform(-amplitude, amplitude, REF_VERTICES[kind].shape)
        em = ElementMap(kind, V)
        _, J = em.jacobian(rule.points, rule.sub)
        if np.all(J > 0):
            return em
    raise RuntimeError("could not draw a valid element")


def sample_reference_points(kind, rng, n=50):
    """Uniform random points inside a reference element."""
    from .refgeom import Kind

    kind = Kind(kind)
    out = []
    while len(out) < n:
        p = rng.random(3)
        if kind is Kind.TET and p.sum() > 1:
            continue
        if kind is Kind.PYR and not (p[2] / 2 <= p[0] <= 1 - p[2] / 2 and p[2] / 2 <= p[1] <= 1 - p[2] / 2):
            continue
        out.append(p)
    return np.array(out)


def commuting_residuals(kind, n_fields=20, n_elements=10, n_points=50, seed=0):
    """Max residual of each commuting square over random fields and elements.

    Returns ``{Space.H1: r_grad, Space.HCURL: r_curl, Space.HDIV: r_div}``.
    """
    from .femspace import commuting_residual

    rng = np.random.default_rng(seed)
    out = {s: 0.0 for s in (Space.H1, Space.HCURL, Space.HDIV)}
    for _ in range(n_elements):
        em = random_element(kind, rng)
        xh = sample_reference_points(kind, rng, n_points)
        for _ in range(n_fields):
            for s in out:
                out[s] = max(out[s], commuting_residual(s, em, random_polynomial_field(s, rng), xh))
    return out


@dataclass
class ElementCheck:
    space: Space
    kind: str
    duality: float
    exactness: float
    commuting: float
    tol_duality: float = 1e-12
    tol_exact: float = 1e-13
    tol_commuting: float = 1e-10

    @property
    def passed(self):
        return self.duality <= self.tol_duality and self.exactness <= self.tol_exact and self.commuting <= self.tol_commuting


def element_suite(n_fields=5, n_elements=3, seed=0):
    """Duality, exactness and commuting checks for all 12 (space, kind) pairs."""
    from .dof import dof_set
    from .femspace import derivative_matrix
    from .refgeom import Kind

    rows = []
    for kind in Kind:
        comm = commuting_residuals(kind, n_fields, n_elements, seed=seed)
        for s in Space:
            dual = float(np.abs(dof_set(s, kind).matrix() - np.eye(SIZES[kind][s])).max())
            if s in (Space.H1, Space.HCURL):
                D1, D2 = derivative_matrix(s, kind).matrix, derivative_matrix(s.next, kind).matrix
                exact = float(np.abs(D2 @ D1).max())
            else:
                exact = 0.0
            rows.append(ElementCheck(s, kind.value, dual, exact, comm.get(s, 0.0)))
    return rows
