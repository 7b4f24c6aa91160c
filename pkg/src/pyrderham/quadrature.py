"""Gaussian quadrature on reference segments, triangles, quads, tets, hexes and pyramids.

Simplex rules are collapsed (Stroud conical product) Gauss-Jacobi rules, so
every weight is positive and any degree is available.  The pyramid rule is
the union of two tet rules mapped onto the sub-tetrahedra; its points carry
a ``sub`` label (1 or 2) so piecewise integrands never need to classify
points lying near the diagonal plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .refgeom import PYR_SUBTETS, REF_VERTICES, Kind

MEASURE = {
    "segment": 1.0,
    "triangle": 0.5,
    "quad": 1.0,
    "tet": 1 / 6,
    "hex": 1.0,
    "pyr": 1 / 3,
}
DIM = {"segment": 1, "triangle": 2, "quad": 2, "tet": 3, "hex": 3, "pyr": 3}
MAX_DEGREE = 10

# Operational defaults.
DOF_DEGREE = 8
NORM_DEGREE = 8


@dataclass(frozen=True, eq=False)
class QuadRule:
    domain: str
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    exact_degree: int
    sub: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.weights)


def _gauss_jacobi01(n, alpha):
    """Gauss-Jacobi on [0, 1] for the weight ``(1 - t)**alpha``."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1) / 2, w / 2 ** (alpha + 1)


def _npts(degree):
    return degree // 2 + 1


def _frozen(*arrays):
    for a in arrays:
        if a is not None:
            a.setflags(write=False)
    return arrays


@lru_cache(maxsize=None)
def rule_for(domain, degree) -> QuadRule:
    """Smallest available rule on ``domain`` exact for polynomials of ``degree``."""
    domain = domain.value if isinstance(domain, Kind) else str(domain)
    if domain not in MEASURE:
        raise ValueError(f"unknown quadrature domain {domain!r}")
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"quadrature degree must be in [1, {MAX_DEGREE}], got {degree}")
    n = _npts(degree)
    g, gw = _gauss_jacobi01(n, 0)
    sub = None
    if domain == "segment":
        pts, wts = g[:, None], gw
    elif domain in ("quad", "hex"):
        d = DIM[domain]
        grids = np.meshgrid(*([g] * d), indexing="ij")
        wgrid = np.meshgrid(*([gw] * d), indexing="ij")
        pts = np.stack([c.ravel() for c in grids], axis=1)
        wts = np.prod([c.ravel() for c in wgrid], axis=0)
    elif domain == "triangle":
        u, wu = _gauss_jacobi01(n, 1)
        U, Vv = np.meshgrid(u, g, indexing="ij")
        WU, WV = np.meshgrid(wu, gw, indexing="ij")
        pts = np.stack([U.ravel(), ((1 - U) * Vv).ravel()], axis=1)
        wts = (WU * WV).ravel()
    elif domain == "tet":
        u, wu = _gauss_jacobi01(n, 2)
        v, wv = _gauss_jacobi01(n, 1)
        U, Vv, W = np.meshgrid(u, v, g, indexing="ij")
        WU, WV, WW = np.meshgrid(wu, wv, gw, indexing="ij")
        pts = np.stack([U.ravel(), ((1 - U) * Vv).ravel(), ((1 - U) * (1 - Vv) * W).ravel()], axis=1)
        wts = (WU * WV * WW).ravel()
    else:  # pyramid: union of the two sub-tet rules
        base = rule_for("tet", degree)
        pv = REF_VERTICES[Kind.PYR]
        chunks, wchunks, subs = [], [], []
        for ell, s in enumerate(PYR_SUBTETS, start=1):
            tv = pv[list(s)]
            A = (tv[1:] - tv[0]).T
            chunks.append(base.points @ A.T + tv[0])
            wchunks.append(base.weights * abs(np.linalg.det(A)))
            subs.append(np.full(len(base), ell))
        pts, wts, sub = np.vstack(chunks), np.concatenate(wchunks), np.concatenate(subs)
    pts, wts = np.ascontiguousarray(pts, dtype=float), np.asarray(wts, dtype=float)
    _frozen(pts, wts, sub)
    return QuadRule(domain, pts, wts, 2 * n - 1, sub)


def integrate(rule: QuadRule, f):
    """Sum ``w_i f(p_i)``; ``f`` receives the whole ``(n, d)`` point array."""
    vals = np.asarray(f(rule.points), dtype=float)
    return float(np.tensordot(rule.weights, vals, axes=(0, 0)))
