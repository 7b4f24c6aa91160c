"""Acceptance checks, one per criterion.

Each check returns ``(passed, detail)``; the matching test prints one
PASS/FAIL line and asserts.  Run ``python3 tests/test_acceptance.py`` for
the summary table alone, or ``pytest tests/test_acceptance.py -s``.
"""
import time

import numpy as np
import pytest

from pyrderham.dof import dof_set
from pyrderham.femspace import derivative_matrix, numeric_rank
from pyrderham.globalspace import (
    check_conformity,
    derivative_operator,
    dof_counts,
    interpolate_global,
    interpolation_errors,
)
from pyrderham.harness import (
    StudyConfig,
    build_demo_thp,
    catalog_field,
    commuting_residuals,
    random_element,
    random_polynomial_field,
    run_convergence,
)
from pyrderham.mesh import distortion, refine, refine_n, validate
from pyrderham.refbasis import SIZES, Space
from pyrderham.refgeom import ElementMap, Kind, REF_VERTICES, vp_defect


def _timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


def criterion_1():
    worst = 0.0
    for kind in Kind:
        for s in Space:
            M = dof_set(s, kind).matrix()
            worst = max(worst, float(np.abs(M - np.eye(SIZES[kind][s])).max()))
    return worst <= 1e-12, f"max |DOF x basis - I| = {worst:.2e} over 12 pairs"


def criterion_2():
    G = derivative_matrix(Space.H1, Kind.PYR).matrix
    C = derivative_matrix(Space.HCURL, Kind.PYR).matrix
    D = derivative_matrix(Space.HDIV, Kind.PYR).matrix
    cg, dc = float(np.abs(C @ G).max()), float(np.abs(D @ C).max())
    ranks = (numeric_rank(G), numeric_rank(C), numeric_rank(D))
    # kernel of grad: null space of G
    _, sv, vt = np.linalg.svd(G)
    kernel = vt[np.sum(sv > 1e-10 * sv[0]):]
    const = kernel.shape[0] == 1 and np.allclose(np.abs(kernel[0]), 1 / np.sqrt(5), atol=1e-12)
    ok = cg <= 1e-13 and dc <= 1e-13 and ranks == (4, 4, 2) and const
    return ok, f"|curl.grad|={cg:.1e} |div.curl|={dc:.1e} ranks={ranks} ker(grad)=constants:{const}"


def criterion_3():
    r = commuting_residuals(Kind.PYR, n_fields=20, n_elements=10, n_points=50, seed=3)
    worst = max(r.values())
    return worst <= 1e-10, "grad {:.1e}, curl {:.1e}, div {:.1e}".format(*(r[s] for s in (Space.H1, Space.HCURL, Space.HDIV)))


def criterion_4():
    from pyrderham.mesh import ThpMesh

    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        em = random_element(Kind.PYR, rng, 0.2)
        m = refine(ThpMesh(em.vertices, [("pyr", range(5))]))
        vp = vp_defect(em.vertices[:4])
        for kind, nodes in m.elements:
            if kind is Kind.PYR:
                c = vp_defect(m.vertices[list(nodes[:4])])
                worst = max(worst, np.linalg.norm(c - vp / 4) / np.linalg.norm(vp / 4))
    hw = 0.0
    for _ in range(20):
        em = random_element(Kind.HEX, rng, 0.2)
        m = refine(ThpMesh(em.vertices, [("hex", range(8))]))
        V = em.vertices
        bot, top = vp_defect(V[:4]), vp_defect(V[4:])
        child = m.vertices[list(m.elements[0][1])]
        cb, ct = vp_defect(child[:4]), vp_defect(child[4:])
        hw = max(hw, np.linalg.norm(cb - (bot + top) / 8) / np.linalg.norm((bot + top) / 8),
                 np.linalg.norm(ct - top / 4) / np.linalg.norm(top / 4))
    return max(worst, hw) <= 1e-12, f"pyramid rel err {worst:.1e}, hex rel err {hw:.1e}"


def criterion_5():
    from pyrderham.mesh import ThpMesh

    counts = []
    for kind in Kind:
        m = refine(ThpMesh(REF_VERTICES[kind], [(kind, range(len(REF_VERTICES[kind])))]))
        counts.append(m.counts())
    shapes_ok = (
        counts[0][Kind.TET] == 8 and len(refine_n(ThpMesh(REF_VERTICES[Kind.TET], [("tet", range(4))]), 1)[1]) == 8
        and counts[1] == {Kind.TET: 0, Kind.HEX: 8, Kind.PYR: 0}
        and counts[2] == {Kind.TET: 8, Kind.HEX: 0, Kind.PYR: 4}
    )
    details = []
    ok = shapes_ok
    for strategy in ("fixed", "shortest"):
        meshes = refine_n(build_demo_thp(0.1), 4, strategy)
        v0 = meshes[0].volume()
        valid = all(validate(m).ok for m in meshes)
        dv = max(abs(m.volume() - v0) / v0 for m in meshes)
        ok = ok and valid and dv <= 1e-12
        details.append(f"{strategy}: valid={valid} dvol={dv:.1e} n={len(meshes[-1])}")
    return ok, f"children ok={shapes_ok}; " + "; ".join(details)


def criterion_6():
    mesh = build_demo_thp(0.1)
    rng = np.random.default_rng(6)
    jumps = {}
    for s in (Space.H1, Space.HCURL, Space.HDIV):
        f = random_polynomial_field(s, rng)
        jumps[s] = max(check_conformity(interpolate_global(mesh, s, f)).max_jump,
                       check_conformity(interpolate_global(mesh, s, catalog_field(s, "trig"))).max_jump)
    G = derivative_operator(mesh, Space.H1)
    C = derivative_operator(mesh, Space.HCURL)
    D = derivative_operator(mesh, Space.HDIV)
    dd = max(abs(C @ G).max(), abs(D @ C).max())
    n = dof_counts(mesh)
    euler = n[Space.H1] - n[Space.HCURL] + n[Space.HDIV] - n[Space.L2]
    ok = max(jumps.values()) <= 1e-11 and dd <= 1e-12 and euler == 1
    return ok, "jumps value {:.1e} tangential {:.1e} normal {:.1e}; |dd|={:.1e}; euler={}".format(
        jumps[Space.H1], jumps[Space.HCURL], jumps[Space.HDIV], dd, euler)


EXPECTED_RATES = {
    Space.H1: (2.0, 1.0),
    Space.HCURL: (1.0, 1.0),
    Space.HDIV: (1.0, 1.0),
    Space.L2: (1.0, None),
}


def criterion_7():
    ok, parts = True, []
    for s, (r0, r1) in EXPECTED_RATES.items():
        rep = run_convergence(StudyConfig(s, "trig", levels=4, perturbation=0.1))
        a, b = rep.final_rates()
        good = abs(a - r0) <= 0.15 and (r1 is None or abs(b - r1) <= 0.15)
        ok = ok and good
        parts.append(f"{s.value} {a:.3f}" + ("" if r1 is None else f"/{b:.3f}"))
    return ok, "final rates " + ", ".join(parts)


def criterion_8():
    worst = {}
    for p in (0.0, 0.1):
        meshes = refine_n(build_demo_thp(p), 3, "shortest")
        for s in Space:
            f = catalog_field(s, "affine")
            e = 0.0
            for m in meshes:
                e0, e1 = interpolation_errors(interpolate_global(m, s, f), f)
                e = max(e, e0, 0.0 if np.isnan(e1) else e1)
            worst[(p, s)] = e
    ok = max(worst.values()) <= 1e-11
    return ok, ", ".join(f"p={p} {s.value} {e:.1e}" for (p, s), e in worst.items())


def criterion_9():
    ms = refine_n(build_demo_thp(0.1), 3, "shortest")
    ds = [distortion(m) for m in ms]
    rf = [b.max_F / a.max_F for a, b in zip(ds, ds[1:])]
    rj = [b.max_J / a.max_J for a, b in zip(ds, ds[1:])]
    ok = all(0.4 <= r <= 0.6 for r in rf) and all(0.1 <= r <= 0.15 for r in rj)
    return ok, "max|F| ratios " + " ".join(f"{r:.3f}" for r in rf) + "; max|J| ratios " + " ".join(f"{r:.3f}" for r in rj)


CRITERIA = {
    1: ("unisolvence", criterion_1, 1.0),
    2: ("element exactness", criterion_2, 1.0),
    3: ("commuting diagram", criterion_3, 5.0),
    4: ("base defect scaling", criterion_4, 1.0),
    5: ("refinement combinatorics", criterion_5, 10.0),
    6: ("global conformity and exactness", criterion_6, 10.0),
    7: ("convergence rates", criterion_7, 300.0),
    8: ("reproduction", criterion_8, None),
    9: ("Jacobian diagnostics", criterion_9, None),
}


def run_criterion(n):
    name, fn, budget = CRITERIA[n]
    ok, detail, dt = _timed(fn)
    within = budget is None or dt < budget
    status = "PASS" if ok and within else "FAIL"
    budget_txt = "" if budget is None else f" (limit {budget:g}s)"
    print(f"criterion {n} [{name}]: {status}  {detail}; {dt:.2f}s{budget_txt}")
    return ok, within


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, within = run_criterion(n)
    assert ok
    assert within


if __name__ == "__main__":
    results = [run_criterion(n) for n in sorted(CRITERIA)]
    passed = sum(ok and w for ok, w in results)
    print(f"{passed}/{len(results)} criteria passed")
