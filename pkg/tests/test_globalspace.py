import numpy as np
import pytest

from pyrderham.femspace import FieldFn, interpolate
from pyrderham.globalspace import (
    GlobalField,
    PointLocator,
    build_dof_map,
    check_conformity,
    derivative_operator,
    dof_counts,
    global_derivative,
    global_ranks,
    interpolate_global,
    interpolation_errors,
    local_dof_values,
)
from pyrderham.harness import build_demo_thp, catalog_field, random_polynomial_field
from pyrderham.mesh import ThpMesh, refine, refine_n
from pyrderham.refbasis import Space
from pyrderham.refgeom import FACES, REF_VERTICES, Kind

TWO_TETS = ThpMesh(
    np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], dtype=float),
    [("tet", (0, 1, 2, 3)), ("tet", (1, 2, 3, 4))],
)


@pytest.fixture(scope="module")
def demo():
    return build_demo_thp(0.1)


def euler(mesh):
    n = dof_counts(mesh)
    return n[Space.H1] - n[Space.HCURL] + n[Space.HDIV] - n[Space.L2]


def test_single_pyramid_counts():
    m = ThpMesh(REF_VERTICES[Kind.PYR], [("pyr", range(5))])
    assert [dof_counts(m)[s] for s in Space] == [5, 8, 6, 2]


def test_two_tets_share_one_face():
    n = dof_counts(TWO_TETS)
    assert n[Space.HDIV] == 7
    assert n[Space.HCURL] == 9
    assert euler(TWO_TETS) == 1


def test_demo_counts_and_euler(demo):
    assert [dof_counts(demo)[s] for s in Space] == [13, 29, 30, 13]
    for m in refine_n(demo, 2, "shortest"):
        assert euler(m) == 1


def test_demo_ranks(demo):
    r = global_ranks(demo)
    assert (r[Space.H1], r[Space.HCURL], r[Space.HDIV]) == (12, 17, 13)


def test_edge_signs_follow_global_ids(demo):
    dm = build_dof_map(demo, "hcurl")
    from pyrderham.refgeom import EDGES

    for kind, (_, conn) in demo.blocks.items():
        loc = np.array(EDGES[kind])
        a, b = conn[:, loc[:, 0]], conn[:, loc[:, 1]]
        np.testing.assert_array_equal(dm.sign[kind], np.where(a < b, 1, -1))


def test_face_owner_is_smallest_element(demo):
    dm = build_dof_map(demo, "hdiv")
    for key, adj in demo.faces:
        e = min(a for a, _ in adj)
        gi = demo.face_index[key]
        assert dm.owner[gi] == e
        for el, lf in adj:
            idx, sg = dm.element_dofs(el)
            assert idx[lf] == gi
            assert sg[lf] == (1 if el == e else -1)


def test_constant_h1_field(demo):
    gf = interpolate_global(demo, "h1", FieldFn(lambda x: np.ones(len(x))))
    np.testing.assert_allclose(gf.coefficients, 1.0, atol=1e-15)
    np.testing.assert_allclose(global_derivative(gf).coefficients, 0, atol=1e-14)


def test_gradient_of_x1_edge_coefficients(demo):
    gf = interpolate_global(demo, "hcurl", FieldFn(lambda x: np.tile([1.0, 0, 0], (len(x), 1)), "vector"))
    X = demo.vertices
    E = demo.edges
    np.testing.assert_allclose(gf.coefficients, X[E[:, 1], 0] - X[E[:, 0], 0], atol=1e-13)


def test_shared_dofs_agree_from_both_sides(demo):
    # exact for polynomials; non-polynomial fields see the two face rules differ
    f = random_polynomial_field("hdiv", np.random.default_rng(4))
    dm = build_dof_map(demo, "hdiv")
    loc = local_dof_values(demo, "hdiv", f)
    vals = {}
    for kind, (idx, _) in demo.blocks.items():
        for r in range(len(idx)):
            for j, (g, s) in enumerate(zip(dm.index[kind][r], dm.sign[kind][r])):
                vals.setdefault(int(g), []).append(loc[kind][r, j] * s)
    spread = max(np.ptp(v) for v in vals.values())
    assert spread <= 1e-12


@pytest.mark.parametrize("space", [Space.H1, Space.HCURL, Space.HDIV])
def test_conformity(demo, space):
    rng = np.random.default_rng(0)
    rep = check_conformity(interpolate_global(demo, space, random_polynomial_field(space, rng)))
    assert rep.n_faces == sum(len(adj) == 2 for _, adj in demo.faces)
    assert rep.max_jump <= 1e-11
    assert rep.max_mismatch <= 1e-13


@pytest.mark.parametrize("space", [Space.H1, Space.HCURL, Space.HDIV])
def test_conformity_negative_control(demo, space):
    # corrupting one shared coefficient's sign on one side must show a jump
    gf = interpolate_global(demo, space, catalog_field(space, "trig"))
    dm = gf.dofmap
    shared = np.flatnonzero(np.bincount(np.concatenate([i.ravel() for i in dm.index.values()]), minlength=dm.size) > 1)
    g = shared[np.argmax(np.abs(gf.coefficients[shared]))]
    sign = {k: v.copy() for k, v in dm.sign.items()}
    for kind, idx in dm.index.items():
        r, c = np.nonzero(idx == g)
        if len(r):
            sign[kind][r[0], c[0]] *= -1
            break
    bad = type(dm)(dm.space, dm.mesh, dm.index, sign, dm.size, dm.owner)
    rep = check_conformity(GlobalField(space, demo, gf.coefficients, bad))
    assert rep.max_jump > 1e-3


def test_d_squared_zero(demo):
    m = refine(demo, "shortest")
    G, C, D = (derivative_operator(m, s) for s in (Space.H1, Space.HCURL, Space.HDIV))
    assert abs(C @ G).max() <= 1e-12
    assert abs(D @ C).max() <= 1e-12


@pytest.mark.parametrize("space", [Space.H1, Space.HCURL, Space.HDIV])
def test_global_commuting(demo, space):
    v = random_polynomial_field(space, np.random.default_rng(1))
    lhs = global_derivative(interpolate_global(demo, space, v)).coefficients
    rhs = interpolate_global(demo, space.next, v.derivative_field(space)).coefficients
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_global_matches_local_interpolant(demo):
    f = catalog_field("hcurl", "trig")
    gf = interpolate_global(demo, "hcurl", f)
    x = np.array([[0.2, 0.3, 0.1], [0.3, 0.1, 0.4]])
    for e in range(len(demo)):
        kind, _ = demo.elements[e]
        xh = x if kind is not Kind.TET else x / 2
        u = interpolate("hcurl", demo.element_map(e), f)
        np.testing.assert_allclose(gf.evaluate(e, xh), u.value(xh), atol=1e-12)


def test_interpolation_is_idempotent(demo):
    for space in Space:
        gf = interpolate_global(demo, space, catalog_field(space, "trig"))
        again = interpolate_global(demo, space, gf.as_field())
        np.testing.assert_allclose(again.coefficients, gf.coefficients, atol=1e-9)


def test_point_locator_round_trip(demo):
    loc = PointLocator(demo)
    rng = np.random.default_rng(2)
    for e in rng.choice(len(demo), 5, replace=False):
        kind, _ = demo.elements[e]
        xh = REF_VERTICES[kind].mean(0)[None]
        x = demo.element_map(int(e)).map_point(xh)
        el, found, _ = loc.locate(x)
        np.testing.assert_allclose(demo.element_map(int(el[0])).map_point(found), x, atol=1e-12)


def test_point_outside_mesh(demo):
    with pytest.raises(ValueError):
        PointLocator(demo).locate(np.array([[10.0, 10.0, 10.0]]))


def test_errors_decrease_under_refinement():
    ms = refine_n(build_demo_thp(0.0), 2, "shortest")
    f = catalog_field("hdiv", "trig")
    errs = [interpolation_errors(interpolate_global(m, "hdiv", f), f)[0] for m in ms]
    assert errs[0] > errs[1] > errs[2]


def test_affine_fields_exact_on_unperturbed_demo():
    m = build_demo_thp(0.0)
    for space in Space:
        f = catalog_field(space, "affine")
        e0, e1 = interpolation_errors(interpolate_global(m, space, f), f)
        assert e0 <= 1e-11
        assert space is Space.L2 or e1 <= 1e-11


def test_h1_affine_exact_on_perturbed_demo(demo):
    f = catalog_field("h1", "affine")
    assert max(interpolation_errors(interpolate_global(demo, "h1", f), f)) <= 1e-11


def test_discrete_divergence_theorem(demo):
    # cell integrals of div(Pi v) add up to the outward boundary fluxes
    gf = interpolate_global(demo, "hdiv", catalog_field("hdiv", "trig"))
    div = global_derivative(gf)
    l2 = build_dof_map(demo, "l2")
    cells = sum(div.coefficients[idx[:, 0]].sum() for idx in l2.index.values())
    bnd = [demo.face_index[k] for k, adj in demo.faces if len(adj) == 1]
    assert cells == pytest.approx(gf.coefficients[bnd].sum(), abs=1e-12)


def test_faces_of_pyramid_block_follow_local_order(demo):
    dm = build_dof_map(demo, "hdiv")
    idx, conn = demo.blocks[Kind.PYR]
    nf = len(demo.faces)
    np.testing.assert_array_equal(dm.index[Kind.PYR][:, 5], nf + np.arange(len(idx)))
    for r in range(len(idx)):
        for lf, verts in enumerate(FACES[Kind.PYR]):
            key = tuple(sorted(conn[r, list(verts)].tolist()))
            assert dm.index[Kind.PYR][r, lf] == demo.face_index[key]


def test_hcurl_basis_field_across_pyramid_hex_interface(demo):
    # a single edge function on the quad shared by the hex and a pyramid
    dm = build_dof_map(demo, "hcurl")
    hex_edges = set(dm.index[Kind.HEX][0].tolist())
    pyr_edges = set(dm.index[Kind.PYR].ravel().tolist())
    shared = sorted(hex_edges & pyr_edges)
    assert len(shared) == 4
    for g in shared:
        c = np.zeros(dm.size)
        c[g] = 1.0
        assert check_conformity(GlobalField(Space.HCURL, demo, c, dm)).max_jump <= 1e-11


def test_div_of_constant_vector_field_is_zero(demo):
    gf = interpolate_global(demo, "hdiv", FieldFn(lambda x: np.tile([0.4, -1.0, 2.0], (len(x), 1)), "vector"))
    np.testing.assert_allclose(global_derivative(gf).coefficients, 0, atol=1e-13)
