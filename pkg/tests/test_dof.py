import numpy as np
import pytest

from pyrderham.dof import ArityError, DofKind, RefField, apply, dof_set
from pyrderham.refbasis import SIZES, Space, basis
from pyrderham.refgeom import EDGES, REF_VERTICES, Kind


@pytest.mark.parametrize("kind", list(Kind))
@pytest.mark.parametrize("space", list(Space))
def test_duality(space, kind):
    M = dof_set(space, kind).matrix()
    np.testing.assert_allclose(M, np.eye(SIZES[kind][space]), atol=1e-12)


def test_dof_kinds_on_pyramid():
    assert [f.kind for f in dof_set("hdiv", "pyr")][-1] is DofKind.SIGNED_DIV_DIFF
    assert [f.kind for f in dof_set("l2", "pyr")] == [DofKind.CELL_MOMENT_SUM, DofKind.CELL_MOMENT_DIFF]
    assert all(f.kind is DofKind.EDGE_TANGENTIAL for f in dof_set("hcurl", "hex"))


def test_vector_dof_rejects_scalar_field():
    with pytest.raises(ArityError):
        dof_set("hcurl", "pyr").apply(lambda x: x[:, 0])
    with pytest.raises(ArityError):
        apply(dof_set("hdiv", "tet")[1], lambda x: x[:, 0])


def test_scalar_dof_rejects_vector_field():
    with pytest.raises(ArityError):
        dof_set("h1", "hex").apply(lambda x: x)


@pytest.mark.parametrize("kind", list(Kind))
def test_edge_dofs_of_gradient_are_increments(kind):
    # integral of grad(x . c) along an edge is the increment of x . c
    c = np.array([0.3, -1.2, 0.7])
    vals = dof_set("hcurl", kind).apply(lambda x: np.tile(c, (len(x), 1)))
    V = REF_VERTICES[kind]
    expected = [(V[b] - V[a]) @ c for a, b in EDGES[kind]]
    np.testing.assert_allclose(vals, expected, atol=1e-14)


def test_face_fluxes_sum_to_volume_integral_of_div():
    # divergence theorem on the pyramid for v = (x^2, y z, z)
    def v(x):
        return np.stack([x[:, 0] ** 2, x[:, 1] * x[:, 2], x[:, 2]], axis=1)

    from pyrderham.quadrature import integrate, rule_for

    flux = dof_set("hdiv", "pyr").apply(v)[:5].sum()
    div = integrate(rule_for("pyr", 4), lambda x: 2 * x[:, 0] + x[:, 2] + 1)
    assert flux == pytest.approx(div, abs=1e-14)


def test_signed_div_diff_routes_agree():
    def v(x, sub=None):
        return np.stack([x[:, 0] * x[:, 1], x[:, 2] ** 2 - x[:, 0], x[:, 1] * x[:, 2]], axis=1)

    def div(x, sub=None):
        return x[:, 1] + x[:, 1]

    f = dof_set("hdiv", "pyr")[6]
    assert apply(f, RefField(v)) == pytest.approx(apply(f, RefField(v, div)), abs=1e-14)


def test_signed_div_diff_of_shapes():
    f = dof_set("hdiv", "pyr")[6]
    vals = [apply(f, s) for s in basis("hdiv", "pyr")]
    np.testing.assert_allclose(vals, [0, 0, 0, 0, 0, 1], atol=1e-13)


def test_l2_cell_dofs():
    d = dof_set("l2", "pyr")
    vals = d.apply(lambda x: np.where(x[:, 1] <= x[:, 0], 3.0, 1.0))
    # sum and difference of the sub-tet integrals, each of volume 1/6
    np.testing.assert_allclose(vals, [4 / 6, 2 / 6], atol=1e-14)


def test_apply_values_matches_apply():
    d = dof_set("hcurl", "hex")

    def f(x):
        return np.stack([x[:, 1] * x[:, 2], x[:, 0], np.sin(x[:, 0])], axis=1)

    np.testing.assert_allclose(d.apply_values(f(d.points)), d.apply(f), atol=1e-15)


def test_non_callable_rejected():
    with pytest.raises(TypeError):
        dof_set("h1", "tet").apply(3.0)


def test_worked_examples():
    assert [f.kind for f in dof_set("l2", "tet")] == [DofKind.CELL_INTEGRAL]
    h1 = dof_set("h1", "hex")
    assert len(h1) == 8 and all(f.kind is DofKind.VERTEX_EVAL for f in h1)
    np.testing.assert_array_equal(np.vstack([f.points for f in h1]), REF_VERTICES[Kind.HEX])
    n3 = dof_set("hcurl", "pyr")[3]
    assert apply(n3, basis("hcurl", "pyr")[3]) == pytest.approx(1.0)
    grad5 = RefField(basis("h1", "pyr")[5].derivative)
    assert apply(n3, grad5) == pytest.approx(1.0)
    assert apply(dof_set("l2", "pyr")[1], lambda x: np.ones(len(x))) == pytest.approx(1 / 3)
