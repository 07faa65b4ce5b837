import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfeconnect.errors import BaseMismatch, OpenMesh, OutOfChart
from lfeconnect.fields import (
    ChargeRatio,
    TriangleMesh,
    as_ratio,
    chart_box_mesh,
    field_eval,
    field_eval_fd,
    flux_integral,
    icosphere,
    potential_eval,
    raise_field,
    zero_field,
)
from lfeconnect.geometry import Event, TangentVector
from lfeconnect.scenarios import build

coord = st.floats(-1.5, 1.5, allow_nan=False)


def test_uniform_field_components():
    spec = build("minkowski_uniform", B=1.7)
    chart = spec.atlas.charts["cartesian"]
    x = Event(np.array([0.1, 0.4, -0.2]), "cartesian")
    F = field_eval_fd(spec.field, chart, x)
    expect = np.zeros((3, 3))
    expect[1, 2], expect[2, 1] = 1.7, -1.7
    assert np.allclose(spec.field.tensor("cartesian", x.coords), expect)
    assert np.allclose(F, expect, atol=1e-8)
    e1 = TangentVector(x, np.array([0.0, 1.0, 0.0]))
    e2 = TangentVector(x, np.array([0.0, 0.0, 1.0]))
    assert field_eval(spec.field, chart, x, e1, e2) == pytest.approx(1.7)
    assert potential_eval(spec.field.potential, chart, x, e2) == pytest.approx(1.7 * 0.4)


def test_potential_eval_checks_base_and_chart():
    spec = build("minkowski_uniform")
    chart = spec.atlas.charts["cartesian"]
    x = Event(np.zeros(3), "cartesian")
    with pytest.raises(BaseMismatch):
        potential_eval(spec.field.potential, chart, x, TangentVector(Event(np.ones(3), "cartesian"), np.ones(3)))
    with pytest.raises(OutOfChart):
        field_eval(spec.field, chart, Event(np.zeros(2), "cartesian"), None, None)


@pytest.mark.parametrize("name", ["ribbon", "cap_cylinder"])
def test_field_is_exterior_derivative_of_potential(name):
    spec = build(name)
    chart = spec.atlas.charts["revolution"]
    rng = np.random.default_rng(4)
    lo, hi = (-10.0, 1.4) if name == "ribbon" else (0.3, 3.5)
    for _ in range(20):
        x = np.array([rng.uniform(-1, 1), rng.uniform(lo, hi), rng.uniform(-3, 3)])
        F = spec.field.tensor("revolution", x)
        assert np.allclose(F, -F.T)
        assert np.allclose(F, field_eval_fd(spec.field, chart, Event(x, "revolution")), atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(coord, coord, st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_raised_field_satisfies_index_identity(u, w, comps):
    spec = build("sphere")
    chart = spec.atlas.charts["north"]
    x = Event(np.array([0.0, u, w]), "north")
    Fhat = raise_field(chart, spec.field, x)
    a, b = np.array(comps[:3]), np.array(comps[3:])
    g = chart.metric(x.coords)
    F = spec.field.tensor("north", x.coords)
    assert a @ g @ (Fhat @ b) == pytest.approx(a @ F @ b, abs=1e-9 * (1 + np.abs(F).max()))


@settings(max_examples=30, deadline=None)
@given(coord, coord, st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_sphere_field_is_chart_covariant(u, w, comps):
    spec = build("sphere")
    atlas = spec.atlas
    x = np.array([[0.0, u, w]])
    a, b = np.array([comps[:3]]), np.array([comps[3:]])
    xs, as_ = atlas.transition("north", "south", x, a)
    _, bs = atlas.transition("north", "south", x, b)
    if not atlas.charts["south"].contains(xs[0]):
        return
    lhs = a[0] @ spec.field.tensor("north", x[0]) @ b[0]
    rhs = as_[0] @ spec.field.tensor("south", xs[0]) @ bs[0]
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-9)


@pytest.mark.parametrize("radius,B", [(1.0, 1.0), (2.0, 0.5), (0.5, -3.0)])
def test_sphere_total_flux(radius, B):
    spec = build("sphere", r=radius, B=B)
    val, err = flux_integral(spec.field, icosphere(radius, level=1), spec.atlas, rtol=1e-6)
    assert val == pytest.approx(4 * np.pi * radius**2 * B, rel=1e-5)
    assert err < 1e-4 * abs(val)


@pytest.mark.parametrize("name", ["ribbon", "cap_cylinder"])
def test_exact_fields_have_zero_flux_through_closed_boxes(name):
    spec = build(name)
    center = np.array([0.0, -1.5 * np.pi, 1.0]) if name == "ribbon" else np.array([0.0, 2.0, 1.0])
    mesh = chart_box_mesh(center, np.array([0.4, 0.5, 0.8]), "revolution")
    val, _ = flux_integral(spec.field, mesh, spec.atlas)
    assert abs(val) < 1e-8


def test_open_mesh_is_rejected():
    mesh = icosphere()
    with pytest.raises(OpenMesh):
        TriangleMesh(mesh.vertices, mesh.faces[1:]).check_closed()
    with pytest.raises(OpenMesh):
        flux_integral(build("sphere").field, TriangleMesh(mesh.vertices, mesh.faces[:-1]), build("sphere").atlas)
    flipped = mesh.faces.copy()
    flipped[0] = flipped[0][::-1]
    with pytest.raises(OpenMesh):
        TriangleMesh(mesh.vertices, flipped).check_closed()


def test_subdivision_keeps_mesh_closed_and_on_sphere():
    mesh = icosphere(2.0, level=2)
    mesh.check_closed()
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 2.0)
    assert len(mesh.faces) == 20 * 16


def test_zero_field_and_charge_ratio():
    F = zero_field(["a"], 3)
    assert np.all(F.tensor("a", np.ones(3)) == 0)
    assert F.is_exact
    assert as_ratio(ChargeRatio(-2.5)) == -2.5
    with pytest.raises(ValueError):
        ChargeRatio(float("nan"))
