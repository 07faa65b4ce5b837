import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfeconnect.connect import (
    ConnectionProblem,
    GridSpec,
    ShootingVariables,
    endpoint_map,
    homotopy_tag,
    jacobi_first_conjugate,
    maximizer_audit,
    multistart,
    ratio_continuation,
    run_starts,
    select_extremal_arrival,
    shoot,
    shoot_direct,
    shoot_kk_fermat,
)
from lfeconnect.dynamics import WorldlineState, action_I, integrate_geodesic, integrate_lfe
from lfeconnect.errors import AmbiguousWinding, DegenerateNu, NoAngularStructure, NoConvergence, NotAGeodesic
from lfeconnect.geometry import Event, TangentVector
from lfeconnect.scenarios import build, cap_circle_trajectory
from lfeconnect.verification import random_ribbon_curves


@pytest.fixture(scope="module")
def larmor():
    return build("minkowski_uniform")


@pytest.fixture(scope="module")
def larmor_direct(larmor):
    return shoot_direct(ConnectionProblem(larmor))


def test_problem_validation(larmor):
    with pytest.raises(ValueError):
        ConnectionProblem(larmor, method="newton")
    with pytest.raises(ValueError):
        ConnectionProblem(larmor, ratio=0.0, method="kk")
    with pytest.raises(ValueError):
        ConnectionProblem(build("sphere"), method="kk")
    with pytest.raises(ValueError):
        ConnectionProblem(larmor, x1=Event(np.array([-1.0, 0.0, 0.0]), "cartesian"))
    with pytest.raises(ValueError):
        ConnectionProblem(larmor, tol=0.0)
    problem = ConnectionProblem(larmor)
    assert problem.k == 2 and problem.ratio == larmor.ratio


def test_direct_larmor_connection(larmor, larmor_direct):
    res = larmor_direct
    assert res.converged and res.method == "direct"
    assert res.endpoint_residual < 1e-8
    assert res.lfe_residual < 1e-6
    assert np.allclose(res.initial_velocity, [1.0, 0.6, 0.0], atol=1e-7)
    summary = res.summary()
    assert summary["converged"] is True and len(summary["xi"]) == 2


def test_kk_larmor_connection_and_fermat_arrival(larmor, larmor_direct):
    res = shoot_kk_fermat(ConnectionProblem(larmor, method="kk"))
    assert res.converged and res.nu > 0
    bundle = ConnectionProblem(larmor, method="kk").bundle()
    assert res.arrival == pytest.approx(-res.action.value / bundle.a, abs=1e-8)
    assert res.action.value == pytest.approx(larmor_direct.action.value, abs=1e-8)
    assert np.allclose(res.xi, larmor_direct.xi, atol=1e-7)


def test_shooting_variables_from_velocity(larmor, larmor_direct):
    problem = ConnectionProblem(larmor)
    xi = ShootingVariables.from_velocity(problem, [0.6, 0.0]).xi
    assert np.allclose(xi, larmor_direct.xi, atol=1e-7)
    assert np.abs(endpoint_map(problem, xi[None, :])[0]).max() < 1e-7


def test_sphere_antipodal_shot_fails_with_partial_result():
    spec = build("sphere")
    problem = ConnectionProblem(spec, x1=spec.event("antipodal"), ratio=1.0, max_iter=15)
    with pytest.raises(NoConvergence) as info:
        shoot(problem)
    assert info.value.result is not None
    assert info.value.result.endpoint_residual > 0.05


def test_kk_degenerate_charge_is_reported():
    spec = build("ribbon")
    results = run_starts(ConnectionProblem(spec, method="kk"), GridSpec(6, 1, speed_range=(0.9, 1.0)).starts(2))
    lightlike = [r for r in results if r.converged and r.lightlike_geodesic]
    assert lightlike, "expected a winding lightlike connection"
    with pytest.raises(DegenerateNu):
        shoot_kk_fermat(ConnectionProblem(spec, method="kk"), guess=lightlike[0].xi, raise_degenerate=True)


def test_grid_starts_geometry():
    grid = GridSpec(5, 3)
    pts = grid.starts(2)
    assert pts.shape == (15, 2)
    radii = np.linalg.norm(pts, axis=1)
    assert np.all(radii < 1.0)
    speeds = 2 * radii / (1 + radii**2)
    assert np.allclose(np.unique(np.round(speeds, 12)), [1 / 6, 1 / 2, 5 / 6])
    assert np.array_equal(GridSpec(5, 3, seed=7).starts(2), GridSpec(5, 3, seed=7).starts(2))
    assert not np.array_equal(GridSpec(5, 3, seed=7).starts(2), pts)
    assert GridSpec(4, 2).starts(1).shape == (4, 1)
    with pytest.raises(ValueError):
        GridSpec(0, 3).starts()
    with pytest.raises(ValueError):
        GridSpec(3, 3, speed_range=(0.5, 0.2)).starts()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.floats(0.0, 0.8), st.floats(0.05, 0.2), st.integers(0, 100))
def test_grid_speeds_stay_in_range(nd, ns, lo, width, seed):
    hi = min(lo + width, 1.0)
    pts = GridSpec(nd, ns, speed_range=(lo, hi), seed=seed).starts(2)
    r = np.linalg.norm(pts, axis=1)
    speeds = 2 * r / (1 + r**2)
    assert np.all(speeds > lo - 1e-12) and np.all(speeds < hi + 1e-12)


def test_ribbon_multistart_results_are_distinct_and_sorted():
    spec = build("ribbon")
    results = multistart(ConnectionProblem(spec), GridSpec(8, 4))
    actions = [r.action.value for r in results]
    assert actions == sorted(actions, reverse=True)
    for i, a in enumerate(results):
        for b in results[i + 1:]:
            assert a.homotopy_tag != b.homotopy_tag or np.linalg.norm(a.xi - b.xi) >= 1e-4
    assert {r.homotopy_tag for r in results} >= {-1, 0, 1}


def test_select_extremal_arrival():
    class R:
        def __init__(self, arrival):
            self.converged, self.arrival = True, arrival

    cands = [R(0.3), R(-1.0), R(2.0)]
    assert select_extremal_arrival(cands, 1.0).arrival == -1.0
    assert select_extremal_arrival(cands, -1.0).arrival == 2.0
    assert select_extremal_arrival([], 1.0) is None


def test_ratio_continuation_reaches_zero_ratio():
    spec = build("cap_cylinder")
    out = ratio_continuation(ConnectionProblem(spec, ratio=0.5), [0.0, 0.25, 0.5])
    assert [q for q, _, _ in out] == [0.0, 0.25, 0.5]
    assert out[0][1].converged
    assert out[0][1].action.value == pytest.approx(2 * np.pi, abs=1e-6)
    with pytest.raises(ValueError):
        ratio_continuation(ConnectionProblem(spec), [1.0, 0.0])


@pytest.mark.parametrize("radius", [1.0, 2.0])
def test_sphere_conjugate_point_scales_with_radius(radius):
    spec = build("sphere", r=radius)
    x = Event(np.array([0.0, 0.5 * np.pi, 0.3]), "polar")
    geo = integrate_geodesic(spec.atlas, WorldlineState(x, TangentVector(x, [1.0, 0.0, 1.0 / radius])), 1.5 * np.pi * radius)
    assert jacobi_first_conjugate(geo) == pytest.approx(np.pi * radius, rel=1e-6)


def test_timelike_sphere_geodesic_conjugate_point():
    # unit timelike speed along a great circle with spatial speed beta: arc pi at s = pi / (gamma beta)
    spec = build("sphere")
    beta = 0.6
    gamma = 1 / np.sqrt(1 - beta**2)
    x = Event(np.array([0.0, 0.5 * np.pi, 0.0]), "polar")
    geo = integrate_geodesic(spec.atlas, WorldlineState(x, TangentVector(x, [gamma, 0.0, gamma * beta])), 1.6 * np.pi / (gamma * beta))
    assert jacobi_first_conjugate(geo) == pytest.approx(np.pi / (gamma * beta), rel=1e-6)


def test_conjugate_search_rejects_non_geodesics(larmor):
    x = Event(np.zeros(3), "cartesian")
    traj = integrate_lfe(larmor.atlas, larmor.field, 1.0, WorldlineState(x, TangentVector(x, [1.25, 0.75, 0.0])), 3.0)
    with pytest.raises(NotAGeodesic):
        jacobi_first_conjugate(traj)


def test_homotopy_tags_of_constructed_curves():
    spec = build("ribbon")
    curves = random_ribbon_curves(spec, 20, seed=2)
    for c in curves:
        assert homotopy_tag(c, spec) == c.meta["winding"]
    with pytest.raises(NoAngularStructure):
        homotopy_tag(curves[0], build("minkowski_uniform"))


def test_curve_through_the_axis_is_ambiguous():
    spec = build("cap_cylinder")
    # a meridian over the pole
    x = Event(np.array([0.0, 0.5 * np.pi, 0.0]), "revolution")
    geo = integrate_geodesic(spec.atlas, WorldlineState(x, TangentVector(x, [1.0, -1.0, 0.0])), 3.0)
    with pytest.raises(AmbiguousWinding):
        homotopy_tag(geo, spec)


def test_audit_of_the_equator_connection():
    spec = build("cap_cylinder")
    problem = ConnectionProblem(spec)
    res = shoot_direct(problem, guess=np.array([0.0, 0.999999]))
    assert res.converged and res.lightlike_geodesic and res.homotopy_tag == 1
    probes = [cap_circle_trajectory(spec, np.deg2rad(a)) for a in (20, 50)]
    rep = maximizer_audit(problem, res, probes=probes, same_class=False)
    conj, probe = rep["checks"]
    # the equator reaches its conjugate point at half the loop, so only the probe comparison passes
    assert conj["value"] == pytest.approx(np.pi, rel=1e-6) and not conj["passed"]
    assert probe["compared"] == 2 and probe["passed"] and probe["max_excess"] < 0
    assert res.first_conjugate == conj["value"]
