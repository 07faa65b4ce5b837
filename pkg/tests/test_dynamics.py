import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfeconnect.dynamics import (
    WorldlineState,
    action_I,
    energy_E,
    functional_J,
    integrate_geodesic,
    integrate_lfe,
    lfe_residual,
)
from lfeconnect.errors import (
    LeftChartAtlas,
    NonCausalCurve,
    NonExactField,
    NotNormalized,
    NotTimelike,
    ParameterRangeError,
)
from lfeconnect.geometry import Event, TangentVector, minkowski
from lfeconnect.scenarios import build, larmor_state
from lfeconnect.trajectory import CurveTrajectory, reparametrize


def state(coords, vel, chart="cartesian"):
    x = Event(np.asarray(coords, dtype=float), chart)
    return WorldlineState(x, TangentVector(x, np.asarray(vel, dtype=float)))


def unit(speed, angle):
    gamma = 1 / np.sqrt(1 - speed**2)
    return np.array([gamma, gamma * speed * np.cos(angle), gamma * speed * np.sin(angle)])


def line(atlas, velocity, span=(0.0, 1.0)):
    velocity = np.asarray(velocity, dtype=float)
    return CurveTrajectory(
        atlas, "cartesian",
        lambda lam: np.outer(lam, velocity),
        lambda lam: np.tile(velocity, (len(lam), 1)),
        span,
        accel=lambda lam: np.zeros((len(lam), 3)),
    )


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-np.pi, np.pi), st.sampled_from([-2.0, -0.5, 1.0, 3.0]))
def test_lfe_matches_closed_form_larmor_orbit(speed, angle, ratio):
    spec = build("minkowski_uniform")
    u0 = unit(speed, angle)
    traj = integrate_lfe(spec.atlas, spec.field, ratio, state(np.zeros(3), u0), 4.0)
    s = np.linspace(0.0, 4.0, 50)
    _, x, v = traj.evaluate(s)
    x_ref, v_ref = larmor_state(1.0, ratio, u0, np.zeros(3), s)
    assert np.abs(x - x_ref).max() < 1e-7
    assert np.abs(v - v_ref).max() < 1e-7
    assert np.abs(traj.norms(s) - 1.0).max() < 1e-8


def test_non_unit_initial_velocity_is_rejected():
    spec = build("minkowski_uniform")
    with pytest.raises(NotNormalized):
        integrate_lfe(spec.atlas, spec.field, 1.0, state(np.zeros(3), [1.0, 0.5, 0.0]), 1.0)


def test_temporal_mode_traces_the_same_curve():
    spec = build("minkowski_uniform")
    u0 = unit(0.6, 0.0)
    proper = integrate_lfe(spec.atlas, spec.field, 1.0, state(np.zeros(3), u0), 5.0)
    temporal = integrate_lfe(spec.atlas, spec.field, 1.0, state(np.zeros(3), u0 / u0[0]), 5.0 * u0[0], mode="temporal")
    t = np.linspace(0.0, 5.0 * u0[0] * 0.99, 40)
    _, xt, _ = temporal.evaluate(t)
    x_ref, _ = larmor_state(1.0, 1.0, u0, np.zeros(3), t / u0[0])
    assert np.abs(xt - x_ref).max() < 1e-8
    assert proper.param_kind == "proper_time" and temporal.param_kind == "cauchy_temporal"


def test_flat_geodesics_are_straight_lines():
    chart = minkowski(3)
    for vel in ([1.0, 0.3, -0.2], [1.0, 0.6, 0.8], [0.2, 1.0, 0.0]):
        traj = integrate_geodesic(chart, state(np.zeros(3), vel), 3.0)
        s = np.linspace(0, 3.0, 11)
        _, x, _ = traj.evaluate(s)
        assert np.allclose(x, np.outer(s, vel), atol=1e-12)


def test_sphere_lightlike_great_circle_returns_to_antipode():
    spec = build("sphere")
    traj = integrate_geodesic(spec.atlas, state([0.0, 0.5 * np.pi, 0.0], [1.0, 0.0, 1.0], "polar"), np.pi)
    P = traj.embedded(np.array([np.pi]))
    assert np.allclose(P[0], [-1.0, 0.0, 0.0], atol=1e-9)
    assert np.abs(traj.norms(traj.sample_params())).max() < 1e-9


def test_leaving_the_atlas_raises_with_location():
    spec = build("ribbon")
    x0 = [0.0, -15.0, 0.0]
    with pytest.raises(LeftChartAtlas) as info:
        integrate_geodesic(spec.atlas, state(x0, [1.0, -1.0, 0.0], "revolution"), 10.0)
    assert info.value.location is not None


def test_static_worldline_action_equals_elapsed_time():
    chart = minkowski(3)
    traj = line(chart, [1.0, 0.0, 0.0], (0.0, 2.5))
    val = action_I(chart, None, 0.0, traj)
    assert val.value == pytest.approx(2.5, abs=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(-np.pi, np.pi), st.floats(0.5, 3.0))
def test_action_of_straight_worldline_is_proper_time(speed, angle, T):
    chart = minkowski(3)
    v = np.array([1.0, speed * np.cos(angle), speed * np.sin(angle)]) * T
    traj = line(chart, v)
    assert action_I(chart, None, 0.0, traj).value == pytest.approx(T * np.sqrt(1 - speed**2), rel=1e-12)
    assert energy_E(chart, traj).value == pytest.approx(0.5 * T**2 * (1 - speed**2), rel=1e-12)


def test_action_and_j_include_the_potential_term():
    spec = build("minkowski_uniform")
    v = np.array([2.0, 0.0, 1.0])
    traj = CurveTrajectory(
        spec.atlas, "cartesian",
        lambda lam: np.column_stack([2 * lam, np.full(len(lam), 0.5), lam]),
        lambda lam: np.tile(v, (len(lam), 1)),
        (0.0, 1.0),
    )
    # omega = B x dy with x = 0.5, y' = 1
    assert action_I(spec.atlas, spec.field, 2.0, traj).value == pytest.approx(np.sqrt(3.0) + 2.0 * 0.5)
    assert functional_J(spec.atlas, spec.field, 3.0, traj).value == pytest.approx(1.5 + 1.5)


def test_functional_errors():
    sphere = build("sphere")
    chart = minkowski(3)
    with pytest.raises(NonExactField):
        action_I(sphere.atlas, sphere.field, 1.0, line(chart, [1.0, 0.0, 0.0]))
    with pytest.raises(NonCausalCurve):
        action_I(chart, None, 0.0, line(chart, [0.5, 1.0, 0.0]))
    with pytest.raises(ParameterRangeError):
        energy_E(chart, line(chart, [1.0, 0.0, 0.0], (0.0, 2.0)))


def test_lfe_residual_small_for_solutions_and_large_for_wrong_ratio():
    spec = build("minkowski_uniform")
    traj = integrate_lfe(spec.atlas, spec.field, 1.0, state(np.zeros(3), unit(0.6, 0.0)), 2 * np.pi)
    assert lfe_residual(spec.atlas, spec.field, 1.0, traj) < 1e-7
    assert lfe_residual(spec.atlas, spec.field, 2.0, traj) > 0.1


def test_lfe_residual_after_reparametrization():
    spec = build("minkowski_uniform")
    u0 = unit(0.6, 0.3)
    temporal = integrate_lfe(spec.atlas, spec.field, 1.0, state(np.zeros(3), u0 / u0[0]), 6.0, mode="temporal")
    assert lfe_residual(spec.atlas, spec.field, 1.0, temporal) < 1e-6
    proper = reparametrize(temporal, "proper_time")
    assert proper.span[1] == pytest.approx(6.0 / u0[0], rel=1e-9)


def test_residual_requires_timelike_curve():
    chart = minkowski(3)
    with pytest.raises(NotTimelike):
        lfe_residual(chart, None, 0.0, line(chart, [1.0, 1.0, 0.0]))
