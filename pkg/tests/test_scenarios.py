import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfeconnect.dynamics import action_I
from lfeconnect.scenarios import (
    CATALOG,
    build,
    cap_circle_action,
    cap_circle_trajectory,
    cap_field_profile,
    cap_flux_potential,
    larmor_state,
    ribbon_profile,
    sphere_circle_rate,
    witness_curve,
)


def test_catalog_and_unknown_names():
    assert set(CATALOG) == {"minkowski_uniform", "ribbon", "cap_cylinder", "sphere"}
    with pytest.raises(KeyError):
        build("torus")
    with pytest.raises(ValueError):
        build("minkowski_uniform", dim=4)
    with pytest.raises(ValueError):
        build("sphere", B=0.0)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_marked_events_lie_in_their_charts(name):
    spec = build(name)
    for ev in (spec.x0, spec.x1, *spec.extra_events.values()):
        assert spec.atlas.charts[ev.chart].contains(ev.coords)
    assert spec.x1.coords[0] > spec.x0.coords[0]


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_witness_curve_is_causal_and_connects(name):
    spec = build(name)
    target = spec.event("antipodal") if name == "sphere" else spec.x1
    curve = witness_curve(spec, target)
    lam = np.linspace(0, 1, 101)
    assert np.all(curve.norms(lam) >= -1e-12)
    P = curve.embedded(np.array([1.0]))[0]
    Q = spec.atlas.embed(target.chart, target.coords[None, :])[0]
    assert np.allclose(P, Q, atol=1e-9)


def test_larmor_reference_values():
    spec = build("minkowski_uniform", B=2.0, ratio=0.5, speed=0.8)
    gamma = 1 / 0.6
    assert spec.reference("larmor_radius") == pytest.approx(gamma * 0.8)
    assert spec.reference("gyration_period_proper") == pytest.approx(2 * np.pi)
    x_end, _ = larmor_state(2.0, 0.5, spec.parameters["u0"], np.zeros(3), 3.0 / gamma)
    assert np.allclose(spec.x1.coords, x_end[0])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-np.pi, np.pi), st.floats(-3, 3), st.floats(0.1, 5))
def test_larmor_state_is_unit_and_periodic(speed, angle, ratio, s):
    if abs(ratio) < 1e-3:
        ratio = 1.0
    gamma = 1 / np.sqrt(1 - speed**2)
    u0 = np.array([gamma, gamma * speed * np.cos(angle), gamma * speed * np.sin(angle)])
    _, u = larmor_state(1.0, ratio, u0, np.zeros(3), np.array([s]))
    assert u[0, 0] ** 2 - u[0, 1] ** 2 - u[0, 2] ** 2 == pytest.approx(1.0)
    period = 2 * np.pi / abs(ratio)
    x1, _ = larmor_state(1.0, ratio, u0, np.zeros(3), np.array([period]))
    assert np.allclose(x1[0, 1:], 0.0, atol=1e-9)


def test_ribbon_profile_support_and_flux():
    z = np.linspace(-10, 2, 1201)
    mu = ribbon_profile(z, 1.0)
    assert np.all(mu[z <= -2 * np.pi] == 1.0) and np.all(mu[z >= -np.pi] == 0.0)
    spec = build("ribbon")
    # F vanishes away from the ribbon
    for zz in (-3 * np.pi, 0.5):
        assert np.all(spec.field.tensor("revolution", np.array([0.0, zz, 0.3])) == 0.0)


def test_cap_potential_is_continuous_and_matches_field():
    eps = np.pi / 12
    th = np.linspace(0.01, 0.5 * np.pi + eps + 0.2, 400)
    A = cap_flux_potential(th, 1.0, 2.0, eps)
    dA = np.gradient(A, th)
    assert np.allclose(dA[2:-2], (cap_field_profile(th, 2.0, eps) * np.sin(th))[2:-2], atol=2e-3)
    assert cap_flux_potential(0.5 * np.pi, 1.0, 2.0, eps) == pytest.approx(2.0)


def test_cap_field_sign_follows_ratio():
    assert build("cap_cylinder", ratio=-1.0).parameters["B"] < 0
    assert build("cap_cylinder", ratio=1.0, B=-2.0).parameters["B"] > 0


@settings(max_examples=8, deadline=None)
@given(st.floats(0.0, 0.5 * np.pi))
def test_cap_circle_action_closed_form(alpha):
    spec = build("cap_cylinder")
    traj = cap_circle_trajectory(spec, alpha)
    val = action_I(spec.atlas, spec.potential, spec.ratio, traj, tol=1e-8).value
    ref = cap_circle_action(alpha, 1.0, 1.0, 2.0)
    assert val == pytest.approx(ref, rel=1e-6)
    lam = np.linspace(0, 1, 41)
    assert np.all(traj.norms(lam) > -1e-9)


def test_sphere_circle_rate():
    assert sphere_circle_rate(2.0, 1.5, 0.6) == pytest.approx(3.0 * 0.8)
