import json

import numpy as np
import pytest

from lfeconnect.dynamics import WorldlineState, integrate_lfe
from lfeconnect.errors import NotMonotoneT, NotTimelike, ParameterRangeError
from lfeconnect.geometry import Event, TangentVector, minkowski
from lfeconnect.scenarios import build
from lfeconnect.trajectory import CurveTrajectory, dumps, reparametrize, to_csv, trajectory_table


def circle_curve():
    chart = minkowski(3)
    return CurveTrajectory(
        chart, "cartesian",
        lambda lam: np.column_stack([2 * lam, 0.5 * np.cos(lam), 0.5 * np.sin(lam)]),
        lambda lam: np.column_stack([np.full(len(lam), 2.0), -0.5 * np.sin(lam), 0.5 * np.cos(lam)]),
        (0.0, 3.0),
    )


def test_proper_time_reparametrization_has_unit_speed():
    curve = circle_curve()
    proper = reparametrize(curve, "proper_time")
    assert proper.span[1] == pytest.approx(3.0 * np.sqrt(3.75), rel=1e-12)
    mu = np.linspace(*proper.span, 31)
    assert np.allclose(proper.norms(mu), 1.0, atol=1e-10)
    _, x, _ = proper.evaluate(np.array([proper.span[1]]))
    assert np.allclose(x[0], curve.evaluate(np.array([3.0]))[1][0], atol=1e-10)


def test_temporal_and_unit_reparametrizations():
    curve = circle_curve()
    temporal = reparametrize(curve, "cauchy_temporal")
    _, x, v = temporal.evaluate(np.linspace(*temporal.span, 11))
    assert np.allclose(x[:, 0], np.linspace(*temporal.span, 11))
    assert np.allclose(v[:, 0], 1.0)
    unit = reparametrize(curve, "affine_unit")
    assert unit.span == pytest.approx((0.0, 1.0))


def test_reparametrization_errors():
    chart = minkowski(3)
    light = CurveTrajectory(chart, "cartesian", lambda l: np.column_stack([l, l, 0 * l]),
                            lambda l: np.tile([1.0, 1.0, 0.0], (len(l), 1)), (0.0, 1.0))
    with pytest.raises(NotTimelike):
        reparametrize(light, "proper_time")
    back = CurveTrajectory(chart, "cartesian", lambda l: np.column_stack([-l, 0 * l, 0 * l]),
                           lambda l: np.tile([-1.0, 0.0, 0.0], (len(l), 1)), (0.0, 1.0))
    with pytest.raises(NotMonotoneT):
        reparametrize(back, "cauchy_temporal")
    with pytest.raises(ValueError):
        reparametrize(light, "arc")
    with pytest.raises(ParameterRangeError):
        light.evaluate(np.array([1.5]))


def test_csv_and_json_output_are_stable():
    spec = build("minkowski_uniform")
    x = Event(np.zeros(3), "cartesian")
    traj = integrate_lfe(spec.atlas, spec.field, 1.0, WorldlineState(x, TangentVector(x, [1.25, 0.75, 0.0])), 2.0)
    text = to_csv(traj)
    assert text == to_csv(traj)
    header = text.splitlines()[0].split(",")
    assert header[0] and len(text.splitlines()) == len(traj.sample_params()) + 1
    rows = trajectory_table(traj)
    assert len(rows) >= 2
    blob = dumps({"a": 0.1, "b": [1e-20, np.float64(3.0)], "c": None, "d": True})
    data = json.loads(blob)
    assert data["a"] == 0.1 and data["b"] == [1e-20, 3.0] and data["c"] is None
