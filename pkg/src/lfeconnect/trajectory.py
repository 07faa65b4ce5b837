"""Trajectory containers: dense integrator output, closed-form curves,
reparametrizations and projections, plus CSV/JSON export.

Every trajectory exposes the same vectorized interface:
``evaluate(lam) -> (codes, x, v)`` and ``acceleration(lam) -> (codes, x, v, a)``
with ``v = dx/dlam`` and ``a = dv/dlam`` in the chart given by ``codes``.
"""
from __future__ import annotations

import io
import json
import re

import numpy as np

from .errors import NotMonotoneT, NotTimelike, ParameterRangeError
from .geometry import MetricField, single_chart_atlas
from .quadrature import NODES, KRONROD_WEIGHTS, cumulative

PARAM_KINDS = ("affine", "proper_time", "cauchy_temporal")


class Trajectory:
    atlas = None
    param_kind = "affine"

    @property
    def dim(self):
        return self.atlas.dim

    @property
    def span(self):
        raise NotImplementedError

    @property
    def breakpoints(self):
        a, b = self.span
        return np.array([a, b])

    def evaluate(self, lam):
        raise NotImplementedError

    def acceleration(self, lam):
        raise NotImplementedError

    def _check_range(self, lam):
        a, b = self.span
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if np.any(lam < a - tol) or np.any(lam > b + tol):
            raise ParameterRangeError(f"parameter outside [{a}, {b}]")
        return np.clip(lam, a, b)

    def sample_params(self, refine=2):
        """Breakpoints with ``refine - 1`` equally spaced points inside each piece."""
        br = self.breakpoints
        frac = np.arange(refine) / refine
        inner = (br[:-1, None] + np.diff(br)[:, None] * frac[None, :]).ravel()
        return np.append(inner, br[-1])

    def endpoints(self):
        a, b = self.span
        codes, x, v = self.evaluate(np.array([a, b]))
        return codes, x, v

    def metric_at(self, codes, x):
        """Metric matrices per sample, evaluated chart by chart."""
        g = np.empty((len(x), x.shape[1], x.shape[1]))
        for code in np.unique(codes):
            sel = codes == code
            g[sel] = self.atlas.charts[self.atlas.names[code]].metric(x[sel])
        return g

    def norms(self, lam):
        codes, x, v = self.evaluate(lam)
        g = self.metric_at(codes, x)
        return np.einsum("mi,mij,mj->m", v, g, v)

    def embedded(self, lam):
        """Spatial embedding points along the curve (product spacetimes)."""
        codes, x, _ = self.evaluate(lam)
        out = np.empty((len(x), 3))
        for code in np.unique(codes):
            sel = codes == code
            out[sel] = self.atlas.embed(self.atlas.names[code], x[sel])
        return out


class DenseTrajectory(Trajectory):
    """Integrator output: state ``[x, v, extras]`` stored as piecewise quartic polynomials."""

    def __init__(self, segments, atlas, param_kind="affine", meta=None):
        self.seg = segments
        self.atlas = atlas
        self.param_kind = param_kind
        self.meta = dict(meta or {})
        self.n = atlas.dim

    @property
    def span(self):
        br = self.seg.breaks
        return float(br[0]), float(br[-1])

    @property
    def breakpoints(self):
        return self.seg.breaks

    def evaluate(self, lam):
        lam = self._check_range(lam)
        idx, y = self.seg.evaluate(lam)
        return self.seg.codes[idx], y[:, : self.n], y[:, self.n : 2 * self.n]

    def acceleration(self, lam):
        lam = self._check_range(lam)
        idx, y, dy = self.seg.evaluate(lam, derivative=1)
        return self.seg.codes[idx], y[:, : self.n], y[:, self.n : 2 * self.n], dy[:, self.n : 2 * self.n]

    def states_at_breaks(self):
        """Exact integrator states at the step boundaries (start of each step, then the end)."""
        s = self.seg
        h = s.h[-1]
        last = s.y0[-1] + h * s.Q[-1].sum(axis=1)
        y = np.vstack([s.y0, last])
        codes = np.append(s.codes, s.codes[-1])
        return self.breakpoints, codes, y[:, : self.n], y[:, self.n : 2 * self.n]


class CurveTrajectory(Trajectory):
    """Closed-form curve in one chart: ``position(lam)``, ``velocity(lam)`` and
    optionally ``accel(lam)`` (central differences otherwise)."""

    def __init__(self, atlas, chart, position, velocity, span, accel=None, breakpoints=None, param_kind="affine", meta=None):
        if isinstance(atlas, MetricField):
            atlas = single_chart_atlas(atlas)
        self.atlas = atlas
        self.chart = chart
        self.code = atlas.code(chart)
        self.position = position
        self.velocity = velocity
        self.accel = accel
        self._span = (float(span[0]), float(span[1]))
        self._breaks = None if breakpoints is None else np.asarray(breakpoints, dtype=float)
        self.param_kind = param_kind
        self.meta = dict(meta or {})

    @property
    def span(self):
        return self._span

    @property
    def breakpoints(self):
        if self._breaks is None:
            return np.linspace(*self._span, 17)
        return self._breaks

    def evaluate(self, lam):
        lam = self._check_range(lam)
        return np.full(len(lam), self.code), self.position(lam), self.velocity(lam)

    def acceleration(self, lam):
        codes, x, v = self.evaluate(lam)
        if self.accel is not None:
            a = self.accel(lam)
        else:
            h = 1e-5 * max(1.0, self._span[1] - self._span[0])
            a = (self.velocity(lam + h) - self.velocity(lam - h)) / (2 * h)
        return codes, x, v, a


def _speed_function(traj, target):
    """d(new param)/d(old param) and its derivative, as functions of the old parameter."""
    if target == "proper_time":
        def f(lam):
            q = traj.norms(lam)
            return np.sqrt(np.maximum(q, 0.0))

        def df(lam):
            codes, x, v, a = traj.acceleration(lam)
            g = traj.metric_at(codes, x)
            gam = _christoffel_at(traj.atlas, codes, x)
            dv = a + np.einsum("mkij,mi,mj->mk", gam, v, v)
            s = np.sqrt(np.maximum(np.einsum("mi,mij,mj->m", v, g, v), 0.0))
            return np.einsum("mi,mij,mj->m", v, g, dv) / s

        return f, df
    if target == "cauchy_temporal":
        ti = traj.atlas.time_index

        def f(lam):
            return traj.evaluate(lam)[2][:, ti]

        def df(lam):
            return traj.acceleration(lam)[3][:, ti]

        return f, df
    raise ValueError(f"unknown parametrization {target!r}")


def _christoffel_at(atlas, codes, x):
    gam = np.empty((len(x),) + (x.shape[1],) * 3)
    for code in np.unique(codes):
        sel = codes == code
        gam[sel] = atlas.charts[atlas.names[code]].christoffel(x[sel])
    return gam


class ReparametrizedTrajectory(Trajectory):
    """Same image curve with a new parameter ``mu = phi(lam)``.

    ``phi`` is the running integral of the speed function ``f``; its inverse
    is evaluated by Newton iteration inside the breakpoint interval that
    brackets the requested value.
    """

    def __init__(self, base, target, start=0.0):
        self.base = base
        self.atlas = base.atlas
        self.target = target
        self.param_kind = {"affine_unit": "affine"}.get(target, target)
        self.meta = dict(getattr(base, "meta", {}))
        a, b = base.span
        self._lam_breaks = base.breakpoints
        if target == "affine_unit":
            self._f = lambda lam: np.full(np.shape(lam), 1.0 / (b - a))
            self._df = lambda lam: np.zeros(np.shape(lam))
            self._phi = (self._lam_breaks - a) / (b - a)
        elif target == "cauchy_temporal":
            self._f, self._df = _speed_function(base, target)
            self._phi = base.evaluate(self._lam_breaks)[1][:, self.atlas.time_index]
        else:
            self._f, self._df = _speed_function(base, target)
            phi, _ = cumulative(self._f, self._lam_breaks, atol=1e-14, rtol=1e-13)
            self._phi = phi + start
        if np.any(np.diff(self._phi) <= 0):
            raise NotMonotoneT("new parameter is not strictly increasing along the curve")

    @property
    def span(self):
        return float(self._phi[0]), float(self._phi[-1])

    @property
    def breakpoints(self):
        return self._phi

    def old_parameter(self, mu):
        mu = self._check_range(mu)
        lb = self._lam_breaks
        k = np.clip(np.searchsorted(self._phi, mu, side="right") - 1, 0, len(lb) - 2)
        lo, hi = lb[k], lb[k + 1]
        frac = (mu - self._phi[k]) / (self._phi[k + 1] - self._phi[k])
        lam = lo + frac * (hi - lo)
        for _ in range(30):
            if self.target == "cauchy_temporal":
                val = self.base.evaluate(lam)[1][:, self.atlas.time_index]
            else:
                val = self._phi[k] + self._partial_integral(lo, lam)
            step = (val - mu) / self._f(lam)
            lam = np.clip(lam - step, lo, hi)
            if np.all(np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(lam))):
                break
        return lam

    def _partial_integral(self, lo, lam):
        half = 0.5 * (lam - lo)
        pts = (0.5 * (lam + lo))[:, None] + half[:, None] * NODES[None, :]
        vals = self._f(pts.ravel()).reshape(pts.shape)
        return half * (vals @ KRONROD_WEIGHTS)

    def evaluate(self, mu):
        lam = self.old_parameter(mu)
        codes, x, v = self.base.evaluate(lam)
        return codes, x, v / self._f(lam)[:, None]

    def acceleration(self, mu):
        lam = self.old_parameter(mu)
        codes, x, v, a = self.base.acceleration(lam)
        f = self._f(lam)[:, None]
        df = self._df(lam)[:, None]
        return codes, x, v / f, a / f**2 - v * df / f**3


def reparametrize(traj, target):
    """New parametrization of the same curve.

    ``target`` is ``"proper_time"`` (timelike curves only), ``"cauchy_temporal"``
    (parameter equals the time coordinate) or ``"affine_unit"`` (linear
    rescaling to [0, 1]).
    """
    if target == "proper_time":
        lam = traj.sample_params(4)
        q = traj.norms(lam)
        if np.any(q <= 0):
            raise NotTimelike("proper time needs a timelike curve")
    elif target == "cauchy_temporal":
        lam = traj.sample_params(4)
        ti = traj.atlas.time_index
        if ti is None or np.any(traj.evaluate(lam)[2][:, ti] <= 0):
            raise NotMonotoneT("time coordinate does not strictly increase along the curve")
    elif target != "affine_unit":
        raise ValueError(f"unknown parametrization {target!r}")
    return ReparametrizedTrajectory(traj, target)


class ProjectedTrajectory(Trajectory):
    """Drop the fiber coordinate of a Kaluza-Klein trajectory."""

    def __init__(self, kk_traj, base_atlas):
        self.kk = kk_traj
        self.atlas = base_atlas
        self.param_kind = kk_traj.param_kind
        self.meta = dict(getattr(kk_traj, "meta", {}))
        self.n = base_atlas.dim

    @property
    def span(self):
        return self.kk.span

    @property
    def breakpoints(self):
        return self.kk.breakpoints

    def evaluate(self, lam):
        codes, X, V = self.kk.evaluate(lam)
        return codes, X[:, : self.n], V[:, : self.n]

    def acceleration(self, lam):
        codes, X, V, A = self.kk.acceleration(lam)
        return codes, X[:, : self.n], V[:, : self.n], A[:, : self.n]


# -- export -----------------------------------------------------------------------


def fmt(x):
    """17 significant digits, or ``nan``/``inf`` spelled out."""
    return "%.17g" % x


def trajectory_table(traj, refine=2, extra=None):
    lam = traj.sample_params(refine)
    codes, x, v = traj.evaluate(lam)
    g = traj.metric_at(codes, x)
    q = np.einsum("mi,mij,mj->m", v, g, v)
    n = x.shape[1]
    cols = ["param"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] + ["g(v,v)"]
    data = [lam[:, None], x, v, q[:, None]]
    if extra:
        for name, fn in extra.items():
            cols.append(name)
            data.append(np.asarray(fn(lam, codes, x, v))[:, None])
    charts = [traj.atlas.names[c] for c in codes]
    return cols, np.hstack(data), charts


def to_csv(traj, path=None, refine=2, extra=None):
    cols, table, charts = trajectory_table(traj, refine, extra)
    buf = io.StringIO()
    buf.write(",".join(cols + ["chart"]) + "\n")
    for row, chart in zip(table, charts):
        buf.write(",".join(fmt(v) for v in row) + f",{chart}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


_FLOAT_TAG = "@@float@@"
_FLOAT_RE = re.compile('"' + _FLOAT_TAG + '([^"]*)"')


def _tag_floats(obj):
    if isinstance(obj, dict):
        return {k: _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tag_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_tag_floats(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            return None
        return _FLOAT_TAG + fmt(float(obj))
    return obj


def dumps(obj, indent=2):
    """JSON with every float written at 17 significant digits and non-finite values as null."""
    return _FLOAT_RE.sub(r"\1", json.dumps(_tag_floats(obj), indent=indent))
