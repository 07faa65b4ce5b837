"""Lorentz force and geodesic flows, the functionals I, E, J, and the LFE residual.

Two parametrizations are supported by the flows:

* ``"affine"``: proper time for timelike LFE solutions, an affine parameter
  for geodesics; ``x' = v``, ``v' = -Gamma(v, v) + r Fhat v``.
* ``"temporal"``: the time coordinate itself; with ``V = dx/dt`` (so
  ``V^0 = 1``) and ``A = -Gamma(V, V) + r |V| Fhat V`` the equation becomes
  ``dV/dt = A - A^0 V``.  This is what the shooting methods use.  States
  may carry one extra column ``u = sqrt(g(V, V))``, evolved by
  ``du/dt = -A^0 u``; it replaces the square root, which is not smooth
  (and amplifies rounding) near lightlike velocities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    LeftChartAtlas,
    NonCausalCurve,
    NonExactField,
    NotNormalized,
    NotTimelike,
    ParameterRangeError,
    StepUnderflow,
)
from .fields import EMField, EMPotential, as_ratio, raise_index
from .geometry import Atlas, Event, MetricField, TangentVector, single_chart_atlas
from .integrate import LEFT_ATLAS, OK, STATUS_NAMES, dopri_batch
from .quadrature import integrate
from .trajectory import DenseTrajectory, Trajectory, reparametrize  # noqa: F401  (re-export)


@dataclass
class WorldlineState:
    x: Event
    v: TangentVector
    param: float = 0.0


@dataclass
class FunctionalValue:
    value: float
    error: float

    def __float__(self):
        return self.value


def as_atlas(metric):
    if isinstance(metric, Atlas):
        return metric
    if isinstance(metric, MetricField):
        return single_chart_atlas(metric)
    raise TypeError(f"expected an Atlas or MetricField, got {type(metric).__name__}")


def _groups(codes):
    if len(codes) and codes.min() == codes.max():
        yield codes[0], slice(None)
    else:
        for code in np.unique(codes):
            yield code, codes == code


def make_rhs(atlas, field, ratio, mode="affine"):
    """First-order right-hand side on states ``[x, v]`` for ``dopri_batch``."""
    r = as_ratio(ratio)
    n = atlas.dim
    names = atlas.names
    ti = atlas.time_index
    if mode not in ("affine", "temporal"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "temporal" and ti is None:
        raise ValueError("temporal parametrization needs a time coordinate")
    use_field = r != 0.0 and field is not None

    def rhs(codes, t, y):
        out = np.empty_like(y)
        out[:, :n] = y[:, n : 2 * n]
        rate = y.shape[1] == 2 * n + 1
        for code, sel in _groups(codes):
            name = names[code]
            chart = atlas.charts[name]
            x, v = y[sel, :n], y[sel, n : 2 * n]
            gam = chart.christoffel(x)
            acc = -np.einsum("mkij,mi,mj->mk", gam, v, v)
            if use_field:
                g = chart.metric(x)
                fh = raise_index(g, field.tensor(name, x))
                fv = np.einsum("mkj,mj->mk", fh, v)
                if mode == "temporal":
                    if rate:
                        speed = y[sel, 2 * n]
                    else:
                        speed = np.sqrt(np.maximum(np.einsum("mi,mij,mj->m", v, g, v), 0.0))
                    fv *= speed[:, None]
                acc += r * fv
            if mode == "temporal":
                if rate:
                    out[sel, 2 * n] = -acc[:, ti] * y[sel, 2 * n]
                acc -= acc[:, ti : ti + 1] * v
            out[sel, n : 2 * n] = acc
        return out

    return rhs


def state_switcher(atlas):
    n = atlas.dim

    def switch(codes, y):
        codes2, x, v = atlas.switch(codes, y[:, :n], y[:, n : 2 * n])
        return codes2, np.concatenate([x, v, y[:, 2 * n :]], axis=1)

    return switch


def state_validator(atlas):
    n = atlas.dim

    def valid(codes, y):
        return atlas.valid(codes, y[:, :n])

    return valid


def flow_batch(atlas, field, ratio, codes, y0, s0, s1, mode="affine", tol=1e-10, store=False, max_steps=200000):
    """Integrate a batch of states ``[x, v]``; thin wrapper around ``dopri_batch``."""
    rhs = make_rhs(atlas, field, ratio, mode)
    return dopri_batch(
        rhs,
        s0,
        y0,
        s1,
        codes,
        rtol=tol,
        atol=tol,
        switch=state_switcher(atlas) if len(atlas) > 1 else None,
        valid=state_validator(atlas),
        store=store,
        max_steps=max_steps,
    )


def _raise_status(res, atlas, i=0):
    st = res.status[i]
    if st == OK:
        return
    n = atlas.dim
    if st == LEFT_ATLAS:
        loc = (atlas.names[res.codes[i]], res.last_valid[i, :n].copy())
        raise LeftChartAtlas(f"trajectory left the atlas near {loc[1]} in chart {loc[0]!r}", loc)
    raise StepUnderflow(f"integration stopped: {STATUS_NAMES[st]} at parameter {res.t[i]}")


def _span(span, start):
    if np.ndim(span) == 0:
        return start, start + float(span)
    return float(span[0]), float(span[1])


def _initial(atlas, init):
    chart = init.x.chart
    if chart not in atlas.charts:
        chart = atlas.default
    y0 = np.concatenate([init.x.coords, init.v.components])[None, :]
    return np.array([atlas.code(chart)]), y0


def integrate_lfe(metric, F, ratio, init: WorldlineState, span, tol=1e-10, mode="affine", max_steps=2000000):
    """Integrate the Lorentz force equation from a unit timelike state.

    Returns a proper-time ``DenseTrajectory`` (``mode="temporal"`` integrates
    in the time coordinate instead and skips the normalization check).
    """
    atlas = as_atlas(metric)
    codes, y0 = _initial(atlas, init)
    n = atlas.dim
    if mode == "affine":
        g = atlas.charts[atlas.names[codes[0]]].metric(y0[0, :n])
        q = y0[0, n:] @ g @ y0[0, n:]
        if abs(q - 1.0) > 1e-10:
            raise NotNormalized(f"g(v, v) = {q!r}, expected 1")
    s0, s1 = _span(span, init.param)
    res = flow_batch(atlas, F, ratio, codes, y0, s0, s1, mode, tol, store=True, max_steps=max_steps)
    _raise_status(res, atlas)
    kind = "proper_time" if mode == "affine" else "cauchy_temporal"
    return DenseTrajectory(res.dense[0], atlas, kind, meta={"ratio": as_ratio(ratio), "tol": tol})


def integrate_geodesic(metric, init: WorldlineState, span, tol=1e-10, mode="affine", max_steps=2000000):
    """Geodesic flow; any causal character is accepted."""
    atlas = as_atlas(metric)
    codes, y0 = _initial(atlas, init)
    s0, s1 = _span(span, init.param)
    res = flow_batch(atlas, None, 0.0, codes, y0, s0, s1, mode, tol, store=True, max_steps=max_steps)
    _raise_status(res, atlas)
    kind = "affine" if mode == "affine" else "cauchy_temporal"
    return DenseTrajectory(res.dense[0], atlas, kind, meta={"ratio": 0.0, "tol": tol})


# -- functionals ------------------------------------------------------------------


def _potential_of(omega):
    if omega is None:
        return None
    if isinstance(omega, EMField):
        if not omega.is_exact or omega.potential is None:
            raise NonExactField("the field has no global potential; the action is undefined")
        return omega.potential
    if isinstance(omega, EMPotential):
        return omega
    raise TypeError(f"expected EMPotential or EMField, got {type(omega).__name__}")


def _integrand(traj, potential, b, kind, tol):
    atlas = traj.atlas

    def f(lam):
        codes, x, v = traj.evaluate(lam)
        out = np.zeros(len(lam))
        for code, sel in _groups(codes):
            name = atlas.names[code]
            xs, vs = x[sel], v[sel]
            g = atlas.charts[name].metric(xs)
            q = np.einsum("mi,mij,mj->m", vs, g, vs)
            if kind == "action":
                scale = np.maximum(1.0, np.abs(vs).max(axis=1) ** 2)
                if np.any(q < -10 * tol * scale):
                    raise NonCausalCurve(f"spacelike tangent found: g(v, v) = {q.min()!r}")
                val = np.sqrt(np.maximum(q, 0.0))
            else:
                val = 0.5 * q
            if potential is not None and b != 0.0:
                val = val + b * np.einsum("mi,mi->m", potential.one_form(name, xs), vs)
            out[sel] = val
        return out

    return f


def _quad(traj, f, rtol):
    a, b = traj.span
    val, err = integrate(f, a, b, traj.breakpoints, atol=1e-13 * max(1.0, b - a), rtol=rtol)
    return FunctionalValue(val, err)


def action_I(metric, omega, ratio, traj: Trajectory, tol=1e-10, rtol=1e-12):
    """Action: integral of sqrt(g(x', x')) + (q/m) omega(x') along the curve."""
    r = as_ratio(ratio)
    potential = _potential_of(omega)
    return _quad(traj, _integrand(traj, potential, r, "action", tol), rtol)


def _require_unit(traj):
    a, b = traj.span
    if abs(a) > 1e-12 or abs(b - 1.0) > 1e-12:
        raise ParameterRangeError(f"curve must be parametrized on [0, 1], got [{a}, {b}]")


def energy_E(metric, traj: Trajectory, rtol=1e-12):
    """Half the integral of g(x', x') over a curve parametrized on [0, 1]."""
    _require_unit(traj)
    return _quad(traj, _integrand(traj, None, 0.0, "energy", 0.0), rtol)


def functional_J(metric, omega, b, traj: Trajectory, rtol=1e-12):
    """Integral of g(x', x')/2 + b omega(x') over a curve parametrized on [0, 1]."""
    _require_unit(traj)
    potential = _potential_of(omega) if b != 0.0 else None
    return _quad(traj, _integrand(traj, potential, float(b), "energy", 0.0), rtol)


# -- residual -------------------------------------------------------------------------


def lfe_defect(atlas, field, ratio, codes, x, v, a):
    """Componentwise D v - r Fhat v per sample (Euclidean chart norm taken by the caller)."""
    r = as_ratio(ratio)
    out = np.empty_like(v)
    for code, sel in _groups(codes):
        name = atlas.names[code]
        chart = atlas.charts[name]
        xs, vs = x[sel], v[sel]
        dv = a[sel] + np.einsum("mkij,mi,mj->mk", chart.christoffel(xs), vs, vs)
        if r != 0.0 and field is not None:
            fh = raise_index(chart.metric(xs), field.tensor(name, xs))
            dv = dv - r * np.einsum("mkj,mj->mk", fh, vs)
        out[sel] = dv
    return out


def lfe_residual(metric, F, ratio, traj: Trajectory, refine=2):
    """Sup over step boundaries and midpoints of |D_s v - (q/m) Fhat v|.

    Curves not already in proper time are reparametrized first.
    """
    if traj.param_kind != "proper_time":
        traj = reparametrize(traj, "proper_time")
    lam = traj.sample_params(refine)
    codes, x, v, a = traj.acceleration(lam)
    if np.any(traj.norms(lam) <= 0):
        raise NotTimelike("residual needs a timelike curve")
    d = lfe_defect(traj.atlas, F, ratio, codes, x, v, a)
    return float(np.linalg.norm(d, axis=1).max())
