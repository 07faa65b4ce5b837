"""Kaluza-Klein extension P = M x R with metric g - a^2 (dy + beta omega)^2.

Lightlike geodesics of the extended metric project to Lorentz force
solutions (timelike when the fiber charge nu is nonzero), and the fiber
coordinate gained by a lightlike lift is an affine function of the action.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    FunctionalValue,
    _groups,
    _potential_of,
    _raise_status,
    _span,
    action_I,
    as_atlas,
    flow_batch,
)
from .errors import EmptyCandidateSet, NonCausalCurve, OutOfChart
from .fields import as_ratio
from .geometry import (
    Atlas,
    Event,
    MetricField,
    TangentVector,
    check_signature,
    christoffel_from_derivatives,
)
from .quadrature import KRONROD_WEIGHTS, NODES, cumulative
from .trajectory import DenseTrajectory, ProjectedTrajectory, Trajectory


def _kk_blocks(g, w, a, beta):
    m, n = w.shape
    G = np.empty((m, n + 1, n + 1))
    G[:, :n, :n] = g - (a * beta) ** 2 * np.einsum("mi,mj->mij", w, w)
    G[:, :n, n] = G[:, n, :n] = -(a * a * beta) * w
    G[:, n, n] = -a * a
    return G


def kk_chart(base_chart: MetricField, potential, a, beta):
    n = base_chart.dim
    name = base_chart.name

    def g_eval(X):
        x = X[:, :n]
        return _kk_blocks(base_chart.metric(x), potential.one_form(name, x), a, beta)

    def christoffel_eval(X):
        x = X[:, :n]
        g = base_chart.metric(x)
        w = potential.one_form(name, x)
        dg = base_chart.metric_derivative(x)
        dw = potential.derivative(name, x)
        G = _kk_blocks(g, w, a, beta)
        m = len(x)
        dG = np.zeros((m, n + 1, n + 1, n + 1))
        dG[:, :n, :n, :n] = dg - (a * beta) ** 2 * (
            np.einsum("mki,mj->mkij", dw, w) + np.einsum("mi,mkj->mkij", w, dw)
        )
        dG[:, :n, :n, n] = dG[:, :n, n, :n] = -(a * a * beta) * dw
        return christoffel_from_derivatives(G, dG)

    def domain(X):
        return base_chart.contains(X[:, :n])

    return MetricField(
        dim=n + 1,
        g_eval=g_eval,
        christoffel_eval=christoffel_eval,
        domain=domain,
        fd_step=base_chart.fd_step,
        name=name,
        periodic=base_chart.periodic,
    )


class KKAtlas(Atlas):
    """Charts (x, y) over every chart of the base atlas; the fiber coordinate is global."""

    def __init__(self, base: Atlas, potential, a, beta):
        self.base = base
        n = base.dim
        charts = [kk_chart(base.charts[nm], potential, a, beta) for nm in base.names]

        def lift_to(fn):
            def to_common(X, V=None):
                p, dp = fn(X[:, :n], None if V is None else V[:, :n])
                p = np.concatenate([p, X[:, n:]], axis=1)
                if V is not None:
                    dp = np.concatenate([dp, V[:, n:]], axis=1)
                return p, dp

            return to_common

        def lift_from(fn):
            def from_common(P, dP=None):
                x, v = fn(P[:, :-1], None if dP is None else dP[:, :-1])
                x = np.concatenate([x, P[:, -1:]], axis=1)
                if dP is not None:
                    v = np.concatenate([v, dP[:, -1:]], axis=1)
                return x, v

            return from_common

        to_common = {nm: lift_to(f) for nm, f in base._to_common.items()}
        from_common = {nm: lift_from(f) for nm, f in base._from_common.items()}
        preference = {nm: (lambda f: lambda X: f(X[:, :n]))(f) for nm, f in base._preference.items()}
        embedding = {nm: (lambda f: lambda X: f(X[:, :n]))(f) for nm, f in base._embedding.items()}
        super().__init__(charts, to_common, from_common, preference, embedding, base.time_index)


@dataclass(eq=False)
class KKBundle:
    """Trivial R-bundle over a spacetime with an exact field, for a fixed charge ratio."""

    base: Atlas
    potential: object
    ratio: float
    beta: float = 1.0
    kk: KKAtlas = field(init=False)

    def __post_init__(self):
        self.base = as_atlas(self.base)
        self.potential = _potential_of(self.potential)
        self.ratio = as_ratio(self.ratio)
        if self.ratio == 0.0:
            raise ValueError("the extension needs a nonzero charge ratio")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        self.kk = KKAtlas(self.base, self.potential, self.a, self.beta)

    @property
    def a(self):
        return abs(self.ratio) / self.beta

    @property
    def n(self):
        return self.base.dim

    @property
    def sign(self):
        return 1 if self.ratio > 0 else -1

    def omega(self, name, x, v):
        return np.einsum("mi,mi->m", self.potential.one_form(name, x), v)

    def nu_values(self, codes, X, V):
        """Fiber charge -a^2 (y' + beta omega(v)) per sample."""
        n = self.n
        out = np.empty(len(X))
        for code, sel in _groups(codes):
            name = self.kk.names[code]
            out[sel] = -self.a**2 * (V[sel, n] + self.beta * self.omega(name, X[sel, :n], V[sel, :n]))
        return out

    def metric_values(self, codes, X, V):
        out = np.empty(len(X))
        for code, sel in _groups(codes):
            G = self.kk.charts[self.kk.names[code]].metric(X[sel])
            out[sel] = np.einsum("mi,mij,mj->m", V[sel], G, V[sel])
        return out


@dataclass
class KKEvent:
    x: Event
    y: float = 0.0


@dataclass
class KKState:
    x: Event
    v: TangentVector
    y: float = 0.0
    dy: float = 0.0
    param: float = 0.0


@dataclass
class LiftResult:
    trajectory: Trajectory
    sign: int
    arrival: float
    error: float
    nu: float | None = None


def kk_metric_eval(bundle: KKBundle, p: KKEvent):
    name = p.x.chart if p.x.chart in bundle.kk.charts else bundle.kk.default
    X = np.append(p.x.coords, p.y)
    chart = bundle.kk.charts[name]
    if not chart.contains(X):
        raise OutOfChart(f"{p.x.coords} outside chart {name!r}")
    G = chart.metric(X)
    check_signature(G)
    return G


def noether_nu(bundle: KKBundle, state: KKState):
    name = state.x.chart if state.x.chart in bundle.kk.charts else bundle.kk.default
    w = bundle.potential.one_form(name, state.x.coords)
    return float(-bundle.a**2 * (state.dy + bundle.beta * (w @ state.v.components)))


def cone_direction(bundle_or_atlas, name, x0, xi, ratio_sign=1, a=None, beta=1.0, potential=None):
    """Initial velocities parametrized by stereographic coordinates ``xi``.

    Returns ``(V, dy, nu)`` where ``V = dx/dt`` (time component 1) has spatial
    part ``E w``, ``E`` an orthonormal frame of the spatial metric at ``x0``
    and ``w = 2 xi / (1 + |xi|^2)`` in the closed unit ball.  When a bundle
    is given, ``dy`` makes the lifted velocity exactly lightlike with
    ``nu = ratio_sign * a (1 - |xi|^2) / (1 + |xi|^2)``: ``xi = 0`` is the
    static direction and ``|xi| = 1`` is a lightlike base direction.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if isinstance(bundle_or_atlas, KKBundle):
        atlas = bundle_or_atlas.base
        a, beta, potential = bundle_or_atlas.a, bundle_or_atlas.beta, bundle_or_atlas.potential
        ratio_sign = bundle_or_atlas.sign
    else:
        atlas = bundle_or_atlas
    frame = spatial_frame(atlas, name, x0)
    r2 = np.sum(xi**2, axis=1)
    w = 2 * xi / (1 + r2)[:, None]
    m = len(xi)
    V = np.zeros((m, atlas.dim))
    V[:, 0] = 1.0
    V[:, 1:] = w @ frame.T
    if potential is None:
        return V, None, None
    eta = -ratio_sign * (1 - r2) / (1 + r2)
    om = np.einsum("i,mi->m", potential.one_form(name, np.asarray(x0, dtype=float)), V)
    dy = eta / a - beta * om
    nu = -a * eta
    return V, dy, nu


def spatial_frame(atlas, name, x0):
    """Columns orthonormal for the (positive) spatial metric at ``x0``."""
    g = atlas.charts[name].metric(np.asarray(x0, dtype=float))
    h = -g[1:, 1:]
    L = np.linalg.cholesky(h)
    return np.linalg.inv(L).T


def cone_coordinates(bundle_or_atlas, name, x0, V):
    """Inverse of ``cone_direction`` for velocities with ``V^0 = 1``."""
    atlas = bundle_or_atlas.base if isinstance(bundle_or_atlas, KKBundle) else bundle_or_atlas
    frame = spatial_frame(atlas, name, x0)
    w = np.linalg.solve(frame, np.atleast_2d(V)[:, 1:].T).T
    r = np.linalg.norm(w, axis=1)
    # w = 2 xi/(1+|xi|^2) with |xi| <= 1
    scale = np.where(r > 0, (1 - np.sqrt(np.maximum(1 - r**2, 0.0))) / np.where(r > 0, r**2, 1.0), 0.5)
    return w * scale[:, None]


# -- lifts ----------------------------------------------------------------------


class LiftedTrajectory(Trajectory):
    """A base curve together with the fiber coordinate making it lightlike."""

    def __init__(self, bundle, base_traj, y0, sign, tol=1e-10):
        self.bundle = bundle
        self.base_traj = base_traj
        self.atlas = bundle.kk
        self.param_kind = base_traj.param_kind
        self.sign = sign
        self.tol = tol
        self.meta = dict(getattr(base_traj, "meta", {}))
        self._breaks = base_traj.breakpoints
        ys, err = cumulative(self._dy, self._breaks, atol=1e-14, rtol=1e-13)
        self._y = y0 + ys
        self.error = err

    @property
    def span(self):
        return self.base_traj.span

    @property
    def breakpoints(self):
        return self._breaks

    def _dy(self, lam):
        codes, x, v = self.base_traj.evaluate(lam)
        b = self.bundle
        out = np.empty(len(lam))
        for code, sel in _groups(codes):
            name = b.base.names[code]
            g = b.base.charts[name].metric(x[sel])
            q = np.einsum("mi,mij,mj->m", v[sel], g, v[sel])
            scale = np.maximum(1.0, np.abs(v[sel]).max(axis=1) ** 2)
            if np.any(q < -10 * self.tol * scale):
                raise NonCausalCurve(f"spacelike tangent found: g(v, v) = {q.min()!r}")
            speed = np.sqrt(np.maximum(q, 0.0))
            out[sel] = -self.sign * speed / b.a - b.beta * b.omega(name, x[sel], v[sel])
        return out

    def fiber(self, lam):
        lam = self._check_range(lam)
        k = np.clip(np.searchsorted(self._breaks, lam, side="right") - 1, 0, len(self._breaks) - 2)
        lo = self._breaks[k]
        half = 0.5 * (lam - lo)
        pts = (0.5 * (lam + lo))[:, None] + half[:, None] * NODES[None, :]
        vals = self._dy(pts.ravel()).reshape(pts.shape)
        return self._y[k] + half * (vals @ KRONROD_WEIGHTS)

    def evaluate(self, lam):
        lam = self._check_range(lam)
        codes, x, v = self.base_traj.evaluate(lam)
        X = np.concatenate([x, self.fiber(lam)[:, None]], axis=1)
        V = np.concatenate([v, self._dy(lam)[:, None]], axis=1)
        return codes, X, V

    def acceleration(self, lam):
        codes, X, V = self.evaluate(lam)
        _, _, _, a = self.base_traj.acceleration(lam)
        a0, b0 = self.span
        h = 1e-6 * max(1.0, b0 - a0)
        lp, lm = np.minimum(lam + h, b0), np.maximum(lam - h, a0)
        ddy = (self._dy(lp) - self._dy(lm)) / (lp - lm)
        return codes, X, V, np.concatenate([a, ddy[:, None]], axis=1)


def lightlike_lift(bundle: KKBundle, sigma: Trajectory, y0=0.0, sign=None, tol=1e-10):
    """Lift a causal base curve to a lightlike curve of the extension.

    ``sign=+1`` pairs with charge ratio +|q/m| (arrival y0 - I/a), ``-1`` with
    -|q/m| (arrival y0 + I/a).  Defaults to the bundle's own sign.
    """
    sign = bundle.sign if sign is None else (1 if sign > 0 else -1)
    lifted = LiftedTrajectory(bundle, sigma, y0, sign, tol)
    return LiftResult(lifted, sign, float(lifted._y[-1]), lifted.error)


def arrival_coordinate(bundle: KKBundle, sigma: Trajectory, y0=0.0, sign=None, tol=1e-10):
    return lightlike_lift(bundle, sigma, y0, sign, tol).arrival


def integrate_kk_geodesic(bundle: KKBundle, init: KKState, span, tol=1e-10, mode="affine", max_steps=2000000):
    """Geodesic of the extension; ``mode="temporal"`` uses the time coordinate as parameter."""
    kk = bundle.kk
    name = init.x.chart if init.x.chart in kk.charts else kk.default
    y0 = np.concatenate([init.x.coords, [init.y], init.v.components, [init.dy]])[None, :]
    s0, s1 = _span(span, init.param)
    res = flow_batch(kk, None, 0.0, np.array([kk.code(name)]), y0, s0, s1, mode, tol, store=True, max_steps=max_steps)
    _raise_status(res, kk)
    kind = "affine" if mode == "affine" else "cauchy_temporal"
    return DenseTrajectory(res.dense[0], kk, kind, meta={"ratio": bundle.ratio, "tol": tol})


def project(bundle: KKBundle, gamma: Trajectory):
    """Drop the fiber coordinate."""
    return ProjectedTrajectory(gamma, bundle.base)


def kk_diagnostics(bundle: KKBundle, gamma: Trajectory, refine=2):
    """nu, g~(V, V) and base speed |x'|_g at the sample points of a KK trajectory."""
    lam = gamma.sample_params(refine)
    codes, X, V = gamma.evaluate(lam)
    nu = bundle.nu_values(codes, X, V)
    q = bundle.metric_values(codes, X, V)
    n = bundle.n
    speed = np.empty(len(lam))
    for code, sel in _groups(codes):
        g = bundle.base.charts[bundle.base.names[code]].metric(X[sel, :n])
        speed[sel] = np.sqrt(np.maximum(np.einsum("mi,mij,mj->m", V[sel, :n], g, V[sel, :n]), 0.0))
    return {"param": lam, "nu": nu, "norm": q, "speed": speed}


def verify_fermat(bundle: KKBundle, candidates, y0=0.0):
    """Check that the action maximizer is the extremal arrival coordinate.

    For positive charge ratios the maximizer of I must minimize the
    arrival coordinate of the + lift; for negative ratios it must maximize
    that of the - lift.  Agreement is on the index, not the values.
    """
    if not candidates:
        raise EmptyCandidateSet("no candidate curves")
    actions, arrivals = [], []
    for sigma in candidates:
        actions.append(action_I(bundle.base, bundle.potential, bundle.ratio, sigma).value)
        arrivals.append(arrival_coordinate(bundle, sigma, y0, bundle.sign))
    actions, arrivals = np.array(actions), np.array(arrivals)
    i_max = int(np.argmax(actions))
    i_ext = int(np.argmin(arrivals)) if bundle.sign > 0 else int(np.argmax(arrivals))
    predicted = y0 - bundle.sign * actions / bundle.a
    return {
        "actions": actions,
        "arrivals": arrivals,
        "argmax_action": i_max,
        "extremal_arrival": i_ext,
        "agree": i_max == i_ext,
        "affine_defect": float(np.abs(arrivals - predicted).max()),
    }
