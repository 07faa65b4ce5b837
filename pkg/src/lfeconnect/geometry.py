"""Charts, metrics, Christoffel symbols and atlases of product spacetimes.

All chart-level callables are vectorized: they take points of shape
``(m, n)`` and return arrays with a leading batch axis.  The public
operations at the bottom of the module accept single events and do the
validation the batched internals skip.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import BaseMismatch, OutOfChart, SingularMetric, ZeroVector

FD_STEP = 1e-5
SIGNATURE_RTOL = 1e-12


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def christoffel_from_derivatives(g, dg):
    """Levi-Civita symbols ``G[..., k, i, j]`` from ``g`` and ``dg[..., k, i, j] = d_k g_ij``."""
    ginv = np.linalg.inv(g)
    lower = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
    return np.einsum("...kl,...lij->...kij", ginv, lower)


def metric_derivative_from_christoffel(g, gamma):
    low = np.einsum("...il,...lkj->...ikj", g, gamma)
    # d_k g_ij = Gamma_{i,kj} + Gamma_{j,ki}
    return np.swapaxes(low, -3, -2) + np.moveaxis(low, -3, -1)


@dataclass(frozen=True, eq=False)
class MetricField:
    """A Lorentzian metric in one chart, signature (+,-,...,-).

    ``g_eval`` maps points ``(m, n)`` to matrices ``(m, n, n)``.  When
    ``christoffel_eval`` is omitted the symbols come from central
    differences of ``g_eval`` with step ``fd_step``.
    """

    dim: int
    g_eval: Callable[[np.ndarray], np.ndarray]
    christoffel_eval: Callable[[np.ndarray], np.ndarray] | None = None
    domain: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = FD_STEP
    name: str = "main"
    periodic: tuple = ()

    @property
    def christoffel_mode(self):
        return "finite-difference" if self.christoffel_eval is None else "analytic"

    def metric(self, x):
        xb, single = _as_batch(x)
        g = self.g_eval(xb)
        return g[0] if single else g

    def contains(self, x):
        xb, single = _as_batch(x)
        ok = np.all(np.isfinite(xb), axis=-1)
        if self.domain is not None:
            ok &= self.domain(xb)
        return bool(ok[0]) if single else ok

    def metric_derivative_fd(self, x):
        xb, single = _as_batch(x)
        m, n = xb.shape
        h = self.fd_step
        shifts = h * np.eye(n)
        pts = np.concatenate([xb[:, None, :] + shifts, xb[:, None, :] - shifts], axis=1)
        gs = self.g_eval(pts.reshape(-1, n)).reshape(m, 2 * n, n, n)
        dg = (gs[:, :n] - gs[:, n:]) / (2.0 * h)
        return dg[0] if single else dg

    def christoffel_fd(self, x):
        xb, single = _as_batch(x)
        gam = christoffel_from_derivatives(self.g_eval(xb), self.metric_derivative_fd(xb))
        return gam[0] if single else gam

    def christoffel(self, x):
        if self.christoffel_eval is None:
            return self.christoffel_fd(x)
        xb, single = _as_batch(x)
        gam = self.christoffel_eval(xb)
        return gam[0] if single else gam

    def metric_derivative(self, x):
        if self.christoffel_eval is None:
            return self.metric_derivative_fd(x)
        xb, single = _as_batch(x)
        dg = metric_derivative_from_christoffel(self.g_eval(xb), self.christoffel_eval(xb))
        return dg[0] if single else dg

    def wrap_difference(self, dx):
        """Coordinate difference with periodic coordinates folded into (-P/2, P/2]."""
        dx = np.array(dx, dtype=float, copy=True)
        for idx, period in self.periodic:
            dx[..., idx] = dx[..., idx] - period * np.round(dx[..., idx] / period)
        return dx


@dataclass(frozen=True, eq=False)
class Event:
    coords: np.ndarray
    chart: str = "main"

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Event
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))


@dataclass(frozen=True)
class CausalCharacter:
    kind: str
    future: bool | None = None


def blend_profile(z, band, derivatives=False):
    """Quintic smoothstep from 0 (below ``z_c - eps``) to 1 (above ``z_c + eps``).

    With ``derivatives=True`` returns ``(S, dS/dz, d2S/dz2)``.
    """
    z_c, eps = band
    if eps <= 0:
        raise ValueError("blend half-width must be positive")
    width = 2.0 * eps
    u = np.clip((np.asarray(z, dtype=float) - (z_c - eps)) / width, 0.0, 1.0)
    s = u**3 * (10.0 + u * (-15.0 + 6.0 * u))
    if not derivatives:
        return s
    ds = 30.0 * u**2 * (1.0 - u) ** 2 / width
    d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / width**2
    return s, ds, d2s


class Atlas:
    """Charts of one manifold plus the maps between them.

    Chart changes go through a common representation (for product
    spacetimes: time plus the embedding point in R^3).  ``preference``
    scores tell the integrator when a state should move to another chart;
    a negative score means "leave if a better chart exists".
    """

    def __init__(
        self,
        charts: Sequence[MetricField],
        to_common: Mapping[str, Callable] | None = None,
        from_common: Mapping[str, Callable] | None = None,
        preference: Mapping[str, Callable] | None = None,
        embedding: Mapping[str, Callable] | None = None,
        time_index: int | None = 0,
    ):
        self.charts = {c.name: c for c in charts}
        self.names = [c.name for c in charts]
        self.codes = {name: i for i, name in enumerate(self.names)}
        self.dim = charts[0].dim
        self._to_common = dict(to_common or {})
        self._from_common = dict(from_common or {})
        self._preference = dict(preference or {})
        self._embedding = dict(embedding or {})
        self.time_index = time_index

    def __len__(self):
        return len(self.names)

    @property
    def default(self):
        return self.names[0]

    def chart(self, name):
        return self.charts[name]

    def code(self, name):
        return self.codes[name]

    def transition(self, src, dst, x, v=None):
        if src == dst:
            return x, v
        p, dp = self._to_common[src](x, v)
        return self._from_common[dst](p, dp)

    def event_in(self, event: Event, chart: str):
        if event.chart == chart:
            return event.coords.copy()
        x, _ = self.transition(event.chart, chart, event.coords[None, :])
        return x[0]

    def valid(self, codes, x):
        ok = np.zeros(len(x), dtype=bool)
        for code in np.unique(codes):
            sel = codes == code
            ok[sel] = self.charts[self.names[code]].contains(x[sel])
        return ok

    def preference(self, name, x):
        fn = self._preference.get(name)
        return np.ones(len(x)) if fn is None else fn(x)

    def switch(self, codes, x, v):
        """Move states whose chart preference went negative to the best chart."""
        if len(self.names) == 1:
            return codes, x, v
        codes = codes.copy()
        x = x.copy()
        v = v.copy()
        for code in np.unique(codes):
            name = self.names[code]
            sel = np.flatnonzero(codes == code)
            pref = self.preference(name, x[sel])
            move = sel[pref < 0]
            if move.size == 0:
                continue
            best = pref[pref < 0].copy()
            best_code = np.full(move.size, code)
            best_x, best_v = x[move].copy(), v[move].copy()
            for other in self.names:
                if other == name:
                    continue
                xo, vo = self.transition(name, other, x[move], v[move])
                po = np.where(self.charts[other].contains(xo), self.preference(other, xo), -np.inf)
                better = po > best
                best[better] = po[better]
                best_code[better] = self.codes[other]
                best_x[better] = xo[better]
                best_v[better] = vo[better]
            codes[move], x[move], v[move] = best_code, best_x, best_v
        return codes, x, v

    def embed(self, name, x):
        """Spatial embedding point in R^3 (product spacetimes only)."""
        fn = self._embedding.get(name)
        if fn is None:
            raise NotImplementedError(f"chart {name!r} has no embedding")
        return fn(x)

    def has_embedding(self):
        return bool(self._embedding)


# -- product spacetimes ---------------------------------------------------------


def product_chart(surface_chart, name=None):
    """Spacetime chart (t, u) with metric dt^2 - h for a surface chart."""
    n = surface_chart.dim + 1

    def g_eval(x):
        h = surface_chart.metric(x[:, 1:])
        g = np.zeros((len(x), n, n))
        g[:, 0, 0] = 1.0
        g[:, 1:, 1:] = -h
        return g

    def christoffel_eval(x):
        gam = np.zeros((len(x), n, n, n))
        gam[:, 1:, 1:, 1:] = surface_chart.christoffel(x[:, 1:])
        return gam

    def domain(x):
        return surface_chart.contains(x[:, 1:])

    periodic = tuple((i + 1, p) for i, p in surface_chart.periodic)
    return MetricField(
        dim=n,
        g_eval=g_eval,
        christoffel_eval=christoffel_eval,
        domain=domain,
        fd_step=surface_chart.fd_step,
        name=name or surface_chart.name,
        periodic=periodic,
    )


class ProductSpacetime(Atlas):
    """R x Sigma with g = dt^2 - dl^2, one spacetime chart per surface chart."""

    def __init__(self, surface):
        self.surface = surface
        charts = [product_chart(c) for c in surface.charts.values()]
        to_common, from_common, preference, embedding = {}, {}, {}, {}
        for sc in surface.charts.values():
            to_common[sc.name] = self._make_to_common(sc)
            from_common[sc.name] = self._make_from_common(sc)
            preference[sc.name] = (lambda s: lambda x: s.preference(x[:, 1:]))(sc)
            embedding[sc.name] = (lambda s: lambda x: s.embed(x[:, 1:]))(sc)
        super().__init__(charts, to_common, from_common, preference, embedding, time_index=0)

    @staticmethod
    def _make_to_common(sc):
        def to_common(x, v=None):
            p = np.concatenate([x[:, :1], sc.embed(x[:, 1:])], axis=1)
            if v is None:
                return p, None
            jac = sc.embed_jacobian(x[:, 1:])
            dp = np.concatenate([v[:, :1], np.einsum("mai,mi->ma", jac, v[:, 1:])], axis=1)
            return p, dp

        return to_common

    @staticmethod
    def _make_from_common(sc):
        def from_common(p, dp=None):
            # points at a chart's own singularity map to non-finite coordinates, which
            # the chart domain test rejects; the arithmetic warnings carry no information
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                u = sc.from_embedding(p[:, 1:])
                x = np.concatenate([p[:, :1], u], axis=1)
                if dp is None:
                    return x, None
                jac = sc.embed_jacobian(u)
                h = np.einsum("mai,maj->mij", jac, jac)
                du = np.linalg.solve(h, np.einsum("mai,ma->mi", jac, dp[:, 1:])[..., None])[..., 0]
            return x, np.concatenate([dp[:, :1], du], axis=1)

        return from_common


def single_chart_atlas(metric: MetricField, embedding=None, time_index=0):
    emb = None if embedding is None else {metric.name: embedding}
    return Atlas([metric], embedding=emb, time_index=time_index)


def minkowski(dim=3):
    """Flat R^{1,dim-1} in Cartesian coordinates (t, x, y, ...)."""
    eta = np.diag([1.0] + [-1.0] * (dim - 1))

    def g_eval(x):
        return np.broadcast_to(eta, (len(x), dim, dim)).copy()

    def christoffel_eval(x):
        return np.zeros((len(x), dim, dim, dim))

    return MetricField(dim=dim, g_eval=g_eval, christoffel_eval=christoffel_eval, name="cartesian")


# -- single-event operations ----------------------------------------------------


def _check_in_chart(metric: MetricField, x: Event):
    if x.coords.shape != (metric.dim,):
        raise OutOfChart(f"event has {x.coords.shape} coordinates, chart needs {metric.dim}")
    if not metric.contains(x.coords):
        raise OutOfChart(f"{x.coords} outside chart {metric.name!r}")


def check_signature(g):
    """Raise SingularMetric unless ``g`` is symmetric with one positive eigenvalue."""
    if not np.allclose(g, g.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise SingularMetric("metric matrix is not symmetric")
    ev = np.linalg.eigvalsh(g)
    scale = np.abs(ev).max()
    if scale == 0 or np.abs(ev).min() <= SIGNATURE_RTOL * scale:
        raise SingularMetric("metric is degenerate to working precision")
    if np.count_nonzero(ev > 0) != 1:
        raise SingularMetric(f"signature is not (+,-,...,-): eigenvalues {ev}")


def metric_eval(metric: MetricField, x: Event):
    _check_in_chart(metric, x)
    g = metric.metric(x.coords)
    check_signature(g)
    return g


def christoffel(metric: MetricField, x: Event):
    metric_eval(metric, x)
    return metric.christoffel(x.coords)


def _same_base(a: Event, b: Event):
    return a.chart == b.chart and np.array_equal(a.coords, b.coords)


def inner(metric: MetricField, x: Event, u: TangentVector, v: TangentVector):
    if not (_same_base(u.base, x) and _same_base(v.base, x)):
        raise BaseMismatch("tangent vectors are not based at the given event")
    g = metric_eval(metric, x)
    return float(u.components @ g @ v.components)


def causal_character(metric: MetricField, x: Event, v: TangentVector, tol=1e-10, time_index=0):
    if not np.any(v.components):
        raise ZeroVector("causal character of the zero vector is undefined")
    q = inner(metric, x, v, v)
    if q > tol:
        kind = "timelike"
    elif q >= -tol:
        kind = "lightlike"
    else:
        return CausalCharacter("spacelike", None)
    future = None if time_index is None else bool(v.components[time_index] > 0)
    return CausalCharacter(kind, future)


def classify_norms(q, tol):
    """Vectorized causal labels for squared norms ``q``."""
    q = np.asarray(q)
    return np.where(q > tol, "timelike", np.where(q >= -tol, "lightlike", "spacelike"))


def induced_surface_metric(patchwork, p: Event):
    chart = patchwork.chart(p.chart)
    u = np.atleast_2d(p.coords)
    if u.shape != (1, 2) or not chart.contains(u)[0]:
        raise OutOfChart(f"{p.coords} outside surface chart {p.chart!r}")
    return chart.metric(u)[0]
