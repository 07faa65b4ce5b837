"""Electromagnetic potentials, field tensors, index raising and flux integrals.

Potentials and fields are stored per chart: ``components[chart](x)`` maps
points ``(m, n)`` to one-form components ``(m, n)`` or two-form components
``(m, n, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BaseMismatch, OpenMesh, OutOfChart
from .geometry import FD_STEP, Event, MetricField, TangentVector, _same_base, check_signature


@dataclass(frozen=True)
class ChargeRatio:
    """Charge-to-mass ratio q/m; zero gives the geodesic limit."""

    ratio: float

    def __post_init__(self):
        if not np.isfinite(self.ratio):
            raise ValueError("charge ratio must be finite")

    def __float__(self):
        return float(self.ratio)


def as_ratio(value):
    return float(value.ratio if isinstance(value, ChargeRatio) else value)


@dataclass(eq=False)
class EMPotential:
    """One-form omega, given per chart.

    ``derivatives[chart](x)`` may supply ``d[..., k, i] = d_k omega_i``;
    otherwise central differences with ``fd_step`` are used.
    """

    components: dict
    derivatives: dict = field(default_factory=dict)
    fd_step: float = FD_STEP
    support: str = ""

    def one_form(self, chart, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        w = self.components[chart](xb)
        return w[0] if single else w

    def derivative(self, chart, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if chart in self.derivatives:
            d = self.derivatives[chart](xb)
        else:
            d = self.derivative_fd(chart, xb)
        return d[0] if single else d

    def derivative_fd(self, chart, x):
        m, n = x.shape
        h = self.fd_step
        shifts = h * np.eye(n)
        pts = np.concatenate([x[:, None, :] + shifts, x[:, None, :] - shifts], axis=1)
        w = self.components[chart](pts.reshape(-1, n)).reshape(m, 2 * n, n)
        return (w[:, :n] - w[:, n:]) / (2.0 * h)

    def __call__(self, chart, x, v):
        """omega(v) for batched points and vectors."""
        return np.einsum("...i,...i->...", self.one_form(chart, x), v)


def zero_potential(charts, dim):
    comps = {c: (lambda x, n=dim: np.zeros((len(x), n))) for c in charts}
    ders = {c: (lambda x, n=dim: np.zeros((len(x), n, n))) for c in charts}
    return EMPotential(comps, ders, support="empty")


@dataclass(eq=False)
class EMField:
    """Two-form F per chart.  ``origin`` is ``"exact"`` (F = d omega) or ``"direct"``."""

    components: dict
    origin: str = "direct"
    potential: EMPotential | None = None

    @classmethod
    def from_potential(cls, potential: EMPotential, analytic: dict | None = None):
        """F_ij = d_i omega_j - d_j omega_i, unless closed forms are supplied per chart."""
        analytic = analytic or {}
        comps = {}
        for chart in potential.components:
            if chart in analytic:
                comps[chart] = analytic[chart]
            else:
                comps[chart] = (lambda c: lambda x: _exterior(potential.derivative(c, x)))(chart)
        return cls(comps, "exact", potential)

    @property
    def is_exact(self):
        return self.origin == "exact"

    def tensor(self, chart, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        f = self.components[chart](xb)
        return f[0] if single else f


def _exterior(d):
    return d - np.swapaxes(d, -1, -2)


def zero_field(charts, dim):
    return EMField.from_potential(zero_potential(charts, dim))


def raise_index(g, f):
    """F-hat = g^{-1} F, so that g(v, F-hat w) = F(v, w)."""
    return np.linalg.solve(g, f)


# -- single-event operations ----------------------------------------------------


def _check(metric: MetricField, x: Event):
    if x.coords.shape != (metric.dim,) or not metric.contains(x.coords):
        raise OutOfChart(f"{x.coords} outside chart {metric.name!r}")


def potential_eval(omega: EMPotential, metric: MetricField, x: Event, v: TangentVector):
    _check(metric, x)
    if not _same_base(v.base, x):
        raise BaseMismatch("vector not based at the event")
    return float(omega.one_form(metric.name, x.coords) @ v.components)


def field_eval(F: EMField, metric: MetricField, x: Event, u: TangentVector, v: TangentVector):
    _check(metric, x)
    return float(u.components @ F.tensor(metric.name, x.coords) @ v.components)


def field_eval_fd(F: EMField, metric: MetricField, x: Event):
    """Exterior derivative of the potential by central differences (cross-check)."""
    if F.potential is None:
        raise ValueError("field has no potential")
    _check(metric, x)
    d = F.potential.derivative_fd(metric.name, x.coords[None, :])[0]
    return _exterior(d)


def raise_field(metric: MetricField, F: EMField, x: Event):
    _check(metric, x)
    g = metric.metric(x.coords)
    check_signature(g)
    return raise_index(g, F.tensor(metric.name, x.coords))


# -- flux integrals over closed meshes ----------------------------------------------


@dataclass(eq=False)
class TriangleMesh:
    """Oriented triangle mesh.

    With ``chart`` set, vertices are coordinates in that spacetime chart.
    Otherwise vertices are points of R^3 on an embedded surface and each
    triangle is pulled back through the best surface chart of the atlas.
    """

    vertices: np.ndarray
    faces: np.ndarray
    chart: str | None = None

    def check_closed(self):
        edges = {}
        for a, b, c in self.faces:
            for e in ((a, b), (b, c), (c, a)):
                edges[e] = edges.get(e, 0) + 1
        for (a, b), k in edges.items():
            if k != 1 or edges.get((b, a), 0) != 1:
                raise OpenMesh(f"edge {(a, b)} is not shared by exactly two consistently oriented faces")

    def subdivided(self, project=None):
        """Split each triangle into four; ``project`` maps new midpoints back onto the surface."""
        verts = [v for v in self.vertices]
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                cache[key] = len(verts)
                verts.append(0.5 * (self.vertices[a] + self.vertices[b]))
            return cache[key]

        faces = []
        for a, b, c in self.faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        V = np.array(verts)
        if project is not None:
            n0 = len(self.vertices)
            V[n0:] = project(V[n0:])
        return TriangleMesh(V, np.array(faces), self.chart)


def icosphere(radius=1.0, center=(0.0, 0.0, 0.0), level=0):
    phi = 0.5 * (1 + np.sqrt(5.0))
    V = np.array(
        [[-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
         [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
         [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]], dtype=float)
    Fc = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    center = np.asarray(center, dtype=float)
    V = center + radius * V / np.linalg.norm(V, axis=1)[:, None]
    mesh = TriangleMesh(V, Fc)

    def project(P):
        d = P - center
        return center + radius * d / np.linalg.norm(d, axis=1)[:, None]

    for _ in range(level):
        mesh = mesh.subdivided(project)
    return mesh


def chart_box_mesh(center, half_widths, chart):
    """Closed outward-oriented surface of a small box in a 3D chart (two triangles per face)."""
    c = np.asarray(center, dtype=float)
    h = np.asarray(half_widths, dtype=float)
    corners = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=float)
    V = c + corners * h

    def idx(i, j, k):
        return (i > 0) * 4 + (j > 0) * 2 + (k > 0)

    faces = []
    for axis in range(3):
        for sgn in (-1, 1):
            others = [a for a in range(3) if a != axis]
            quad = []
            for s1, s2 in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                p = [0, 0, 0]
                p[axis], p[others[0]], p[others[1]] = sgn, s1, s2
                quad.append(idx(*p))
            # orient so the normal points along sgn * axis
            e1 = V[quad[1]] - V[quad[0]]
            e2 = V[quad[2]] - V[quad[0]]
            if np.cross(e1, e2)[axis] * sgn < 0:
                quad = quad[::-1]
            faces += [(quad[0], quad[1], quad[2]), (quad[0], quad[2], quad[3])]
    return TriangleMesh(V, np.array(faces), chart)


def _triangle_flux_chart(F, chart, x0, x1, x2):
    """Degree-2 (edge-midpoint) rule for the two-form over flat chart triangles."""
    e1, e2 = x1 - x0, x2 - x0
    mids = np.concatenate([0.5 * (x0 + x1), 0.5 * (x1 + x2), 0.5 * (x2 + x0)])
    f = F.tensor(chart, mids).reshape(3, len(x0), *F.tensor(chart, mids[:1]).shape[1:])
    vals = np.einsum("kmij,mi,mj->km", f, e1, e2)
    return 0.5 * vals.mean(axis=0)


def _flux_once(F, mesh, atlas, time=0.0):
    V, T = mesh.vertices, mesh.faces
    if mesh.chart is not None:
        return float(_triangle_flux_chart(F, mesh.chart, V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]).sum())
    surface = atlas.surface
    cent = V[T].mean(axis=1)
    best = np.full(len(T), -np.inf)
    choice = np.zeros(len(T), dtype=int)
    names = list(surface.charts)
    for k, name in enumerate(names):
        sc = surface.charts[name]
        u = sc.from_embedding(cent)
        score = np.where(sc.contains(u), sc.preference(u), -np.inf)
        # polar/cylinder evaluation charts have constant negative preference; still usable
        better = score > best
        best[better], choice[better] = score[better], k
    total = 0.0
    for k, name in enumerate(names):
        sel = np.flatnonzero(choice == k)
        if sel.size == 0:
            continue
        sc = surface.charts[name]
        pts = [sc.from_embedding(V[T[sel, j]]) for j in range(3)]
        for idx, period in sc.periodic:
            for j in (1, 2):
                d = pts[j][:, idx] - pts[0][:, idx]
                pts[j][:, idx] -= period * np.round(d / period)
        xs = [np.column_stack([np.full(sel.size, time), p]) for p in pts]
        total += float(_triangle_flux_chart(F, name, *xs).sum())
    return total


def flux_integral(F: EMField, mesh: TriangleMesh, atlas=None, rtol=1e-3, atol=1e-9, max_levels=6):
    """Integral of F over a closed oriented mesh, refined until two levels agree.

    Returns ``(value, error_estimate)``; on convergence the value is the
    Richardson extrapolation of the last two levels.
    """
    mesh.check_closed()
    if mesh.chart is None and atlas is None:
        raise ValueError("embedded meshes need the atlas of their surface")
    project = None
    if mesh.chart is None:
        def project(P):
            return _project_to_surface(atlas.surface, P)
    value = _flux_once(F, mesh, atlas)
    change = np.inf
    for _ in range(max_levels):
        mesh = mesh.subdivided(project)
        new = _flux_once(F, mesh, atlas)
        change = abs(new - value)
        # the rule converges at second order: extrapolate from the last two levels
        extrapolated = new + (new - value) / 3.0
        value = new
        if change <= rtol * abs(value) + atol:
            return extrapolated, change / 3.0
    return value, change


def _project_to_surface(surface, P):
    """Closest surface point among the chart-wise nearest-point maps."""
    best = P.copy()
    best_d = np.full(len(P), np.inf)
    for sc in surface.charts.values():
        u = sc.from_embedding(P)
        ok = sc.contains(u)
        if not ok.any():
            continue
        q = sc.embed(np.where(ok[:, None], u, u[ok][:1]))
        d = np.where(ok, np.linalg.norm(q - P, axis=1), np.inf)
        better = d < best_d
        best[better], best_d[better] = q[better], d[better]
    return best
