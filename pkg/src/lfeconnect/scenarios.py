"""Scenario catalog: geometries, fields, marked events and reference values.

Reference values carry a provenance tag: ``"reference"`` for values quoted
from the worked examples, ``"derived"`` for closed-form oracles computed
here, ``"trivial"`` for identities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import EMField, EMPotential, zero_potential
from .geometry import Event, ProductSpacetime, blend_profile
from .surfaces import cap_cylinder_surface, plane, ribbon_surface, round_sphere
from .trajectory import CurveTrajectory


@dataclass
class Reference:
    value: float
    tag: str
    note: str = ""


@dataclass(eq=False)
class ScenarioSpec:
    name: str
    atlas: ProductSpacetime
    field: EMField
    x0: Event
    x1: Event
    parameters: dict
    reference_values: dict = field(default_factory=dict)
    angular: dict | None = None
    ratio: float = 1.0
    extra_events: dict = field(default_factory=dict)

    @property
    def potential(self):
        return self.field.potential if self.field.is_exact else None

    @property
    def exact(self):
        return self.field.is_exact

    def reference(self, key):
        return self.reference_values[key].value

    def event(self, key):
        if key == "x0":
            return self.x0
        if key == "x1":
            return self.x1
        return self.extra_events[key]


# -- Minkowski, uniform magnetic field ------------------------------------------


def larmor_state(B, ratio, u0, x0, s):
    """Closed-form proper-time solution in a uniform field F = B dx^dy (2+1 Minkowski).

    ``u0`` is the initial unit velocity (gamma, gamma*beta_x, gamma*beta_y).
    Returns positions and velocities of shape ``(len(s), 3)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u0 = np.asarray(u0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    om = ratio * B
    ux, uy = u0[1], u0[2]
    x = np.empty((len(s), 3))
    u = np.empty((len(s), 3))
    x[:, 0] = x0[0] + u0[0] * s
    u[:, 0] = u0[0]
    if om == 0:
        x[:, 1] = x0[1] + ux * s
        x[:, 2] = x0[2] + uy * s
        u[:, 1], u[:, 2] = ux, uy
        return x, u
    c, sn = np.cos(om * s), np.sin(om * s)
    x[:, 1] = x0[1] + (ux * sn + uy * (c - 1)) / om
    x[:, 2] = x0[2] + (ux * (1 - c) + uy * sn) / om
    u[:, 1] = ux * c - uy * sn
    u[:, 2] = ux * sn + uy * c
    return x, u


def minkowski_uniform(B=1.0, dim=3, ratio=1.0, speed=0.6, t1=3.0):
    """Flat 2+1 spacetime with omega = B x dy, so F = B dx^dy.

    The marked target is where the Larmor orbit starting at the origin with
    speed ``speed`` along +x (for the reference ``ratio``) sits at time ``t1``.
    """
    if dim != 3:
        raise ValueError("only the 2+1 dimensional case is provided")
    atlas = ProductSpacetime(plane())

    def comps(x):
        w = np.zeros_like(x)
        w[:, 2] = B * x[:, 1]
        return w

    def ders(x):
        d = np.zeros((len(x), 3, 3))
        d[:, 1, 2] = B
        return d

    pot = EMPotential({"cartesian": comps}, {"cartesian": ders}, support="everywhere" if B else "empty")
    F = EMField.from_potential(pot)
    gamma = 1 / np.sqrt(1 - speed**2)
    u0 = np.array([gamma, gamma * speed, 0.0])
    x_end, _ = larmor_state(B, ratio, u0, np.zeros(3), t1 / gamma)
    om = ratio * B
    refs = {
        "larmor_radius": Reference(gamma * speed / abs(om) if om else np.inf, "derived", "gamma*beta/|(q/m)B|"),
        "gyration_period_proper": Reference(2 * np.pi / abs(om) if om else np.inf, "derived"),
        "gyration_period_coordinate": Reference(2 * np.pi * gamma / abs(om) if om else np.inf, "derived"),
    }
    return ScenarioSpec(
        "minkowski_uniform",
        atlas,
        F,
        Event(np.zeros(3), "cartesian"),
        Event(x_end[0], "cartesian"),
        {"B": B, "speed": speed, "t1": t1, "u0": u0},
        refs,
        angular=None,
        ratio=ratio,
    )


# -- ribbon on a capped cylinder ------------------------------------------------------


def ribbon_profile(z, r, derivatives=False):
    """mu(z): 1 for z <= -2 pi r, 0 for z >= -pi r, quintic in between (decreasing)."""
    band = (-1.5 * np.pi * r, 0.5 * np.pi * r)
    if not derivatives:
        return 1.0 - blend_profile(z, band)
    s, ds, d2s = blend_profile(z, band, derivatives=True)
    return 1.0 - s, -ds, -d2s


def ribbon_scenario(r=1.0, B=2.0, ratio=1.0, blend_half_width=None, depth=None):
    """Capped cylinder with omega = B r mu(z) d(theta), supported on -2 pi r < z < -pi r below the cap.

    Events: x0 = (0, p) and x1 = (2 pi r, p) with p on the circle z = -3 pi r.
    """
    surface = ribbon_surface(r, blend_half_width, depth)
    atlas = ProductSpacetime(surface)

    def comps(x):
        w = np.zeros_like(x)
        w[:, 2] = B * r * ribbon_profile(x[:, 1], r)
        return w

    def ders(x):
        d = np.zeros((len(x), 3, 3))
        d[:, 1, 2] = B * r * ribbon_profile(x[:, 1], r, derivatives=True)[1]
        return d

    zero = zero_potential(["pole"], 3)
    pot = EMPotential(
        {"revolution": comps, "cylinder": comps, "pole": zero.components["pole"]},
        {"revolution": ders, "cylinder": ders, "pole": zero.derivatives["pole"]},
        support="ribbon -2 pi r < z < -pi r",
    )
    F = EMField.from_potential(pot)
    zp = -3 * np.pi * r
    refs = {
        "em_term_sigma": Reference(2 * np.pi * ratio * B * r, "reference", "EM term of the winding lightlike geodesics"),
        "timelike_action_sup": Reference(2 * np.pi * r, "reference", "bound for winding-0 timelike curves"),
        "class_count": Reference(3, "reference"),
        "supercritical": Reference(float(abs(ratio * B) > 1), "reference", "|q/m B| > 1 regime flag"),
    }
    return ScenarioSpec(
        "ribbon",
        atlas,
        F,
        Event(np.array([0.0, zp, 0.0]), "revolution"),
        Event(np.array([2 * np.pi * r, zp, 0.0]), "revolution"),
        {"r": r, "B": B, "eps_z": surface.meta["blend_half_width"], "depth": surface.meta["depth"]},
        refs,
        angular={"min_radius": 0.05 * r},
        ratio=ratio,
    )


# -- spherical cap glued to a thinner cylinder ------------------------------------------


def cap_field_profile(theta, B, eps):
    """B for theta <= pi/2, decreasing to 0 at pi/2 + eps (quintic), 0 beyond."""
    band = (0.5 * np.pi + 0.5 * eps, 0.5 * eps)
    return B * (1.0 - blend_profile(theta, band))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def cap_flux_potential(theta, r, B, eps):
    """A(theta) = r^2 * integral_0^theta Bfield(s) sin(s) ds."""
    theta = np.asarray(theta, dtype=float)
    base = B * r * r * (1.0 - np.cos(np.minimum(theta, 0.5 * np.pi)))
    lo = 0.5 * np.pi
    hi = np.clip(theta, lo, lo + eps)
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[..., None] + half[..., None] * _GL_X
    band = half * np.sum(_GL_W * cap_field_profile(nodes, B, eps) * np.sin(nodes), axis=-1)
    return base + r * r * band


def cap_circle(alpha, r=1.0):
    """Circle through q = (r, 0, 0) in the plane tilted by alpha about the y axis.

    Returns ``(center, radius, e1, e2)`` with c(l) = center + radius (cos 2 pi l e1 + sin 2 pi l e2).
    """
    n = np.array([np.sin(alpha), 0.0, np.cos(alpha)])
    center = r * np.sin(alpha) * n
    e1 = np.array([np.cos(alpha), 0.0, -np.sin(alpha)])
    e2 = np.array([0.0, 1.0, 0.0])
    return center, r * np.cos(alpha), e1, e2


def cap_cylinder_scenario(r=1.0, B=2.0, ratio=1.0, blend_half_width=np.pi / 12, field_band=np.pi / 12):
    """Spherical cap of radius r glued to a cylinder of radius r/2; F = Bfield * area form.

    Events x0 = (0, q), x1 = (2 pi r, q) with q = (r, 0, 0) on the equator.
    ``B`` takes the sign of ``ratio`` so that (q/m) B is positive.
    """
    if ratio != 0 and np.sign(B) != np.sign(ratio):
        B = np.sign(ratio) * abs(B)
    surface = cap_cylinder_surface(r, blend_half_width)
    atlas = ProductSpacetime(surface)
    eps = field_band
    A_total = float(cap_flux_potential(0.5 * np.pi + eps, r, B, eps))

    def rev(x):
        w = np.zeros_like(x)
        w[:, 2] = cap_flux_potential(x[:, 1], r, B, eps)
        return w

    def rev_d(x):
        d = np.zeros((len(x), 3, 3))
        d[:, 1, 2] = r * r * cap_field_profile(x[:, 1], B, eps) * np.sin(x[:, 1])
        return d

    def cyl(x):
        w = np.zeros_like(x)
        w[:, 2] = A_total
        return w

    def pole(x):
        w1, w2 = x[:, 1], x[:, 2]
        s = w1 * w1 + w2 * w2
        inner = s <= r * r
        theta = 2 * np.arctan(np.sqrt(s) / r)
        k = np.where(inner, 2 * B * r * r / (r * r + s), cap_flux_potential(theta, r, B, eps) / np.where(inner, 1.0, s))
        w = np.zeros_like(x)
        w[:, 1] = -k * w2
        w[:, 2] = k * w1
        return w

    pot = EMPotential(
        {"revolution": rev, "pole": pole, "cylinder": cyl},
        {"revolution": rev_d, "cylinder": lambda x: np.zeros((len(x), 3, 3))},
        support="cap up to polar angle pi/2 + eps",
    )
    F = EMField.from_potential(pot)
    refs = {
        "sigma0_action": Reference(2 * np.pi * r * r * ratio * B, "reference", "equatorial lightlike geodesic"),
        "static_action": Reference(2 * np.pi * r, "trivial", "alpha = pi/2"),
        "sigma0_conjugate_arc": Reference(np.pi * r, "reference", "antipodal point on the equator"),
    }
    return ScenarioSpec(
        "cap_cylinder",
        atlas,
        F,
        Event(np.array([0.0, 0.5 * np.pi, 0.0]), "revolution"),
        Event(np.array([2 * np.pi * r, 0.5 * np.pi, 0.0]), "revolution"),
        {"r": r, "B": B, "eps_theta": blend_half_width, "field_band": eps},
        refs,
        angular={"min_radius": 0.05 * r},
        ratio=ratio,
    )


def cap_circle_action(alpha, r, ratio, B):
    """Closed-form action of the constant-speed circle worldline at tilt alpha."""
    return 2 * np.pi * r * r * ratio * B + 2 * np.pi * r * (1 - ratio * B * r) * np.sin(alpha)


def cap_circle_trajectory(spec: ScenarioSpec, alpha, chart="pole"):
    """Worldline t = 2 pi r l over the circle c_alpha, l in [0, 1], in one surface chart."""
    r = spec.parameters["r"]
    center, rho, e1, e2 = cap_circle(alpha, r)
    sc = spec.atlas.surface.charts[chart]

    def X(lam):
        a = 2 * np.pi * lam
        return center + rho * (np.cos(a)[:, None] * e1 + np.sin(a)[:, None] * e2)

    def dX(lam):
        a = 2 * np.pi * lam
        return 2 * np.pi * rho * (-np.sin(a)[:, None] * e1 + np.cos(a)[:, None] * e2)

    def position(lam):
        return np.column_stack([2 * np.pi * r * lam, sc.from_embedding(X(lam))])

    def velocity(lam):
        u = sc.from_embedding(X(lam))
        jac = sc.embed_jacobian(u)
        h = np.einsum("mai,maj->mij", jac, jac)
        du = np.linalg.solve(h, np.einsum("mai,ma->mi", jac, dX(lam))[..., None])[..., 0]
        return np.column_stack([np.full(len(lam), 2 * np.pi * r), du])

    return CurveTrajectory(
        spec.atlas, chart, position, velocity, (0.0, 1.0), breakpoints=np.linspace(0, 1, 33), meta={"alpha": alpha}
    )


# -- round sphere with a non-exact field ------------------------------------------------


def sphere_scenario(r=1.0, B=1.0, ratio=1.0, t1_factor=1.2):
    """R x S^2 with F = B times the area form (not exact: total flux 4 pi r^2 B).

    Marked events: p = (r, 0, 0) at t = 0 and the antipode -p at t = t1_factor * pi r.
    """
    if B == 0:
        raise ValueError("the sphere scenario needs B != 0")
    surface = round_sphere(r)
    atlas = ProductSpacetime(surface)

    def stereo(name):
        chart = surface.charts[name]

        def f(x):
            F = np.zeros((len(x), 3, 3))
            lam2 = chart.conformal_factor(x[:, 1:])
            F[:, 1, 2] = B * lam2
            F[:, 2, 1] = -B * lam2
            return F

        return f

    def polar(x):
        F = np.zeros((len(x), 3, 3))
        F[:, 1, 2] = B * r * r * np.sin(x[:, 1])
        F[:, 2, 1] = -F[:, 1, 2]
        return F

    F = EMField({"north": stereo("north"), "south": stereo("south"), "polar": polar}, origin="direct")
    t1 = t1_factor * np.pi * r
    north = surface.charts["north"]
    p = north.from_embedding(np.array([[r, 0.0, 0.0]]))[0]
    mp = north.from_embedding(np.array([[-r, 0.0, 0.0]]))[0]
    refs = {
        "total_flux": Reference(4 * np.pi * r * r * B, "derived", "B times sphere area"),
        "antipodal_time": Reference(t1, "reference", "target time beyond pi r"),
        "geodesic_antipodal_time": Reference(np.pi * r, "trivial", "great circle at light speed"),
    }
    return ScenarioSpec(
        "sphere",
        atlas,
        F,
        Event(np.array([0.0, *p]), "north"),
        Event(np.array([t1, *mp]), "north"),
        {"r": r, "B": B, "t1": t1},
        refs,
        angular={"min_radius": 0.05 * r},
        ratio=ratio,
        extra_events={"antipodal": Event(np.array([t1, *mp]), "north")},
    )


def sphere_circle_rate(ratio, B, speed):
    """Angular velocity of circular projections: |(q/m) B| sqrt(1 - |c'|^2)."""
    return abs(ratio * B) * np.sqrt(1 - speed**2)


# -- witnesses and registry -----------------------------------------------------------


def witness_curve(spec: ScenarioSpec, target: Event | None = None):
    """Explicit causal curve from x0 to the target, parametrized by t (coordinate line or great circle)."""
    target = spec.x1 if target is None else target
    atlas = spec.atlas
    x0 = spec.x0.coords
    x1 = atlas.event_in(target, spec.x0.chart)
    if spec.name != "sphere":
        d = atlas.charts[spec.x0.chart].wrap_difference(x1 - x0)

        def pos(lam):
            return x0 + lam[:, None] * d

        def vel(lam):
            return np.tile(d, (len(lam), 1))

        return CurveTrajectory(atlas, spec.x0.chart, pos, vel, (0.0, 1.0))
    # sphere: move along the great circle through the equator in the polar chart
    polar = atlas.surface.charts["polar"]
    P0 = atlas.embed(spec.x0.chart, x0[None, :])[0]
    P1 = atlas.embed(target.chart, target.coords[None, :])[0]
    u0 = polar.from_embedding(P0[None, :])[0]
    u1 = polar.from_embedding(P1[None, :])[0]
    du = u1 - u0
    du[1] = (du[1] + np.pi) % (2 * np.pi) - np.pi
    if abs(abs(du[1]) - np.pi) < 1e-12:
        du[1] = np.pi
    t0, t1 = x0[0], target.coords[0]

    def pos(lam):
        return np.column_stack([t0 + lam * (t1 - t0), u0 + lam[:, None] * du])

    def vel(lam):
        return np.tile(np.concatenate([[t1 - t0], du]), (len(lam), 1))

    return CurveTrajectory(atlas, "polar", pos, vel, (0.0, 1.0))


CATALOG = {
    "minkowski_uniform": minkowski_uniform,
    "ribbon": ribbon_scenario,
    "cap_cylinder": cap_cylinder_scenario,
    "sphere": sphere_scenario,
}


def build(name, **params):
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(CATALOG)}") from None
    return factory(**params)
