"""Embedded surfaces and their charts.

Every chart maps 2D coordinates ``u`` (batched, shape ``(m, 2)``) to points
of R^3 and supplies the induced metric and its Christoffel symbols in
closed form.  ``preference`` scores drive automatic chart switching:
a state leaves its chart when the score turns negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import FD_STEP, blend_profile

TWO_PI = 2.0 * np.pi


class SurfaceChart:
    dim = 2
    fd_step = FD_STEP
    periodic = ()

    def __init__(self, name):
        self.name = name

    # subclasses implement embed, embed_jacobian, from_embedding, metric, christoffel
    def contains(self, u):
        return np.all(np.isfinite(u), axis=-1)

    def preference(self, u):
        return np.ones(len(u))

    def pullback_metric(self, u):
        jac = self.embed_jacobian(u)
        return np.einsum("mai,maj->mij", jac, jac)

    def orientation(self, u):
        """Sign of the chart frame against the outward normal of the embedded surface.

        Uses ``outward(X)``; charts on closed convex-ish surfaces set it to the
        normalized position relative to ``center``.
        """
        jac = self.embed_jacobian(u)
        normal = np.cross(jac[:, :, 0], jac[:, :, 1])
        return np.sign(np.einsum("ma,ma->m", normal, self.outward(self.embed(u))))

    def outward(self, X):
        return X - getattr(self, "center", np.zeros(3))


class PlaneChart(SurfaceChart):
    """Euclidean plane, coordinates (x, y), embedded as z = 0."""

    def embed(self, u):
        return np.column_stack([u[:, 0], u[:, 1], np.zeros(len(u))])

    def embed_jacobian(self, u):
        jac = np.zeros((len(u), 3, 2))
        jac[:, 0, 0] = jac[:, 1, 1] = 1.0
        return jac

    def from_embedding(self, X):
        return X[:, :2].copy()

    def metric(self, u):
        return np.broadcast_to(np.eye(2), (len(u), 2, 2)).copy()

    def christoffel(self, u):
        return np.zeros((len(u), 2, 2, 2))

    def outward(self, X):
        return np.tile([0.0, 0.0, 1.0], (len(X), 1))


class CylinderChart(SurfaceChart):
    """Round cylinder of given radius, coordinates (z, azimuth)."""

    periodic = ((1, TWO_PI),)

    def __init__(self, name, radius, z_range=(-np.inf, np.inf), pref=-1.0):
        super().__init__(name)
        self.radius = radius
        self.z_range = z_range
        self._pref = pref

    def contains(self, u):
        ok = super().contains(u)
        return ok & (u[:, 0] > self.z_range[0]) & (u[:, 0] < self.z_range[1])

    def preference(self, u):
        return np.full(len(u), self._pref)

    def embed(self, u):
        R = self.radius
        return np.column_stack([R * np.cos(u[:, 1]), R * np.sin(u[:, 1]), u[:, 0]])

    def embed_jacobian(self, u):
        R = self.radius
        jac = np.zeros((len(u), 3, 2))
        jac[:, 2, 0] = 1.0
        jac[:, 0, 1] = -R * np.sin(u[:, 1])
        jac[:, 1, 1] = R * np.cos(u[:, 1])
        return jac

    def from_embedding(self, X):
        return np.column_stack([X[:, 2], np.arctan2(X[:, 1], X[:, 0])])

    def metric(self, u):
        h = np.zeros((len(u), 2, 2))
        h[:, 0, 0] = 1.0
        h[:, 1, 1] = self.radius**2
        return h

    def christoffel(self, u):
        return np.zeros((len(u), 2, 2, 2))

    def outward(self, X):
        return np.column_stack([X[:, 0], X[:, 1], np.zeros(len(X))])


class SphericalPolarChart(SurfaceChart):
    """Round sphere, polar angle and azimuth (theta, phi); singular at the poles."""

    periodic = ((1, TWO_PI),)

    def __init__(self, name, radius, center=(0.0, 0.0, 0.0), pole_margin=1e-3, pref=-1.0):
        super().__init__(name)
        self.radius = radius
        self.center = np.asarray(center, dtype=float)
        self.pole_margin = pole_margin
        self._pref = pref

    def contains(self, u):
        ok = super().contains(u)
        return ok & (u[:, 0] > self.pole_margin) & (u[:, 0] < np.pi - self.pole_margin)

    def preference(self, u):
        return np.full(len(u), self._pref)

    def embed(self, u):
        th, ph = u[:, 0], u[:, 1]
        r = self.radius
        return self.center + r * np.column_stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]
        )

    def embed_jacobian(self, u):
        th, ph = u[:, 0], u[:, 1]
        r = self.radius
        jac = np.empty((len(u), 3, 2))
        jac[:, :, 0] = r * np.column_stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
        jac[:, :, 1] = r * np.column_stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros(len(u))])
        return jac

    def from_embedding(self, X):
        d = X - self.center
        rho = np.hypot(d[:, 0], d[:, 1])
        return np.column_stack([np.arctan2(rho, d[:, 2]), np.arctan2(d[:, 1], d[:, 0])])

    def metric(self, u):
        r2 = self.radius**2
        h = np.zeros((len(u), 2, 2))
        h[:, 0, 0] = r2
        h[:, 1, 1] = r2 * np.sin(u[:, 0]) ** 2
        return h

    def christoffel(self, u):
        th = u[:, 0]
        gam = np.zeros((len(u), 2, 2, 2))
        gam[:, 0, 1, 1] = -np.sin(th) * np.cos(th)
        gam[:, 1, 0, 1] = gam[:, 1, 1, 0] = np.cos(th) / np.sin(th)
        return gam


class StereographicChart(SurfaceChart):
    """Stereographic coordinates on a sphere of radius r, projected from the far pole.

    ``hemisphere=+1`` is centred on the north pole (w = r(x, y)/(r + z));
    ``hemisphere=-1`` on the south pole with w = r(x, -y)/(r - z), which keeps
    both charts positively oriented.  ``w_max`` bounds the domain (e.g. where
    the surface stops being spherical) and ``switch_radius`` is the |w|/r
    value beyond which the chart asks to be left.
    """

    def __init__(self, name, radius, center=(0.0, 0.0, 0.0), hemisphere=1, w_max=np.inf, switch_radius=1.5):
        super().__init__(name)
        self.radius = radius
        self.center = np.asarray(center, dtype=float)
        self.hemisphere = 1 if hemisphere >= 0 else -1
        self.w_max = w_max
        self.switch_radius = switch_radius

    def contains(self, u):
        return super().contains(u) & (np.hypot(u[:, 0], u[:, 1]) < self.w_max)

    def preference(self, u):
        return self.switch_radius - np.hypot(u[:, 0], u[:, 1]) / self.radius

    def embed(self, u):
        r, s = self.radius, self.hemisphere
        w2 = u[:, 0] ** 2 + u[:, 1] ** 2
        D = r * r + w2
        X = np.column_stack([2 * r * r * u[:, 0], s * 2 * r * r * u[:, 1], s * r * (r * r - w2)]) / D[:, None]
        return X + self.center

    def embed_jacobian(self, u):
        r, s = self.radius, self.hemisphere
        w1, w2 = u[:, 0], u[:, 1]
        D = r * r + w1 * w1 + w2 * w2
        c = 2 * r * r / D
        q = 4 * r * r / D**2
        jac = np.empty((len(u), 3, 2))
        jac[:, 0, 0] = c - q * w1 * w1
        jac[:, 0, 1] = -q * w1 * w2
        jac[:, 1, 0] = -s * q * w1 * w2
        jac[:, 1, 1] = s * (c - q * w2 * w2)
        jac[:, 2, 0] = -s * r * q * w1
        jac[:, 2, 1] = -s * r * q * w2
        return jac

    def from_embedding(self, X):
        r, s = self.radius, self.hemisphere
        d = X - self.center
        # project back onto the sphere to absorb round-off
        d = r * d / np.linalg.norm(d, axis=1)[:, None]
        den = r + s * d[:, 2]
        return np.column_stack([r * d[:, 0] / den, s * r * d[:, 1] / den])

    def conformal_factor(self, u):
        r = self.radius
        D = r * r + u[:, 0] ** 2 + u[:, 1] ** 2
        return 4 * r**4 / D**2

    def metric(self, u):
        lam2 = self.conformal_factor(u)
        return lam2[:, None, None] * np.eye(2)

    def christoffel(self, u):
        r = self.radius
        D = r * r + u[:, 0] ** 2 + u[:, 1] ** 2
        dphi = -2 * u / D[:, None]
        eye = np.eye(2)
        # Gamma^k_ij = delta^k_i d_j phi + delta^k_j d_i phi - delta_ij d_k phi
        return (
            np.einsum("ki,mj->mkij", eye, dphi)
            + np.einsum("kj,mi->mkij", eye, dphi)
            - np.einsum("ij,mk->mkij", eye, dphi)
        )


# -- surfaces of revolution -----------------------------------------------------


def _piece_cylinder(radius, z0=0.0, slope=1.0, u0=0.0):
    """rho = radius, Z = z0 + slope (u - u0)."""

    def f(u):
        zero = np.zeros_like(u)
        return np.stack([zero + radius, zero, zero, z0 + slope * (u - u0), zero + slope, zero])

    return f


def _piece_latitude(r):
    """Sphere by latitude-arclength u: rho = r cos(u/r), Z = r sin(u/r)."""

    def f(u):
        a = u / r
        c, s = np.cos(a), np.sin(a)
        return np.stack([r * c, -s, -c / r, r * s, c, -s / r])

    return f


def _piece_colatitude(r):
    """Sphere by polar angle u: rho = r sin u, Z = r cos u."""

    def f(u):
        c, s = np.cos(u), np.sin(u)
        return np.stack([r * s, r * c, -r * s, r * c, -r * s, -r * c])

    return f


def _blend_pieces(lo, hi, band):
    """Profile equal to ``lo`` below the band and ``hi`` above, C^2 across it."""

    def f(u):
        a, b = lo(u), hi(u)
        S, dS, d2S = blend_profile(u, band, derivatives=True)
        diff = b - a
        out = np.empty_like(a)
        for k in (0, 3):
            out[k] = a[k] + S * diff[k]
            out[k + 1] = a[k + 1] + dS * diff[k] + S * diff[k + 1]
            out[k + 2] = a[k + 2] + d2S * diff[k] + 2 * dS * diff[k + 1] + S * diff[k + 2]
        return out

    return f


class RevolutionChart(SurfaceChart):
    """Surface of revolution (rho(u) cos th, rho(u) sin th, Z(u)) in coordinates (u, th).

    ``profile(u)`` returns the stacked array (rho, rho', rho'', Z, Z', Z'').
    The azimuth is left unwrapped; ``from_embedding`` returns its principal
    value.  ``rho_switch`` is the rho/r level below which the chart asks to
    be left (near an axis point).
    """

    periodic = ((1, TWO_PI),)

    def __init__(self, name, profile, u_range, scale, rho_switch=0.3, table_size=4001):
        super().__init__(name)
        self.profile = profile
        self.u_range = u_range
        self.scale = scale
        self.rho_switch = rho_switch
        lo, hi = u_range
        hi_f = hi if np.isfinite(hi) else lo + 100 * scale
        lo_f = lo if np.isfinite(lo) else hi_f - 100 * scale
        self._table_u = np.linspace(lo_f, hi_f, table_size)
        tab = profile(self._table_u)
        self._table_rz = np.column_stack([tab[0], tab[3]])

    def contains(self, u):
        ok = super().contains(u)
        ok &= (u[:, 0] > self.u_range[0]) & (u[:, 0] < self.u_range[1])
        rho = self.profile(np.where(ok, u[:, 0], self._table_u[0]))[0]
        return ok & (rho > 1e-3 * self.scale)

    def preference(self, u):
        return self.profile(u[:, 0])[0] / self.scale - self.rho_switch

    def embed(self, u):
        p = self.profile(u[:, 0])
        th = u[:, 1]
        return np.column_stack([p[0] * np.cos(th), p[0] * np.sin(th), p[3]])

    def embed_jacobian(self, u):
        p = self.profile(u[:, 0])
        th = u[:, 1]
        c, s = np.cos(th), np.sin(th)
        jac = np.empty((len(u), 3, 2))
        jac[:, 0, 0] = p[1] * c
        jac[:, 1, 0] = p[1] * s
        jac[:, 2, 0] = p[4]
        jac[:, 0, 1] = -p[0] * s
        jac[:, 1, 1] = p[0] * c
        jac[:, 2, 1] = 0.0
        return jac

    def from_embedding(self, X, newton_steps=8):
        R = np.hypot(X[:, 0], X[:, 1])
        Z = X[:, 2]
        d2 = (self._table_rz[None, :, 0] - R[:, None]) ** 2 + (self._table_rz[None, :, 1] - Z[:, None]) ** 2
        u = self._table_u[np.argmin(d2, axis=1)]
        lo, hi = self._table_u[0], self._table_u[-1]
        for _ in range(newton_steps):
            p = self.profile(u)
            er, ez = p[0] - R, p[3] - Z
            f = er * p[1] + ez * p[4]
            df = p[1] ** 2 + p[4] ** 2 + er * p[2] + ez * p[5]
            u = np.clip(u - f / df, lo, hi)
        return np.column_stack([u, np.arctan2(X[:, 1], X[:, 0])])

    def metric(self, u):
        p = self.profile(u[:, 0])
        h = np.zeros((len(u), 2, 2))
        h[:, 0, 0] = p[1] ** 2 + p[4] ** 2
        h[:, 1, 1] = p[0] ** 2
        return h

    def christoffel(self, u):
        p = self.profile(u[:, 0])
        A = p[1] ** 2 + p[4] ** 2
        dA = 2 * (p[1] * p[2] + p[4] * p[5])
        gam = np.zeros((len(u), 2, 2, 2))
        gam[:, 0, 0, 0] = dA / (2 * A)
        gam[:, 0, 1, 1] = -p[0] * p[1] / A
        gam[:, 1, 0, 1] = gam[:, 1, 1, 0] = p[1] / p[0]
        return gam

    def outward(self, X):
        return np.column_stack([X[:, 0], X[:, 1], np.zeros(len(X))])


@dataclass(eq=False)
class SurfacePatchwork:
    """A surface covered by named charts, with the blend band used to glue its pieces.

    ``blend`` is ``(center, half_width, degree)`` in the gluing coordinate;
    ``orientation`` is the sign of the area form relative to the charts'
    outward normals (+1 for all catalog surfaces).
    """

    name: str
    charts: dict
    blend: tuple | None = None
    orientation: int = 1
    periodic_coordinate: str | None = None
    meta: dict = field(default_factory=dict)

    def chart(self, name):
        return self.charts[name]

    @property
    def default_chart(self):
        return next(iter(self.charts))

    def embed(self, chart, u):
        return self.charts[chart].embed(np.atleast_2d(u))


def plane():
    return SurfacePatchwork("plane", {"cartesian": PlaneChart("cartesian")})


def round_sphere(radius=1.0, include_polar=True):
    """Sphere covered by north/south stereographic charts (plus polar for evaluation)."""
    charts = {
        "north": StereographicChart("north", radius, hemisphere=1),
        "south": StereographicChart("south", radius, hemisphere=-1),
    }
    if include_polar:
        charts["polar"] = SphericalPolarChart("polar", radius)
    return SurfacePatchwork("sphere", charts, meta={"radius": radius})


def ribbon_surface(radius=1.0, blend_half_width=None, depth=None):
    """Half-infinite cylinder (truncated at ``depth``) capped by a hemisphere.

    The main chart is (z, th) with z the height on the cylinder and the
    latitude arclength on the cap; the two profiles are blended over
    ``|z| <= blend_half_width``.  The cap top is covered by a stereographic
    chart.
    """
    r = radius
    eps = 0.1 * r if blend_half_width is None else blend_half_width
    depth = -6 * np.pi * r if depth is None else depth
    band = (0.0, eps)
    profile = _blend_pieces(_piece_cylinder(r), _piece_latitude(r), band)
    main = RevolutionChart("revolution", profile, (depth, 0.5 * np.pi * r), r)
    # cap is exactly spherical for latitude >= eps/r, i.e. angle from the pole <= pi/2 - eps/r
    w_max = r * np.tan(0.5 * (0.5 * np.pi - eps / r))
    pole = StereographicChart("pole", r, hemisphere=1, w_max=w_max, switch_radius=0.35)
    cyl = CylinderChart("cylinder", r, z_range=(depth, -eps))
    return SurfacePatchwork(
        "ribbon",
        {"revolution": main, "pole": pole, "cylinder": cyl},
        blend=(0.0, eps, 5),
        periodic_coordinate="revolution",
        meta={"radius": r, "depth": depth, "blend_half_width": eps},
    )


def cap_cylinder_surface(radius=1.0, blend_half_width=np.pi / 12, cylinder_length=None):
    """Spherical cap of radius r glued to a cylinder of radius r/2 below it.

    The main chart is (polar angle, azimuth) on the cap, continued on the
    cylinder by the arclength past the seam at polar angle 5pi/6; the
    profiles are blended over ``5pi/6 +- blend_half_width``.
    """
    r = radius
    eps = blend_half_width
    seam = 5 * np.pi / 6
    length = 4.0 * r if cylinder_length is None else cylinder_length
    z_seam = -0.5 * np.sqrt(3.0) * r
    band = (seam, eps)
    cyl_piece = _piece_cylinder(0.5 * r, z0=z_seam, slope=-r, u0=seam)
    profile = _blend_pieces(_piece_colatitude(r), cyl_piece, band)
    u_max = seam + length / r
    main = RevolutionChart("revolution", profile, (0.0, u_max), r)
    w_max = r * np.tan(0.5 * (seam - eps))
    pole = StereographicChart("pole", r, hemisphere=1, w_max=w_max, switch_radius=0.35)
    z_top = z_seam - r * eps
    cyl = CylinderChart("cylinder", 0.5 * r, z_range=(z_seam - length, z_top))
    return SurfacePatchwork(
        "cap_cylinder",
        {"revolution": main, "pole": pole, "cylinder": cyl},
        blend=(seam, eps, 5),
        periodic_coordinate="revolution",
        meta={"radius": r, "blend_half_width": eps, "cylinder_length": length},
    )
