"""Reference checks for the scenario catalog.

Each check function returns a list of ``Check`` records (measured value,
expected value, tolerance, verdict).  ``verify_scenario`` bundles the
checks belonging to one catalog scenario; the command line ``verify``
command and the acceptance suite both run these.  Reports contain no
timings so that repeated runs are byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connect import (
    ConnectionProblem,
    ConnectionResult,
    GridSpec,
    endpoint_map,
    homotopy_tag,
    jacobi_first_conjugate,
    maximizer_audit,
    multistart,
    shoot,
    shoot_direct,
)
from .dynamics import (
    WorldlineState,
    action_I,
    integrate_geodesic,
    integrate_lfe,
    lfe_residual,
)
from .fields import chart_box_mesh, flux_integral, icosphere
from .geometry import Event, TangentVector
from .kaluza_klein import (
    KKBundle,
    KKState,
    cone_direction,
    integrate_kk_geodesic,
    kk_diagnostics,
    lightlike_lift,
    project,
)
from .scenarios import (
    build,
    cap_circle_action,
    cap_circle_trajectory,
    larmor_state,
    sphere_circle_rate,
)
from .trajectory import CurveTrajectory, reparametrize

# Smallest endpoint residual seen over the antipodal sphere sweep (eight
# ratios, 30 x 10 starts, seed 0) when it was first run; later runs must not
# fall noticeably below it.
SPHERE_RESIDUAL_FLOOR = 0.4598
SPHERE_FLOOR_RTOL = 1e-2


@dataclass
class Check:
    name: str
    measured: object
    expected: object
    tolerance: object
    passed: bool
    note: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)

    def as_dict(self):
        return {
            "name": self.name,
            "measured": _plain(self.measured),
            "expected": _plain(self.expected),
            "tolerance": _plain(self.tolerance),
            "passed": bool(self.passed),
            "note": self.note,
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _abs_check(name, measured, expected, tol, note=""):
    err = abs(measured - expected)
    return Check(name, measured, expected, tol, bool(err < tol), note)


# -- Larmor oracle ------------------------------------------------------------------


def larmor_run(gyrations=1.0, tol=1e-10, B=1.0, ratio=1.0, speed=0.6):
    """Integrate the unit-speed Larmor orbit; returns (trajectory, u0, proper period)."""
    spec = build("minkowski_uniform", B=B, ratio=ratio, speed=speed)
    gamma = 1 / np.sqrt(1 - speed**2)
    u0 = np.array([gamma, gamma * speed, 0.0])
    period = 2 * np.pi / abs(ratio * B)
    init = WorldlineState(Event(np.zeros(3), "cartesian"), TangentVector(None, u0))
    traj = integrate_lfe(spec.atlas, spec.field, ratio, init, gyrations * period, tol=tol)
    return spec, traj, u0


def larmor_position_check(gyrations=1.0, tol=1e-10, limit=1e-6):
    spec, traj, u0 = larmor_run(gyrations, tol)
    s = traj.sample_params(4)
    _, x, _ = traj.evaluate(s)
    x_exact, _ = larmor_state(1.0, 1.0, u0, np.zeros(3), s)
    err = float(np.abs(x - x_exact).max())
    return [Check("larmor_sup_position_error", err, 0.0, limit, err < limit, f"{gyrations:g} gyration(s)")]


def speed_conservation_check(gyrations=100.0, tol=1e-10, limit=1e-7):
    _, traj, _ = larmor_run(gyrations, tol)
    s = traj.sample_params(2)
    drift = float(np.abs(np.sqrt(traj.norms(s)) - 1.0).max())
    return [Check("speed_drift", drift, 0.0, limit, drift < limit, f"{gyrations:g} gyrations")]


# -- Kaluza-Klein projection ------------------------------------------------------------


def kk_projection_check(ratio=1.0, speed=0.6, t1=2 * np.pi / 0.8 * 1.25, tol=1e-10):
    """Lightlike geodesic of the Larmor bundle with nu > 0 and its projection."""
    spec = build("minkowski_uniform", ratio=ratio, speed=speed)
    bundle = KKBundle(spec.atlas, spec.potential, ratio)
    xi = np.array([[(1 - np.sqrt(1 - speed**2)) / speed, 0.0]])
    V, dy, nu = cone_direction(bundle, "cartesian", np.zeros(3), xi)
    init = KKState(Event(np.zeros(3), "cartesian"), TangentVector(None, V[0]), 0.0, float(dy[0]))
    gamma = integrate_kk_geodesic(bundle, init, t1, tol=tol)
    diag = kk_diagnostics(bundle, gamma, refine=4)
    nu0 = float(nu[0])
    drift = float(np.abs(diag["nu"] - nu0).max())
    null = float(np.abs(diag["norm"]).max())
    law = float(np.abs(diag["speed"] - diag["nu"] / bundle.a).max())
    sigma = reparametrize(project(bundle, gamma), "proper_time")
    res = lfe_residual(spec.atlas, spec.field, ratio, sigma)
    return [
        Check("kk_nu_positive", nu0, "> 0", None, nu0 > 0),
        Check("kk_nu_drift", drift, 0.0, 1e-8, drift < 1e-8),
        Check("kk_null_norm", null, 0.0, 1e-8, null < 1e-8),
        Check("kk_speed_law", law, 0.0, 1e-8, law < 1e-8, "|x'| - nu/a"),
        Check("kk_projection_lfe_residual", res, 0.0, 1e-6, res < 1e-6),
    ]


# -- cross-method equivalence -------------------------------------------------------------


def cross_method_check(spec=None, limit=1e-5, samples=401):
    spec = build("minkowski_uniform") if spec is None else spec
    direct = shoot(ConnectionProblem(spec, method="direct"))
    kk = shoot(ConnectionProblem(spec, method="kk"))
    a = reparametrize(direct.trajectory, "proper_time")
    b = reparametrize(kk.trajectory, "proper_time")
    s_end = min(a.span[1], b.span[1])
    s = np.linspace(0.0, s_end, samples)
    _, xa, _ = a.evaluate(s)
    _, xb, _ = b.evaluate(s)
    sup = float(np.abs(xa - xb).max())
    length_gap = abs(a.span[1] - b.span[1])
    endpoint_tol = ConnectionProblem(spec).endpoint_tol
    bound = 10 * (endpoint_tol + 1e-10)
    return [
        Check("cross_method_sup_norm", sup, 0.0, limit, sup < limit),
        Check("cross_method_invariant_bound", sup, 0.0, bound, sup < bound, "10 (endpoint_tol + tol)"),
        Check("cross_method_proper_time_gap", length_gap, 0.0, limit, length_gap < limit),
        Check("direct_lfe_residual", direct.lfe_residual, 0.0, 1e-6, direct.lfe_residual < 1e-6),
        Check("direct_endpoint_residual", direct.endpoint_residual, 0.0, endpoint_tol, direct.endpoint_residual < endpoint_tol),
    ]


def larmor_velocity_check():
    """The direct solve recovers the closed-form initial velocity."""
    spec = build("minkowski_uniform")
    res = shoot_direct(ConnectionProblem(spec))
    speed = spec.parameters["speed"]
    err = float(np.abs(res.initial_velocity - np.array([1.0, speed, 0.0])).max())
    return [Check("larmor_initial_velocity", err, 0.0, 1e-6, err < 1e-6)]


# -- Fermat affine relation ------------------------------------------------------------------


def random_ribbon_curves(spec, count, seed=0):
    """Causal curves from x0 to x1 in the revolution chart of the ribbon scenario.

    Most are closed spatial loops (winding 0) scaled to a random fraction of
    the light-speed budget; every tenth is one of the two lightlike circles.
    """
    rng = np.random.default_rng(seed)
    atlas = spec.atlas
    chart = atlas.charts["revolution"]
    x0 = spec.x0.coords
    T = float(spec.x1.coords[0] - x0[0])
    r = spec.parameters["r"]
    lam_probe = np.linspace(0, 1, 2001)
    curves = []
    for i in range(count):
        if i % 10 == 9:
            wind = 1 if (i // 10) % 2 == 0 else -1
            amps = np.zeros((2, 3))
            scale = 1.0
        else:
            wind = 0
            amps = rng.normal(size=(2, 3))
            scale = None
        ks = np.arange(1, 4)

        def make(amps, wind, scale):
            def pos(lam):
                s = np.sin(np.pi * np.outer(lam, ks))
                u = x0[1] + scale * s @ amps[0]
                th = x0[2] + 2 * np.pi * wind * lam + scale * s @ amps[1]
                return np.column_stack([x0[0] + T * lam, u, th])

            def vel(lam):
                c = np.pi * ks * np.cos(np.pi * np.outer(lam, ks))
                du = scale * c @ amps[0]
                dth = 2 * np.pi * wind + scale * c @ amps[1]
                return np.column_stack([np.full(len(lam), T), du, dth])

            return pos, vel

        if scale is None:
            pos, vel = make(amps, 0, 1.0)
            x, v = pos(lam_probe), vel(lam_probe)
            h = -chart.metric(x)[:, 1:, 1:]
            speed = np.sqrt(np.einsum("mi,mij,mj->m", v[:, 1:], h, v[:, 1:])).max()
            scale = rng.uniform(0.2, 0.98) * T / speed
        pos, vel = make(amps, wind, scale)
        curves.append(CurveTrajectory(atlas, "revolution", pos, vel, (0.0, 1.0),
                                      breakpoints=np.linspace(0, 1, 17), meta={"winding": wind, "r": r}))
    return curves


def fermat_check(count=100, seed=0, tol=1e-9):
    spec = build("ribbon")
    bundle = KKBundle(spec.atlas, spec.potential, spec.ratio)
    worst = 0.0
    failures = 0
    for sigma in random_ribbon_curves(spec, count, seed):
        lift = lightlike_lift(bundle, sigma, 0.0)
        act = action_I(spec.atlas, spec.potential, spec.ratio, sigma)
        predicted = 0.0 - bundle.sign * act.value / bundle.a
        gap = abs(lift.arrival - predicted)
        allowed = tol + lift.error + act.error / bundle.a
        worst = max(worst, gap)
        failures += gap >= allowed
    return [Check("fermat_affine_relation", worst, 0.0, tol, failures == 0,
                  f"{count} curves; per-curve bound 1e-9 plus quadrature error estimates; {failures} failures")]


# -- cap / cylinder closed form ----------------------------------------------------------------


def cap_closed_form_check(alphas_deg=(10, 30, 60, 90), rtol=1e-6, r=1.0, charge_field=2.0):
    spec = build("cap_cylinder", r=r, B=charge_field, ratio=1.0)
    checks = []
    values = {}
    for deg in (0,) + tuple(alphas_deg):
        alpha = np.deg2rad(deg)
        traj = cap_circle_trajectory(spec, alpha)
        val = action_I(spec.atlas, spec.potential, spec.ratio, traj, tol=1e-8).value
        ref = cap_circle_action(alpha, r, spec.ratio, charge_field)
        values[deg] = val
        if deg == 0 and 0 not in alphas_deg:
            continue
        rel = abs(val - ref) / abs(ref)
        checks.append(Check(f"cap_action_alpha_{deg}", val, ref, rtol, rel < rtol, "relative"))
    best = max(values, key=values.get)
    checks.append(Check("cap_argmax_is_equator", best, 0, None, best == 0, "argmax over the alpha grid plus alpha = 0"))
    return checks


def cap_equator_conjugate_check(rtol=1e-4, r=1.0):
    spec = build("cap_cylinder", r=r)
    init = WorldlineState(Event(spec.x0.coords.copy(), "revolution"), TangentVector(None, np.array([1.0, 0.0, 1.0 / r])))
    geo = integrate_geodesic(spec.atlas, init, 2 * np.pi * r)
    lam = jacobi_first_conjugate(geo)
    ok = lam is not None and abs(lam - np.pi * r) / (np.pi * r) < rtol
    return [Check("cap_equator_conjugate_param", lam, np.pi * r, rtol, ok, "relative")]


def cap_audit_check(alphas_deg=(10, 30, 45, 60, 80, 90), r=1.0):
    """The equator (alpha = 0) beats every probe circle worldline in action."""
    spec = build("cap_cylinder", r=r)
    problem = ConnectionProblem(spec)
    init = WorldlineState(Event(spec.x0.coords.copy(), "revolution"), TangentVector(None, np.array([1.0, 0.0, 1.0 / r])))
    geo = integrate_geodesic(spec.atlas, init, 2 * np.pi * r, mode="temporal")
    eq = ConnectionResult(True, "direct", np.array([0.0, 1.0]), 0.0, 0, trajectory=geo, lightlike_geodesic=True,
                          action=action_I(spec.atlas, spec.potential, spec.ratio, geo, tol=1e-8))
    eq.homotopy_tag = homotopy_tag(geo, spec)
    probes = [cap_circle_trajectory(spec, np.deg2rad(d)) for d in alphas_deg]
    rep = maximizer_audit(problem, eq, probes=probes, same_class=False)
    probe = rep["checks"][-1]
    return [Check("cap_equator_probe_audit", probe["max_excess"], "<= 0", 0.0, probe["passed"],
                  f"compared against {probe['compared']} circle worldlines")]


def zero_ratio_check(r=1.0):
    spec = build("cap_cylinder", r=r)
    res = shoot_direct(ConnectionProblem(spec, ratio=0.0))
    init = WorldlineState(Event(spec.x0.coords.copy(), spec.x0.chart), TangentVector(None, res.initial_velocity))
    geo = integrate_geodesic(spec.atlas, init, spec.x1.coords[0] - spec.x0.coords[0], mode="temporal")
    s = np.linspace(*res.trajectory.span, 201)
    _, xa, _ = res.trajectory.evaluate(s)
    _, xb, _ = geo.evaluate(s)
    gap = float(np.abs(xa - xb).max())
    act = res.action.value
    return [
        _abs_check("zero_ratio_static_action", act, 2 * np.pi * r, 1e-6),
        Check("zero_ratio_matches_geodesic", gap, 0.0, 1e-8, gap < 1e-8),
        Check("zero_ratio_static_velocity", float(np.abs(res.initial_velocity[1:]).max()), 0.0, 1e-8,
              float(np.abs(res.initial_velocity[1:]).max()) < 1e-8),
    ]


# -- ribbon class structure ---------------------------------------------------------------------


def ribbon_class_check(grid=20, r=1.0, charge_field=2.0, seed=None):
    spec = build("ribbon", r=r, B=charge_field)
    problem = ConnectionProblem(spec)
    results = multistart(problem, GridSpec(grid, grid, seed=seed))
    tags = sorted({res.homotopy_tag for res in results if res.homotopy_tag is not None})
    checks = [Check("ribbon_winding_tags", tags, [-1, 0, 1], None, tags == [-1, 0, 1])]
    em = 2 * np.pi * spec.ratio * charge_field * r
    for w in (-1, 1):
        acts = [res.action.value for res in results if res.homotopy_tag == w and res.lightlike_geodesic]
        if not acts:
            checks.append(Check(f"ribbon_action_winding_{w:+d}", None, w * em, 1e-6, False, "no lightlike result"))
            continue
        worst = max(acts, key=lambda a: abs(a - w * em))
        checks.append(_abs_check(f"ribbon_action_winding_{w:+d}", worst, w * em, 1e-6))
    zero = [res.action.value for res in results if res.homotopy_tag == 0]
    top = max(zero) if zero else None
    checks.append(Check("ribbon_winding0_action_bound", top, 2 * np.pi * r, 1e-6,
                        bool(zero) and top <= 2 * np.pi * r + 1e-6, f"{len(zero)} winding-0 result(s)"))
    for res in results:
        if res.lightlike_geodesic and res.homotopy_tag in (-1, 1):
            rep = maximizer_audit(problem, res)
            checks.append(Check(f"ribbon_no_conjugate_winding_{res.homotopy_tag:+d}", rep["checks"][0]["value"], None,
                                None, rep["passed"]))
    return checks


def ribbon_flux_check():
    spec = build("ribbon")
    mesh = chart_box_mesh(np.array([0.0, -1.5 * np.pi, 1.0]), np.array([0.5, 0.6 * np.pi, 0.8]), "revolution")
    val, err = flux_integral(spec.field, mesh, spec.atlas)
    return [Check("ribbon_closed_box_flux", val, 0.0, 1e-8, abs(val) < 1e-8, "exact field")]


# -- sphere ----------------------------------------------------------------------------------------


def sphere_flux_check(r=1.0, B=1.0):
    spec = build("sphere", r=r, B=B)
    mesh = icosphere(r, level=1)
    val, err = flux_integral(spec.field, mesh, spec.atlas, rtol=1e-6)
    ref = 4 * np.pi * r * r * B
    return [Check("sphere_total_flux", val, ref, 1e-5, abs(val - ref) < 1e-5 * abs(ref), "relative")]


def sphere_conjugate_check(r=1.0, rtol=1e-4):
    spec = build("sphere", r=r)
    init = WorldlineState(Event(np.array([0.0, 0.5 * np.pi, 0.0]), "polar"), TangentVector(None, np.array([1.0, 0.0, 1.0 / r])))
    geo = integrate_geodesic(spec.atlas, init, 1.8 * np.pi * r)
    lam = jacobi_first_conjugate(geo)
    ok = lam is not None and abs(lam - np.pi * r) / (np.pi * r) < rtol
    flat = build("minkowski_uniform")
    finit = WorldlineState(Event(np.zeros(3), "cartesian"), TangentVector(None, np.array([1.25, 0.75, 0.0])))
    none = jacobi_first_conjugate(integrate_geodesic(flat.atlas, finit, 10.0))
    flat_null = WorldlineState(Event(np.zeros(3), "cartesian"), TangentVector(None, np.array([1.0, 0.0, 1.0])))
    none2 = jacobi_first_conjugate(integrate_geodesic(flat.atlas, flat_null, 10.0))
    return [
        Check("sphere_equator_conjugate_param", lam, np.pi * r, rtol, ok, "relative, sphere arc length"),
        Check("flat_geodesics_no_conjugate", [none, none2], [None, None], None, none is None and none2 is None),
    ]


def sphere_nonconnect_check(ratios=(-5, -2, -1, -0.5, 0.5, 1, 2, 5), grid=(30, 10), seed=0, floor=0.05):
    spec = build("sphere")
    target = spec.event("antipodal")
    n_conv = 0
    best = np.inf
    per_ratio = []
    for q in ratios:
        problem = ConnectionProblem(spec, x1=target, ratio=q)
        good, bad = multistart(problem, GridSpec(grid[0], grid[1], seed=seed), keep_failed=True)
        n_conv += len(good)
        low = min([b.endpoint_residual for b in bad] + [g.endpoint_residual for g in good])
        per_ratio.append(low)
        best = min(best, low)
    checks = [
        Check("sphere_antipodal_converged_count", n_conv, 0, None, n_conv == 0, f"{len(ratios)} ratios"),
        Check("sphere_antipodal_residual_floor", best, f"> {floor}", floor, best > floor, "chart units"),
    ]
    if tuple(grid) == (30, 10) and tuple(ratios) == (-5, -2, -1, -0.5, 0.5, 1, 2, 5) and seed == 0:
        ok = best >= SPHERE_RESIDUAL_FLOOR * (1 - SPHERE_FLOOR_RTOL)
        checks.append(Check("sphere_antipodal_floor_regression", best, SPHERE_RESIDUAL_FLOOR, SPHERE_FLOOR_RTOL, ok,
                            "frozen from the first full sweep"))
    return checks, per_ratio


def circle_metrics(traj, radius=1.0, samples=801):
    """Spatial speed statistics and turning rate of a projected circle on the sphere.

    The turning rate is measured against a parallel transported frame:
    geodesic curvature times speed, which for a circle of angular radius
    rho equals the rotation rate about its axis times cos(rho).
    """
    t = np.linspace(*traj.span, samples)
    P = traj.embedded(t)
    q = traj.norms(t)
    speed = np.sqrt(np.maximum(1.0 - q, 0.0))
    center = P.mean(axis=0)
    _, _, vt = np.linalg.svd(P - center)
    normal = vt[2]
    offset = (P @ normal).mean()
    c = offset * normal
    e1 = vt[0]
    e2 = np.cross(normal, e1)
    ang = np.unwrap(np.arctan2((P - c) @ e2, (P - c) @ e1))
    axis_rate = abs(np.polyfit(t, ang, 1)[0])
    return float(speed.mean()), float(speed.std() / speed.mean()), axis_rate * abs(offset) / radius


def circle_law_check(cases=((1.0, (0.4, 0.2)), (2.0, (-0.3, 0.5)), (-1.0, (0.1, -0.6))), t1=2.0, B=1.0):
    """Solve sphere connections to reachable targets and test the circle law."""
    spec = build("sphere", B=B)
    checks = []
    for q, xi_true in cases:
        # the target is where the flow from xi_true sits at time t1
        probe = ConnectionProblem(spec, x1=Event(np.array([t1, 0.0, 0.0]), "north"), ratio=q)
        reached = endpoint_map(probe, np.array([xi_true]))[0]
        if not np.all(np.isfinite(reached)):
            raise ValueError(f"probe flow for ratio {q} left the north chart")
        target = Event(np.array([t1, *reached]), "north")
        problem = ConnectionProblem(spec, x1=target, ratio=q)
        results = multistart(problem, GridSpec(6, 2))
        for k, res in enumerate(results):
            mean, spread, rate = circle_metrics(res.trajectory, spec.parameters["r"])
            expect = sphere_circle_rate(q, B, mean)
            rel = abs(rate - expect) / expect
            tag = f"q{q:+g}_sol{k}"
            checks.append(Check(f"circle_speed_constancy_{tag}", spread, 0.0, 1e-6, spread < 1e-6, "stdev/mean"))
            checks.append(Check(f"circle_rate_{tag}", rate, expect, 1e-5, rel < 1e-5, "relative"))
        if not results:
            checks.append(Check(f"circle_solutions_q{q:+g}", 0, ">= 1", None, False))
    return checks


# -- bundles ---------------------------------------------------------------------------------------


def verify_scenario(name, grid=None, seed=0):
    """All checks for one catalog scenario, as a list of Check records."""
    if name == "minkowski_uniform":
        return (
            larmor_position_check()
            + speed_conservation_check()
            + larmor_velocity_check()
            + kk_projection_check()
            + cross_method_check()
        )
    if name == "ribbon":
        return ribbon_class_check(grid or 8, seed=seed) + fermat_check(20, seed=seed) + ribbon_flux_check()
    if name == "cap_cylinder":
        return cap_closed_form_check() + cap_equator_conjugate_check() + cap_audit_check() + zero_ratio_check()
    if name == "sphere":
        g = grid or 6
        floor_checks, _ = sphere_nonconnect_check(ratios=(-2, 1), grid=(g, max(g // 3, 1)), seed=seed)
        return sphere_flux_check() + sphere_conjugate_check() + floor_checks + circle_law_check()
    raise KeyError(f"unknown scenario {name!r}")
