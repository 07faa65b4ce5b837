"""Two-point boundary problems: shooting, multistart, conjugate points, winding tags.

Both shooting methods integrate in the time coordinate from ``t(x0)`` to
``t(x1)`` so the unknowns are exactly the ``n - 1`` direction parameters
``xi`` of the initial velocity (see ``kaluza_klein.cone_direction``).  Many
starts and their finite-difference perturbations are integrated together in
one batch; Newton iterations for all starts advance in lockstep.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    FunctionalValue,
    _groups,
    action_I,
    flow_batch,
    lfe_residual,
)
from .errors import (
    AmbiguousWinding,
    DegenerateNu,
    NoAngularStructure,
    NoConvergence,
    NotAGeodesic,
)
from .geometry import Event
from .integrate import OK, dopri_batch
from .kaluza_klein import KKBundle, cone_coordinates, cone_direction
from .trajectory import DenseTrajectory, ProjectedTrajectory, reparametrize

log = logging.getLogger(__name__)

FD_JACOBIAN_STEP = 1e-7
DEDUP_TOL = 1e-4
LIGHTLIKE_NU = 1e-6
MAX_ITER = 50
POLISH_RATIO = 1.5
# a start whose residual shrank by less than 1% over the last STALL_WINDOW
# iterations while still far above the tolerance sits at a nonzero local minimum
STALL_WINDOW = 4
STALL_RATIO = 0.99
STALL_FLOOR = 1e4


@dataclass(eq=False)
class ConnectionProblem:
    """Connect ``x0`` to ``x1`` (later in time) for a given charge ratio."""

    scenario: object
    x0: Event | None = None
    x1: Event | None = None
    ratio: float | None = None
    method: str = "direct"
    endpoint_tol: float = 1e-8
    tol: float = 1e-10
    max_iter: int = MAX_ITER
    fd_step: float = FD_JACOBIAN_STEP
    max_step: float = 0.5

    def __post_init__(self):
        sc = self.scenario
        self.x0 = sc.x0 if self.x0 is None else self.x0
        self.x1 = sc.x1 if self.x1 is None else self.x1
        self.ratio = sc.ratio if self.ratio is None else float(self.ratio)
        if self.method in ("kk", "kk_fermat"):
            self.method = "kk"
        if self.method not in ("direct", "kk"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "kk":
            if self.ratio == 0:
                raise ValueError("the Kaluza-Klein method needs a nonzero charge ratio")
            if not sc.field.is_exact:
                raise ValueError("the Kaluza-Klein method needs an exact field")
        ti = self.atlas.time_index
        if not self.x1.coords[ti] > self.x0.coords[ti]:
            raise ValueError("x1 must lie strictly later than x0")
        if self.endpoint_tol <= 0 or self.tol <= 0:
            raise ValueError("tolerances must be positive")

    @property
    def atlas(self):
        return self.scenario.atlas

    @property
    def field(self):
        return self.scenario.field

    @property
    def t0(self):
        return float(self.x0.coords[self.atlas.time_index])

    @property
    def t1(self):
        return float(self.x1.coords[self.atlas.time_index])

    @property
    def k(self):
        return self.atlas.dim - 1

    def bundle(self):
        return KKBundle(self.atlas, self.scenario.potential, self.ratio)


@dataclass
class ShootingVariables:
    """Stereographic direction parameters ``xi`` (|xi| = 1 is a lightlike start)."""

    xi: np.ndarray

    @classmethod
    def from_velocity(cls, problem, velocity):
        """From an initial spatial velocity ``dx/dt`` (chart components, |v|_h < 1)."""
        V = np.concatenate([[1.0], np.asarray(velocity, dtype=float)])
        return cls(cone_coordinates(problem.atlas, problem.x0.chart, problem.x0.coords, V)[0])


@dataclass
class ConnectionResult:
    converged: bool
    method: str
    xi: np.ndarray
    endpoint_residual: float
    iterations: int
    trajectory: object = None
    kk_trajectory: object = None
    action: FunctionalValue | None = None
    nu: float | None = None
    arrival: float | None = None
    lightlike_geodesic: bool = False
    lfe_residual: float | None = None
    first_conjugate: float | None = None
    homotopy_tag: int | None = None
    start_index: int | None = None
    status: str = ""
    initial_velocity: np.ndarray | None = None

    def summary(self):
        return {
            "converged": bool(self.converged),
            "method": self.method,
            "residual": float(self.endpoint_residual),
            "action": None if self.action is None else float(self.action.value),
            "action_error": None if self.action is None else float(self.action.error),
            "nu": self.nu,
            "arrival": self.arrival,
            "lightlike_geodesic": bool(self.lightlike_geodesic),
            "lfe_residual": self.lfe_residual,
            "winding": self.homotopy_tag,
            "conjugate_param": self.first_conjugate,
            "iterations": int(self.iterations),
            "xi": [float(v) for v in self.xi],
            "status": self.status,
        }


# -- endpoint map ------------------------------------------------------------------


def _initial_states(problem, xi, bundle=None):
    atlas = problem.atlas
    chart = problem.x0.chart
    x0 = problem.x0.coords
    m = len(xi)
    if bundle is None:
        V, _, _ = cone_direction(atlas, chart, x0, xi)
        r2 = np.sum(xi * xi, axis=1)
        rate = np.abs(1 - r2) / (1 + r2)
        y0 = np.concatenate([np.tile(x0, (m, 1)), V, rate[:, None]], axis=1)
        return y0, None
    V, dy, nu = cone_direction(bundle, chart, x0, xi)
    y0 = np.concatenate([np.tile(x0, (m, 1)), np.zeros((m, 1)), V, dy[:, None]], axis=1)
    return y0, nu


def _flow(problem, xi, bundle=None, store=False):
    y0, nu = _initial_states(problem, xi, bundle)
    atlas = problem.atlas if bundle is None else bundle.kk
    field = problem.field if bundle is None else None
    ratio = problem.ratio if bundle is None else 0.0
    codes = np.full(len(xi), atlas.code(problem.x0.chart))
    res = flow_batch(atlas, field, ratio, codes, y0, problem.t0, problem.t1, "temporal", problem.tol, store=store)
    return res, nu


def _residuals(problem, res):
    """Spatial endpoint mismatch in the target chart; rows of inf for failed members."""
    atlas = problem.atlas
    n = atlas.dim
    target = problem.x1.chart
    tchart = atlas.charts[target]
    R = np.full((len(res.y), n - 1), np.inf)
    ok = res.status == OK
    xf = res.y[:, :n]
    for code, sel in _groups(res.codes):
        sel_idx = np.flatnonzero(np.asarray(sel) if not isinstance(sel, slice) else np.ones(len(res.y), bool))
        sel_idx = sel_idx[ok[sel_idx]]
        if sel_idx.size == 0:
            continue
        xt, _ = atlas.transition(atlas.names[code], target, xf[sel_idx])
        good = tchart.contains(xt)
        d = tchart.wrap_difference(xt - problem.x1.coords)[:, 1:]
        R[sel_idx[good]] = d[good]
    return R


def endpoint_map(problem, xi, bundle=None):
    """Residual vectors ``x(t1) - x1`` (spatial, target chart) for each row of ``xi``."""
    res, _ = _flow(problem, np.atleast_2d(xi), bundle)
    return _residuals(problem, res)


# -- lockstep Newton -------------------------------------------------------------------


@dataclass
class _Outcome:
    xi: np.ndarray
    residual: np.ndarray
    norm: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    status: list


def _clamp(problem, xi):
    if problem.method != "kk":
        return xi
    r = np.linalg.norm(xi, axis=1)
    return np.where((r > 1)[:, None], xi / np.maximum(r, 1e-300)[:, None], xi)


def _newton_batch(problem, xi0, bundle=None):
    xi = _clamp(problem, np.array(xi0, dtype=float, copy=True))
    m, k = xi.shape
    h = problem.fd_step
    R = endpoint_map(problem, xi, bundle)
    norm = np.linalg.norm(R, axis=1)
    active = np.isfinite(norm)
    status = ["" if a else "integration failed at start" for a in active]
    converged = np.zeros(m, dtype=bool)
    polishing = np.zeros(m, dtype=bool)
    history = [[float(v)] for v in norm]
    iters = np.zeros(m, dtype=int)
    eye = np.eye(k)

    while active.any():
        A = np.flatnonzero(active)
        log.debug("newton: %d active, best residual %.3g", A.size, np.min(norm[A]))
        # central-difference Jacobians for every active start in one batch
        pert = np.concatenate([xi[A][:, None, :] + h * eye, xi[A][:, None, :] - h * eye], axis=1)
        Rp = endpoint_map(problem, pert.reshape(-1, k), bundle).reshape(len(A), 2 * k, k)
        J = np.transpose((Rp[:, :k] - Rp[:, k:]) / (2 * h), (0, 2, 1))
        bad = ~np.all(np.isfinite(J), axis=(1, 2))
        for i in A[bad]:
            status[i] = "integration failed during Jacobian evaluation"
            active[i] = False
            converged[i] = norm[i] < problem.endpoint_tol
        keep = ~bad
        A, J = A[keep], J[keep]
        if A.size == 0:
            break
        step = -np.einsum("mij,mj->mi", np.linalg.pinv(J), R[A])
        sn = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, problem.max_step / np.maximum(sn, 1e-300))[:, None]

        alpha = np.ones(len(A))
        accepted = np.zeros(len(A), dtype=bool)
        new_R = np.zeros((len(A), k))
        f0 = 0.5 * norm[A] ** 2
        for _ in range(12):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            trial = _clamp(problem, xi[A[todo]] + alpha[todo, None] * step[todo])
            Rt = endpoint_map(problem, trial, bundle)
            ft = 0.5 * np.sum(Rt**2, axis=1)
            ok = np.isfinite(ft) & (ft <= (1 - 1e-4 * alpha[todo]) * f0[todo])
            idx = todo[ok]
            accepted[idx] = True
            new_R[idx] = Rt[ok]
            xi[A[idx]] = trial[ok]
            alpha[todo[~ok]] *= 0.5

        for j, i in enumerate(A):
            if not accepted[j]:
                active[i] = False
                converged[i] = norm[i] < problem.endpoint_tol
                status[i] = "converged" if converged[i] else "line search stagnated"
                continue
            old = norm[i]
            R[i] = new_R[j]
            norm[i] = np.linalg.norm(new_R[j])
            iters[i] += 1
            if norm[i] < problem.endpoint_tol:
                if norm[i] == 0.0 or (polishing[i] and norm[i] * POLISH_RATIO >= old):
                    active[i] = False
                    converged[i] = True
                    status[i] = "converged"
                    continue
                polishing[i] = True
            history[i].append(float(norm[i]))
            if (
                len(history[i]) > STALL_WINDOW
                and norm[i] > STALL_FLOOR * problem.endpoint_tol
                and norm[i] > STALL_RATIO * history[i][-1 - STALL_WINDOW]
            ):
                active[i] = False
                status[i] = "stalled at a nonzero residual"
                continue
            if iters[i] >= problem.max_iter:
                active[i] = False
                converged[i] = norm[i] < problem.endpoint_tol
                status[i] = "converged" if converged[i] else "iteration limit reached"
    for i in range(m):
        if not status[i]:
            status[i] = "converged" if converged[i] else "no convergence"
    return _Outcome(xi, R, norm, converged, iters, status)


# -- results --------------------------------------------------------------------------


def _canonical_xi(problem, xi):
    if problem.method == "kk":
        return xi
    r2 = float(xi @ xi)
    return xi / r2 if r2 > 1 else xi


def _finish(problem, outcome, indices, bundle=None):
    """Dense re-integration and diagnostics for the selected starts."""
    results = []
    if len(indices) == 0:
        return results
    xi = outcome.xi[indices]
    res, nu = _flow(problem, xi, bundle, store=True)
    base_atlas = problem.atlas
    for j, i in enumerate(indices):
        converged = bool(outcome.converged[i]) and res.status[j] == OK
        xi_c = _canonical_xi(problem, outcome.xi[i])
        r = ConnectionResult(
            converged=converged,
            method=problem.method,
            xi=xi_c,
            endpoint_residual=float(outcome.norm[i]),
            iterations=int(outcome.iterations[i]),
            start_index=int(i),
            status=outcome.status[i],
        )
        if res.dense[j] is None:
            results.append(r)
            continue
        if bundle is None:
            traj = DenseTrajectory(res.dense[j], base_atlas, "cauchy_temporal", meta={"ratio": problem.ratio})
        else:
            kk_traj = DenseTrajectory(res.dense[j], bundle.kk, "cauchy_temporal", meta={"ratio": problem.ratio})
            traj = ProjectedTrajectory(kk_traj, base_atlas)
            r.kk_trajectory = kk_traj
            r.nu = float(nu[j])
            r.arrival = float(res.y[j, base_atlas.dim])
        r.trajectory = traj
        _, _, v = traj.evaluate(np.array([problem.t0]))
        r.initial_velocity = v[0]
        speed = (1 - xi_c @ xi_c) / (1 + xi_c @ xi_c)
        if bundle is None:
            r.lightlike_geodesic = abs(speed) < LIGHTLIKE_NU
        else:
            r.lightlike_geodesic = abs(r.nu) < LIGHTLIKE_NU * bundle.a
        if problem.scenario.field.is_exact:
            try:
                r.action = action_I(base_atlas, problem.scenario.potential, problem.ratio, traj, tol=1e-8)
            except Exception as exc:  # non-causal drift from a bad start
                r.status += f"; action unavailable: {exc}"
        if converged and not r.lightlike_geodesic:
            r.lfe_residual = lfe_residual(base_atlas, problem.field, problem.ratio, reparametrize(traj, "proper_time"))
        if problem.scenario.angular is not None:
            try:
                r.homotopy_tag = homotopy_tag(traj, problem.scenario)
            except AmbiguousWinding:
                r.homotopy_tag = None
        results.append(r)
    return results


def _solve(problem, xis):
    bundle = problem.bundle() if problem.method == "kk" else None
    outcome = _newton_batch(problem, xis, bundle)
    return outcome, bundle


def shoot(problem, guess=None):
    """Single-start shooting with the problem's method; raises NoConvergence on failure."""
    xi = np.zeros(problem.k) if guess is None else np.asarray(getattr(guess, "xi", guess), dtype=float)
    outcome, bundle = _solve(problem, xi[None, :])
    result = _finish(problem, outcome, [0], bundle)[0]
    if not result.converged:
        raise NoConvergence(
            f"shooting did not converge (residual {result.endpoint_residual:.3g}, {result.status})", result
        )
    return result


def shoot_direct(problem, guess=None):
    """Direct Lorentz-force shooting in the time coordinate."""
    if problem.method != "direct":
        problem = _with_method(problem, "direct")
    return shoot(problem, guess)


def shoot_kk_fermat(problem, guess=None, raise_degenerate=False):
    """Shoot lightlike geodesics of the extension and project them.

    A result with |nu| below the lightlike threshold is flagged
    ``lightlike_geodesic``; with ``raise_degenerate`` it raises instead.
    """
    if problem.method != "kk":
        problem = _with_method(problem, "kk")
    result = shoot(problem, guess)
    if raise_degenerate and result.lightlike_geodesic:
        raise DegenerateNu(f"nu = {result.nu!r}: the connection is a lightlike geodesic")
    return result


def _with_method(problem, method):
    return ConnectionProblem(
        problem.scenario, problem.x0, problem.x1, problem.ratio, method,
        problem.endpoint_tol, problem.tol, problem.max_iter, problem.fd_step, problem.max_step,
    )


# -- multistart ---------------------------------------------------------------------------


@dataclass
class GridSpec:
    """Polar grid of starts: ``n_directions`` angles times ``n_speeds`` initial speeds.

    Speeds are spatial speeds |dx/dt|, by default the midpoints of ``n_speeds``
    equal cells of (0, 1); exactly lightlike starts are avoided because the
    proper-time rate sqrt(g(V, V)) is not smooth there.  A seed adds a
    deterministic random rotation to each ring of directions.
    """

    n_directions: int = 8
    n_speeds: int = 4
    speed_range: tuple = (0.0, 1.0)
    seed: int | None = None
    points: np.ndarray | None = None

    def starts(self, k=2):
        if self.points is not None:
            return np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.n_directions < 1 or self.n_speeds < 1:
            raise ValueError("grid must be nonempty")
        lo, hi = self.speed_range
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("speed range must satisfy 0 <= lo < hi <= 1")
        speeds = lo + (hi - lo) * (np.arange(self.n_speeds) + 0.5) / self.n_speeds
        rng = np.random.default_rng(self.seed) if self.seed is not None else None
        rows = []
        for s in speeds:
            rad = (1 - np.sqrt(max(1 - s * s, 0.0))) / s if s > 0 else 0.0
            shift = 0.0 if rng is None else rng.uniform(0, 2 * np.pi / self.n_directions)
            ang = shift + 2 * np.pi * np.arange(self.n_directions) / self.n_directions
            if k == 1:
                rows += [[rad], [-rad]]
                continue
            pts = np.zeros((self.n_directions, k))
            pts[:, 0] = rad * np.cos(ang)
            pts[:, 1] = rad * np.sin(ang)
            rows += list(pts)
        return np.array(rows)


def run_starts(problem, xis):
    """Newton from every start; returns one ConnectionResult per start (converged or not)."""
    outcome, bundle = _solve(problem, np.atleast_2d(xis))
    return _finish(problem, outcome, list(range(len(outcome.xi))), bundle)


def multistart(problem, grid=None, dedup_tol=DEDUP_TOL, keep_failed=False):
    """Distinct converged connections from a grid of starts, sorted by decreasing action.

    Duplicates share the homotopy tag and have initial directions closer
    than ``dedup_tol``; the earliest grid start wins.
    """
    grid = GridSpec() if grid is None else grid
    xis = grid.starts(problem.k) if isinstance(grid, GridSpec) else np.atleast_2d(grid)
    if len(xis) == 0:
        raise ValueError("empty start grid")
    outcome, bundle = _solve(problem, xis)
    good = [i for i in range(len(xis)) if outcome.converged[i]]
    picked = []
    reps = []
    for i in good:
        c = _canonical_xi(problem, outcome.xi[i])
        if any(np.linalg.norm(c - r) < dedup_tol for r in reps):
            continue
        reps.append(c)
        picked.append(i)
    results = _finish(problem, outcome, picked, bundle)
    # merge again with tags now known (distinct tags are never merged)
    distinct = []
    for r in results:
        if not r.converged:
            continue
        dup = False
        for s in distinct:
            if s.homotopy_tag == r.homotopy_tag and np.linalg.norm(s.xi - r.xi) < dedup_tol:
                dup = True
                break
        if not dup:
            distinct.append(r)
    distinct.sort(key=lambda r: (-(r.action.value if r.action is not None else -np.inf), r.start_index))
    if keep_failed:
        failed = _finish(problem, outcome, [i for i in range(len(xis)) if not outcome.converged[i]], bundle)
        return distinct, failed
    return distinct


def select_extremal_arrival(results, ratio):
    """Among KK results pick the minimal arrival (ratio > 0) or maximal (ratio < 0)."""
    cands = [r for r in results if r.converged and r.arrival is not None]
    if not cands:
        return None
    key = (lambda r: r.arrival) if ratio > 0 else (lambda r: -r.arrival)
    return min(cands, key=key)


def ratio_continuation(problem, ratios, guess=None):
    """Sweep the charge ratio, warm-starting each solve from the previous solution.

    Returns a list of ``(ratio, result_or_None, message)``.
    """
    ratios = list(ratios)
    if any(b < a for a, b in zip(ratios, ratios[1:])):
        raise ValueError("ratios must be sorted")
    xi = None if guess is None else np.asarray(getattr(guess, "xi", guess), dtype=float)
    out = []
    for q in ratios:
        method = problem.method if q != 0 else "direct"
        sub = ConnectionProblem(
            problem.scenario, problem.x0, problem.x1, q, method,
            problem.endpoint_tol, problem.tol, problem.max_iter, problem.fd_step, problem.max_step,
        )
        try:
            res = shoot(sub, xi)
            xi = res.xi
            out.append((q, res, "converged"))
        except NoConvergence as exc:
            out.append((q, exc.result, str(exc)))
    return out


# -- conjugate points -------------------------------------------------------------------


def _geodesic_acc(chart, x, v):
    return -np.einsum("mkij,mi,mj->mk", chart.christoffel(x), v, v)


def jacobi_first_conjugate(trajectory, defect_tol=1e-6, tol=1e-11, samples=4000):
    """First conjugate parameter along a geodesic, or None.

    The geodesic is re-integrated in the chart of its initial point together
    with the linearized flow for transverse deviations ``J`` (``J(0) = 0``,
    ``J'(0)`` a basis).  Conjugacy is a zero of
    ``det[x', J_1, ..., J_{n-1}]`` (timelike) or ``det[x', d/dt, J_1, ..., J_{n-2}]``
    (lightlike; quotient by the tangent and the time direction), located by a
    sign change on a dense grid followed by bisection.
    """
    atlas = trajectory.atlas
    lam0, lam1 = trajectory.span
    lam = trajectory.sample_params(3)
    codes, x, v, a = trajectory.acceleration(lam)
    n = x.shape[1]
    scale = np.maximum(1.0, np.sum(v * v, axis=1))
    defect = np.zeros(len(lam))
    for code, sel in _groups(codes):
        chart = atlas.charts[atlas.names[code]]
        defect[sel] = np.linalg.norm(a[sel] - _geodesic_acc(chart, x[sel], v[sel]), axis=1) / scale[sel]
    if defect.max() > defect_tol:
        raise NotAGeodesic(f"geodesic defect {defect.max():.3g} exceeds {defect_tol}")
    chart = atlas.charts[atlas.names[codes[0]]]
    x0, v0 = x[0], v[0]
    g0 = chart.metric(x0)
    q = v0 @ g0 @ v0
    ti = atlas.time_index
    lightlike = abs(q) < 1e-8 * (v0 @ v0)
    constraints = [g0 @ v0]
    if lightlike:
        if ti is None:
            raise ValueError("lightlike conjugate points need a time direction")
        constraints.append(g0[:, ti])
    C = np.array(constraints)
    _, _, Vt = np.linalg.svd(C)
    basis = Vt[len(constraints):]
    m = len(basis)

    fixed = [v0] if not lightlike else [v0, np.eye(n)[ti]]
    nfix = len(fixed)

    def rhs(codes_, t, y):
        out = np.empty_like(y)
        xb, vb = y[:, :n], y[:, n : 2 * n]
        out[:, :n] = vb
        out[:, n : 2 * n] = _geodesic_acc(chart, xb, vb)
        for j in range(m):
            o = 2 * n + 2 * n * j
            J, dJ = y[:, o : o + n], y[:, o + n : o + 2 * n]
            size = np.maximum(np.sqrt(np.sum(J * J, axis=1) + np.sum(dJ * dJ, axis=1)), 1e-300)
            eps = (1e-6 / size)[:, None]
            ap = _geodesic_acc(chart, xb + eps * J, vb + eps * dJ)
            am = _geodesic_acc(chart, xb - eps * J, vb - eps * dJ)
            out[:, o : o + n] = dJ
            out[:, o + n : o + 2 * n] = (ap - am) / (2 * eps)
        return out

    y0 = [x0, v0]
    for b in basis:
        y0 += [np.zeros(n), b]
    y0 = np.concatenate(y0)[None, :]
    res = dopri_batch(rhs, lam0, y0, lam1, rtol=tol, atol=tol, store=True,
                      valid=lambda c, y: chart.contains(y[:, :n]))
    if res.status[0] != OK:
        raise NotAGeodesic("linearized flow left the chart of the initial point")
    seg = res.dense[0]

    def det(s):
        _, y = seg.evaluate(np.atleast_1d(s))
        cols = [y[:, n : 2 * n]]
        if lightlike:
            cols.append(np.tile(fixed[1], (len(y), 1)))
        for j in range(m):
            o = 2 * n + 2 * n * j
            cols.append(y[:, o : o + n])
        return np.linalg.det(np.stack(cols, axis=-1))

    grid = np.linspace(lam0, lam1, samples + 1)[1:]
    D = det(grid)
    ref = np.sign(D[0])
    change = np.flatnonzero(np.sign(D) != ref)
    change = change[change > 0]
    if change.size == 0:
        return None
    hi = grid[change[0]]
    lo = grid[change[0] - 1]
    d_lo = det(lo)[0]
    assert np.sign(det(hi)[0]) != np.sign(d_lo), "bisection bracket lost its sign change"
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        dm = det(mid)[0]
        if np.sign(dm) == np.sign(d_lo):
            lo, d_lo = mid, dm
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    if root >= lam1 - 1e-9 * max(1.0, abs(lam1)):
        return None
    return float(root)


# -- winding tags -------------------------------------------------------------------------


def homotopy_tag(trajectory, scenario, max_refine=8):
    """Winding number of the embedding azimuth about the symmetry axis.

    Samples are refined until consecutive azimuth jumps are below pi/2.
    Curves passing within ``min_radius`` of the axis are ambiguous.
    """
    if scenario.angular is None:
        raise NoAngularStructure(f"scenario {scenario.name!r} has no angular coordinate")
    min_radius = scenario.angular.get("min_radius", 0.0)
    refine = 2
    for _ in range(max_refine):
        lam = trajectory.sample_params(refine)
        P = trajectory.embedded(lam)
        rho = np.hypot(P[:, 0], P[:, 1])
        if np.any(rho < min_radius):
            raise AmbiguousWinding("curve passes too close to the axis")
        phi = np.arctan2(P[:, 1], P[:, 0])
        jumps = np.diff(phi)
        jumps = (jumps + np.pi) % (2 * np.pi) - np.pi
        if np.all(np.abs(jumps) < 0.5 * np.pi):
            return int(np.round(jumps.sum() / (2 * np.pi)))
        refine *= 2
    raise AmbiguousWinding("azimuth could not be resolved by refinement")


# -- audit --------------------------------------------------------------------------------


def maximizer_audit(problem, result, probes=(), same_class=True):
    """One-sided checks on a converged connection.

    (i) timelike results solve the LFE (residual below 1e-6);
    (ii) lightlike-geodesic results have no interior conjugate point;
    (iii) no probe curve (of the same winding tag, unless ``same_class`` is
    False) has a larger action.
    """
    report = {"checks": []}
    if not result.converged:
        report["checks"].append({"name": "converged", "passed": False})
        report["passed"] = False
        return report
    if not result.lightlike_geodesic:
        res = result.lfe_residual
        if res is None:
            res = lfe_residual(problem.atlas, problem.field, problem.ratio, reparametrize(result.trajectory, "proper_time"))
        report["checks"].append({"name": "lfe_residual", "value": res, "limit": 1e-6, "passed": res < 1e-6})
    else:
        conj = jacobi_first_conjugate(result.trajectory)
        result.first_conjugate = conj
        report["checks"].append({"name": "no_interior_conjugate_point", "value": conj, "passed": conj is None})
    if probes:
        best = result.action.value
        worst_gap = -np.inf
        compared = 0
        for p in probes:
            if same_class and problem.scenario.angular is not None:
                try:
                    if homotopy_tag(p, problem.scenario) != result.homotopy_tag:
                        continue
                except AmbiguousWinding:
                    continue
            val = action_I(problem.atlas, problem.scenario.potential, problem.ratio, p).value
            worst_gap = max(worst_gap, val - best)
            compared += 1
        report["checks"].append({
            "name": "probe_actions_not_larger",
            "compared": compared,
            "max_excess": worst_gap if compared else None,
            "passed": compared == 0 or worst_gap <= 1e-9 * max(1.0, abs(best)),
        })
    report["passed"] = all(c["passed"] for c in report["checks"])
    return report
