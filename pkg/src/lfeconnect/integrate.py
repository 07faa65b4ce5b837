"""Batched Dormand-Prince 5(4) integration with per-member step control.

Members of a batch advance in lockstep iterations but each keeps its own
time, step size and chart, so one call can carry many shooting trials or
finite-difference perturbations at once.  States may switch charts after
accepted steps; a state that leaves every chart is stopped and flagged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import RK45

# Dormand-Prince tableau and dense-output matrix, as shipped with scipy
_C = RK45.C
_A = RK45.A
_B = RK45.B
_E = RK45.E
_P = RK45.P

OK, LEFT_ATLAS, STEP_UNDERFLOW, MAX_STEPS, NONFINITE = 0, 1, 2, 3, 4
STATUS_NAMES = {
    OK: "ok",
    LEFT_ATLAS: "left-atlas",
    STEP_UNDERFLOW: "step-underflow",
    MAX_STEPS: "max-steps",
    NONFINITE: "non-finite",
}


@dataclass
class DenseSegments:
    """Accepted steps of one member: ``y(t) = y0 + h * Q @ [th, th^2, th^3, th^4]``."""

    t0: np.ndarray
    h: np.ndarray
    y0: np.ndarray
    Q: np.ndarray
    codes: np.ndarray

    @property
    def breaks(self):
        return np.append(self.t0, self.t0[-1] + self.h[-1])

    def locate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.t0, t, side="right") - 1
        return np.clip(idx, 0, len(self.t0) - 1)

    def evaluate(self, t, derivative=0):
        """State (and optionally its parameter derivative) at ``t``; returns ``(idx, y[, dy])``."""
        t = np.asarray(t, dtype=float)
        idx = self.locate(t)
        h = self.h[idx]
        th = (t - self.t0[idx]) / h
        powers = np.stack([th, th**2, th**3, th**4], axis=-1)
        Q = self.Q[idx]
        y = self.y0[idx] + h[:, None] * np.einsum("mdk,mk->md", Q, powers)
        if not derivative:
            return idx, y
        dpow = np.stack([np.ones_like(th), 2 * th, 3 * th**2, 4 * th**3], axis=-1)
        dy = np.einsum("mdk,mk->md", Q, dpow)
        return idx, y, dy


@dataclass
class BatchResult:
    t: np.ndarray
    y: np.ndarray
    codes: np.ndarray
    status: np.ndarray
    nsteps: np.ndarray
    last_valid: np.ndarray
    dense: list | None = None

    @property
    def success(self):
        return self.status == OK


def _initial_step(rhs, codes, t, y, f0, rtol, atol, span):
    scale = atol + np.abs(y) * rtol
    d0 = np.sqrt(np.mean((y / scale) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2, axis=1))
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, span)
    y1 = y + h0[:, None] * f0
    f1 = rhs(codes, t + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2, axis=1)) / h0
    dmax = np.maximum(d1, d2)
    h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dmax, 1e-300)) ** 0.2)
    h = np.minimum(100 * h0, h1)
    return np.where(np.isfinite(h) & (h > 0), h, 1e-6 * np.maximum(span, 1.0))


def dopri_batch(
    rhs,
    t0,
    y0,
    t_end,
    codes0=None,
    *,
    rtol=1e-10,
    atol=1e-10,
    switch=None,
    valid=None,
    store=False,
    max_steps=200000,
    h0=None,
):
    """Integrate ``dy/dt = rhs(codes, t, y)`` for a batch of members.

    Parameters
    ----------
    rhs : callable
        ``rhs(codes, t, y)`` with ``codes`` (m,) chart indices, ``t`` (m,)
        and ``y`` (m, d); returns (m, d).
    t0, t_end : float or array
        Start and end parameter per member (``t_end > t0``).
    switch : callable, optional
        ``switch(codes, y) -> (codes, y)`` applied after accepted steps.
    valid : callable, optional
        ``valid(codes, y) -> bool array``; states failing it after switching
        stop with status ``LEFT_ATLAS``.
    store : bool
        Keep dense-output segments for every member.
    """
    y = np.array(y0, dtype=float, copy=True)
    m, d = y.shape
    t = np.broadcast_to(np.asarray(t0, dtype=float), (m,)).copy()
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (m,)).copy()
    codes = np.zeros(m, dtype=int) if codes0 is None else np.array(codes0, dtype=int, copy=True)
    status = np.full(m, -1)
    nsteps = np.zeros(m, dtype=int)
    last_valid = y.copy()
    done = t >= t_end
    status[done] = OK

    f = np.zeros_like(y)
    active = np.flatnonzero(~done)
    if active.size:
        f[active] = rhs(codes[active], t[active], y[active])
    h = np.zeros(m)
    if active.size:
        if h0 is None:
            h[active] = _initial_step(rhs, codes[active], t[active], y[active], f[active], rtol, atol, t_end[active] - t[active])
        else:
            h[active] = h0
    segs = [[] for _ in range(m)] if store else None
    K = np.empty((7, m, d))
    eps = np.finfo(float).eps

    while True:
        active = np.flatnonzero(status < 0)
        if active.size == 0:
            break
        ta, ya, ca = t[active], y[active], codes[active]
        ha = np.minimum(h[active], t_end[active] - ta)
        Ka = K[:, : active.size]
        Ka[0] = f[active]
        for s in range(1, 6):
            dy = np.einsum("j,jmd->md", _A[s, :s], Ka[:s]) * ha[:, None]
            Ka[s] = rhs(ca, ta + _C[s] * ha, ya + dy)
        y_new = ya + ha[:, None] * np.einsum("j,jmd->md", _B, Ka[:6])
        Ka[6] = rhs(ca, ta + ha, y_new)
        err = ha[:, None] * np.einsum("j,jmd->md", _E, Ka)
        scale = atol + np.maximum(np.abs(ya), np.abs(y_new)) * rtol
        err_norm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        finite = np.isfinite(err_norm) & np.all(np.isfinite(y_new), axis=1)
        err_norm = np.where(finite, err_norm, np.inf)
        accept = err_norm <= 1.0

        factor = np.where(
            err_norm == 0, 5.0, np.clip(0.9 * np.where(finite & (err_norm > 0), err_norm, 1.0) ** -0.2, 0.2, 5.0)
        )
        factor = np.where(finite, factor, 0.2)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h_next = ha * factor
        underflow = ~accept & (h_next < 10 * eps * np.maximum(np.abs(ta), 1.0))

        acc = active[accept]
        if acc.size:
            if store:
                Q = np.einsum("jmd,jk->mdk", Ka[:, accept], _P)
                for j, i in enumerate(acc):
                    segs[i].append((ta[accept][j], ha[accept][j], ya[accept][j], Q[j], ca[accept][j]))
            y[acc] = y_new[accept]
            t[acc] = ta[accept] + ha[accept]
            f[acc] = Ka[6][accept]
            nsteps[acc] += 1
            finished = t[acc] >= t_end[acc] * (1 - 4 * eps) - 4 * eps
            t[acc[finished]] = t_end[acc[finished]]
            if switch is not None:
                new_codes, new_y = switch(codes[acc], y[acc])
                moved = np.flatnonzero(new_codes != codes[acc])
                codes[acc], y[acc] = new_codes, new_y
                if moved.size:
                    mv = acc[moved]
                    f[mv] = rhs(codes[mv], t[mv], y[mv])
            if valid is not None:
                ok = valid(codes[acc], y[acc])
                status[acc[~ok]] = LEFT_ATLAS
                last_valid[acc[ok]] = y[acc[ok]]
            else:
                last_valid[acc] = y[acc]
            still = acc[status[acc] < 0]
            status[still[t[still] >= t_end[still]]] = OK
            over = still[nsteps[still] >= max_steps]
            status[over[status[over] < 0]] = MAX_STEPS
        h[active] = h_next
        rej = active[~accept]
        status[rej[underflow[~accept]]] = np.where(
            np.isfinite(err_norm[~accept][underflow[~accept]]), STEP_UNDERFLOW, NONFINITE
        )

    dense = None
    if store:
        dense = []
        for i in range(m):
            if segs[i]:
                t0s, hs, ys, Qs, cs = zip(*segs[i])
                dense.append(DenseSegments(np.array(t0s), np.array(hs), np.array(ys), np.array(Qs), np.array(cs)))
            else:
                dense.append(None)
    return BatchResult(t, y, codes, status, nsteps, last_valid, dense)
