"""Adaptive integration of the reduced similarity system.

A Dormand-Prince 5(4) stepper (scipy's RK45) advances the state (W, W', R)
in y with local error control; every accepted step's dense interpolant is
scanned for sign changes of W'', W' and W + 1, and each crossing is located
by bisection (brentq) and recorded as an event.  The run terminates normally
at y_end, or early when W approaches zero: the reduced system breaks down
only where W reaches zero, so once |W| < NEAR_ZERO_W the maximum step is cut
10x to resolve the approach, and the run stops with BreakdownWZero when |W|
falls to the hard threshold.

fixed_step_rk4 is an independent classical RK4 used as the convergence-order
oracle, and residual() re-checks a finished trace against the implicit form
of the equations by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .errors import BadStep, SingularEvaluation
from .similarity import (
    BREAKDOWN_THRESHOLD,
    EventKind,
    EventRecord,
    PressureFlag,
    SimilarityState,
    SolutionTrace,
    Termination,
    rhs,
    rhs_components,
)

#: below this |W| the engine shrinks h_max 10x and resolves the approach to zero
NEAR_ZERO_W = 1e-6

#: interior points used to split a step when locating multiple roots
_SUBSCAN = 8

#: safety factor on the propagated-error deadband for event detection
_BAND_SAFETY = 4.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and limits for an adaptive run.

    h_init defaults to 1e-6 times the starting y; h_max to 1/100 of the span.
    """

    y_end: float
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    h_init: float | None = None
    h_max: float | None = None
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0.0 and self.abs_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.h_init is not None and not self.h_init > 0.0:
            raise ValueError("h_init must be positive")
        if self.h_max is not None and not self.h_max > 0.0:
            raise ValueError("h_max must be positive")

    def resolved(self, y_start: float) -> tuple[float, float]:
        if not self.y_end > y_start:
            raise ValueError(f"y_end={self.y_end} must exceed start y={y_start}")
        span = self.y_end - y_start
        h0 = 1e-6 * y_start if self.h_init is None else self.h_init
        hmax = 0.01 * span if self.h_max is None else self.h_max
        return min(h0, span), hmax


def _g_values(x: float, u, A: int) -> tuple[float, float, float]:
    """The three event functions (W'', W', W+1) at one point."""
    W, Wp, R = float(u[0]), float(u[1]), float(u[2])
    return rhs_components(x, W, Wp, R, A)[1], Wp, W + 1.0


def _g_bands(x: float, u, A: int, rel_tol: float, abs_tol: float
             ) -> tuple[float, float, float]:
    """Detection deadbands: the local integration error propagated through
    each event function.  Sign changes smaller than this are noise."""
    W, Wp, R = float(u[0]), float(u[1]), float(u[2])
    eW = abs_tol + rel_tol * abs(W)
    eWp = abs_tol + rel_tol * abs(Wp)
    eR = abs_tol + rel_tol * abs(R)
    Wy = W * x
    X = Wp * x + W + 1.0 - R
    num = (0.5 * Wy * Wy * X + (Wp * x + 1.0) ** 2
           + 4.0 * W + 3.0 * W * W - 0.5 * A * (Wp * x + 3.0 * W + 1.0))
    den = W * x * x
    dnum_dW = W * x * x * X + 0.5 * Wy * Wy + 4.0 + 6.0 * W - 1.5 * A
    dnum_dWp = 0.5 * Wy * Wy * x + 2.0 * (Wp * x + 1.0) * x - 0.5 * A * x
    dnum_dR = -0.5 * Wy * Wy
    dg_dW = dnum_dW / den - num * x * x / (den * den)
    dg_dWp = dnum_dWp / den
    dg_dR = dnum_dR / den
    band_wpp = abs(dg_dW) * eW + abs(dg_dWp) * eWp + abs(dg_dR) * eR
    return _BAND_SAFETY * band_wpp, _BAND_SAFETY * eWp, _BAND_SAFETY * eW


_EVENT_KINDS = (
    {False: EventKind.InflectionDown, True: EventKind.InflectionUp},
    {False: EventKind.VelocityMin, True: EventKind.WpSignChange},
    {False: EventKind.CrossMinusOne, True: EventKind.CrossMinusOne},
)


def _locate_roots(geval, xs, gs, xtol):
    """Roots of g at float-sign changes over the sub-split grid."""
    roots = []
    for i in range(len(xs) - 1):
        a, b = gs[i], gs[i + 1]
        if (a < 0.0 < b) or (b < 0.0 < a):
            roots.append(float(brentq(geval, float(xs[i]), float(xs[i + 1]),
                                      xtol=xtol)))
        elif b == 0.0 and a != 0.0:
            roots.append(float(xs[i + 1]))
    return roots


def integrate(start: SimilarityState, pressure: PressureFlag,
              cfg: IntegratorConfig) -> SolutionTrace:
    """Integrate the reduced system from `start` to cfg.y_end.

    Returns a trace sampled at every accepted step plus located event points,
    with all W''/W'/W+1 sign-change events in order and a termination tag.
    Never raises for breakdown, step failure or budget exhaustion: those are
    reported on the trace so partial results survive.
    """
    if abs(start.W) <= BREAKDOWN_THRESHOLD:
        raise SingularEvaluation(f"start W={start.W} is at the breakdown threshold")
    A = pressure.A
    h0, hmax = cfg.resolved(start.y)

    def f(x, u):
        return np.array(rhs_components(x, float(u[0]), float(u[1]), float(u[2]), A))

    sol = RK45(f, start.y, np.array([start.W, start.Wp, start.R], dtype=float),
               t_bound=cfg.y_end, rtol=cfg.rel_tol, atol=cfg.abs_tol,
               first_step=h0, max_step=hmax)

    ys = [start.y]
    states = [np.array([start.W, start.Wp, start.R], dtype=float)]
    events: list[EventRecord] = []
    termination = Termination.ReachedEnd
    near_mode = False
    steps = 0
    g_prev = _g_values(start.y, states[0], A)
    # largest |g| seen since the last recorded event of each kind family:
    # a sign change only counts once the function has left its deadband
    peaks = [abs(g) for g in g_prev]

    def append_sample(x, u):
        if x > ys[-1]:
            ys.append(float(x))
            states.append(np.asarray(u, dtype=float))

    def make_geval(idx, dense):
        if idx == 0:
            def geval(x):
                u = dense(x)
                return rhs_components(x, float(u[0]), float(u[1]),
                                      float(u[2]), A)[1]
        elif idx == 1:
            def geval(x):
                return float(dense(x)[1])
        else:
            def geval(x):
                return float(dense(x)[0]) + 1.0
        return geval

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        while sol.status == "running":
            if steps >= cfg.max_steps:
                termination = Termination.BudgetExhausted
                break
            sol.step()
            steps += 1
            if sol.status == "failed":
                termination = Termination.StepFailure
                break

            xtol = cfg.rel_tol * max(1.0, sol.t)
            g_now = _g_values(sol.t, sol.y, A)
            w_now = float(sol.y[0])
            dense = None

            # breakdown: |W| falling to the hard threshold ends the run
            y_break = None
            if abs(w_now) <= BREAKDOWN_THRESHOLD:
                dense = sol.dense_output()
                try:
                    y_break = float(brentq(
                        lambda x: abs(float(dense(x)[0])) - BREAKDOWN_THRESHOLD,
                        sol.t_old, sol.t, xtol=min(xtol, 1e-13)))
                except ValueError:
                    y_break = sol.t

            bands = _g_bands(sol.t, sol.y, A, cfg.rel_tol, cfg.abs_tol)
            found = []
            for idx in range(3):
                a, b = g_prev[idx], g_now[idx]
                crossed = (a < 0.0 < b) or (b < 0.0 < a) or (b == 0.0 and a != 0.0)
                armed = peaks[idx] > bands[idx]
                if crossed and armed:
                    if dense is None:
                        dense = sol.dense_output()
                    geval = make_geval(idx, dense)
                    xs = np.linspace(sol.t_old, sol.t, _SUBSCAN + 2)
                    gs = np.array([geval(x) for x in xs])
                    gs[0], gs[-1] = a, b
                    before = a
                    for r in _locate_roots(geval, xs, gs, xtol):
                        if y_break is not None and r >= y_break:
                            continue
                        found.append((r, idx, _EVENT_KINDS[idx][before > 0.0]))
                        before = -before
                    peaks[idx] = abs(b)
                else:
                    peaks[idx] = max(peaks[idx], abs(b))

            found.sort(key=lambda item: (item[0], item[1]))
            for r, _, kind in found:
                if events and abs(r - events[-1].y_star) <= xtol \
                        and kind is events[-1].kind:
                    continue
                u_r = dense(r)
                state_r = SimilarityState(y=float(r), W=float(u_r[0]),
                                          Wp=float(u_r[1]), R=max(0.0, float(u_r[2])))
                events.append(EventRecord(kind=kind, y_star=float(r), state_at=state_r))
                append_sample(r, u_r)

            if y_break is not None:
                append_sample(y_break, dense(y_break))
                termination = Termination.BreakdownWZero
                break

            if not near_mode and abs(w_now) < NEAR_ZERO_W:
                near_mode = True
                sol.max_step = min(sol.max_step, hmax / 10.0)

            append_sample(sol.t, sol.y)
            g_prev = g_now

    arr = np.array(states)
    return SolutionTrace(
        ys=np.array(ys), Ws=arr[:, 0], Wps=arr[:, 1],
        Rs=np.maximum(arr[:, 2], 0.0),
        pressure=pressure, events=tuple(events), termination=termination,
    )


def fixed_step_rk4(start: SimilarityState, pressure: PressureFlag,
                   h: float, y_end: float) -> SolutionTrace:
    """Classical fixed-step RK4 over [start.y, y_end]; h must tile the span.

    No adaptivity and no event detection: this is the order-verification
    oracle.  SingularEvaluation from the right-hand side propagates.
    """
    span = y_end - start.y
    if not h > 0.0 or h > span:
        raise BadStep(f"h={h} does not fit span {span}")
    n = round(span / h)
    if n < 1 or abs(n * h - span) > 1e-9 * max(1.0, abs(span)):
        raise BadStep(f"h={h} does not divide span {span} within rounding")
    h = span / n

    def deriv(x, u):
        state = SimilarityState(y=x, W=u[0], Wp=u[1], R=max(0.0, u[2]))
        d = rhs(state, pressure)
        return np.array([d.dW, d.dWp, d.dR])

    x = start.y
    u = np.array([start.W, start.Wp, start.R], dtype=float)
    ys = [x]
    states = [u.copy()]
    for _ in range(n):
        k1 = deriv(x, u)
        k2 = deriv(x + 0.5 * h, u + 0.5 * h * k1)
        k3 = deriv(x + 0.5 * h, u + 0.5 * h * k2)
        k4 = deriv(x + h, u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x += h
        ys.append(x)
        states.append(u.copy())

    arr = np.array(states)
    return SolutionTrace(ys=np.array(ys), Ws=arr[:, 0], Wps=arr[:, 1],
                         Rs=np.maximum(arr[:, 2], 0.0), pressure=pressure)


def _centered_derivative(x, f):
    """Second-order first derivative at interior points of a nonuniform grid."""
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    return (-h2 / (h1 * (h1 + h2)) * f[:-2]
            + (h2 - h1) / (h1 * h2) * f[1:-1]
            + h1 / (h2 * (h1 + h2)) * f[2:])


def residual(trace: SolutionTrace, pressure: PressureFlag) -> float:
    """Max scaled residual of the implicit equations along a trace.

    Both equations are evaluated at interior samples with centered finite
    differences supplying R' and W''.  Small only when the trace is dense:
    the bound is the differentiation truncation error ~ (local spacing /
    y-scale)^2, not the integrator tolerance.
    """
    if len(trace) < 3:
        raise ValueError("residual needs at least 3 samples")
    y = trace.ys
    W, Wp, R = trace.Ws, trace.Wps, trace.Rs
    A = pressure.A

    Rp = _centered_derivative(y, R)
    Wpp = _centered_derivative(y, Wp)

    yi = y[1:-1]
    Wi, Wpi, Ri = W[1:-1], Wp[1:-1], R[1:-1]
    Hi = Wpi * yi + 3.0 * Wi + 1.0

    lhs1 = Rp * Wi * yi
    rhs1 = -Ri * Hi
    scale1 = np.maximum(1.0, np.maximum(np.abs(lhs1), np.abs(rhs1)))
    res1 = np.abs(lhs1 - rhs1) / scale1

    Wyi = Wi * yi
    t_visc = 0.5 * Wyi * Wyi * (Wpi * yi + Wi + 1.0 - Ri)
    t_sq = (Wpi * yi + 1.0) ** 2
    t_lin = 4.0 * Wi + 3.0 * Wi * Wi
    t_prs = -0.5 * A * Hi
    lhs2 = Wpp * Wi * yi * yi
    rhs2 = t_visc + t_sq + t_lin + t_prs
    scale2 = np.maximum(1.0, np.abs(t_visc) + np.abs(t_sq) + np.abs(t_lin)
                        + np.abs(t_prs) + np.abs(lhs2))
    res2 = np.abs(lhs2 - rhs2) / scale2

    return float(max(res1.max(), res2.max()))
