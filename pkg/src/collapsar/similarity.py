"""Similarity-variable form of the collapsing-flow equations.

The radial flow (rho(r, t), u(r, t)) is sought in self-similar form

    rho(r, t) = R(y) / t**2,    u(r, t) = V(y),    y = r / t,

with the reduced velocity W(y) = (V(y) - y) / y.  In these variables the
flow reduces to a second-order ODE system for (W, W', R); this module holds
the state records, the explicit right-hand side, the initial-data map from
physical surface quantities, and the gravity reconstructions.  Everything
here is a pure function of its arguments: no module state, safe to call
concurrently.

Pressure is p(rho) = A*rho with A = 1 (isothermal) or A = 0 (no pressure).
For A = 1 the pair R = 2/y**2, W = -1 solves the system exactly and is used
throughout the tests as a closed-form reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import OutOfRange, SingularEvaluation

#: |W| (and y) below this count as a breakdown of the reduced system.
BREAKDOWN_THRESHOLD = 1e-12


@dataclass(frozen=True)
class PressureFlag:
    """Equation of state selector: p(rho) = A*rho with A in {0, 1}."""

    A: int

    def __post_init__(self):
        if self.A not in (0, 1):
            raise ValueError(f"A must be 0 or 1, got {self.A!r}")


VANISHING = PressureFlag(0)
ISOTHERMAL = PressureFlag(1)


@dataclass(frozen=True)
class SimilarityState:
    """Phase point (W, W', R) of the reduced system at coordinate y.

    y : similarity coordinate r/t, > 0
    W : reduced velocity (V - y)/y; W = -1 means zero physical velocity,
        W < -1 means inflow
    Wp : dW/dy
    R : rescaled density t**2 * rho, >= 0
    """

    y: float
    W: float
    Wp: float
    R: float

    def __post_init__(self):
        vals = (self.y, self.W, self.Wp, self.R)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite state {vals}")
        if self.y <= 0.0:
            raise ValueError(f"y must be > 0, got {self.y}")
        if self.R < 0.0:
            raise ValueError(f"R must be >= 0, got {self.R}")

    @property
    def V(self) -> float:
        """Physical velocity V = y*(W + 1)."""
        return self.y * (self.W + 1.0)


@dataclass(frozen=True)
class PhysicalInit:
    """Physical data on the core surface r = eps*t.

    v_tilde : surface velocity slope (u = v_tilde*eps there), < 0
    v1_tilde : surface velocity gradient (t*du/dr there), < 0
    d1 : surface density coefficient (t**2*rho = d1/eps there), > 0
    eps : core half-angle, small and > 0
    """

    v_tilde: float
    v1_tilde: float
    d1: float
    eps: float

    def __post_init__(self):
        if not self.v_tilde < 0.0:
            raise ValueError(f"v_tilde must be < 0, got {self.v_tilde}")
        if not self.v1_tilde < 0.0:
            raise ValueError(f"v1_tilde must be < 0, got {self.v1_tilde}")
        if not self.d1 > 0.0:
            raise ValueError(f"d1 must be > 0, got {self.d1}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be > 0, got {self.eps}")

    @property
    def starts_with_rising_w(self) -> bool:
        """True when v1_tilde > v_tilde, i.e. W'(eps) > 0.

        Accepted but worth flagging: W' turns negative almost immediately and
        the run then behaves like the standard collapsing family.
        """
        return self.v1_tilde - self.v_tilde > 0.0


@dataclass(frozen=True)
class DerivativeTriple:
    """(dW/dy, dW'/dy, dR/dy) returned by the right-hand side."""

    dW: float
    dWp: float
    dR: float


class EventKind(Enum):
    """Qualitative events along a W(y) profile.

    InflectionDown : W'' = 0 crossing from concave to convex (first is y_c)
    VelocityMin    : W' = 0 with W turning from decreasing to increasing (z)
    InflectionUp   : W'' = 0 crossing from convex to concave (y_d)
    CrossMinusOne  : W = -1 crossing (y_e)
    WpSignChange   : W' = 0 with W turning from increasing to decreasing (y_f)
    """

    InflectionDown = "InflectionDown"
    VelocityMin = "VelocityMin"
    InflectionUp = "InflectionUp"
    CrossMinusOne = "CrossMinusOne"
    WpSignChange = "WpSignChange"


class Termination(Enum):
    """How an integration run ended."""

    ReachedEnd = "ReachedEnd"
    BreakdownWZero = "BreakdownWZero"
    StepFailure = "StepFailure"
    BudgetExhausted = "BudgetExhausted"
    SonicStop = "SonicStop"


@dataclass(frozen=True)
class EventRecord:
    """A located event: kind, coordinate, and the interpolated state there."""

    kind: EventKind
    y_star: float
    state_at: SimilarityState


@dataclass(frozen=True)
class SolutionTrace:
    """A monotone-in-y sampled solution of the reduced system.

    Samples are stored as parallel read-only arrays (ys strictly increasing);
    `samples` materializes them as SimilarityState records on demand.  The
    sample set is every accepted integrator step plus located event points.
    """

    ys: np.ndarray
    Ws: np.ndarray
    Wps: np.ndarray
    Rs: np.ndarray
    pressure: PressureFlag
    events: tuple[EventRecord, ...] = ()
    termination: Termination = Termination.ReachedEnd

    def __post_init__(self):
        for name in ("ys", "Ws", "Wps", "Rs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.ys)
        if any(len(getattr(self, name)) != n for name in ("Ws", "Wps", "Rs")):
            raise ValueError("sample arrays must have equal length")
        if n and not np.all(np.diff(self.ys) > 0.0):
            raise ValueError("sample ys must be strictly increasing")
        if any(self.events[i].y_star > self.events[i + 1].y_star
               for i in range(len(self.events) - 1)):
            raise ValueError("events must be sorted by y")

    def __len__(self) -> int:
        return len(self.ys)

    @cached_property
    def samples(self) -> tuple[SimilarityState, ...]:
        return tuple(
            SimilarityState(y=float(y), W=float(w), Wp=float(wp), R=float(r))
            for y, w, wp, r in zip(self.ys, self.Ws, self.Wps, self.Rs)
        )

    def state_at(self, index: int) -> SimilarityState:
        return SimilarityState(
            y=float(self.ys[index]), W=float(self.Ws[index]),
            Wp=float(self.Wps[index]), R=float(self.Rs[index]),
        )

    def first_event(self, kind: EventKind) -> EventRecord | None:
        for ev in self.events:
            if ev.kind is kind:
                return ev
        return None

    @property
    def H(self) -> np.ndarray:
        """H = W'y + 3W + 1 sampled along the trace."""
        return self.Wps * self.ys + 3.0 * self.Ws + 1.0

    @property
    def Vs(self) -> np.ndarray:
        """Physical velocity V = y(W + 1) sampled along the trace."""
        return self.ys * (self.Ws + 1.0)


def rhs_components(y: float, W: float, Wp: float, R: float, A: int
                   ) -> tuple[float, float, float]:
    """Explicit right-hand side on raw floats; no validity guards.

    Used by the integrators, which must be able to probe slightly past the
    breakdown threshold while locating it.
    """
    Wy = W * y
    Hy = Wp * y + 3.0 * W + 1.0
    dR = -R * Hy / Wy
    num = (0.5 * Wy * Wy * (Wp * y + W + 1.0 - R)
           + (Wp * y + 1.0) ** 2
           + 4.0 * W + 3.0 * W * W
           - 0.5 * A * Hy)
    dWp = num / (W * y * y)
    return Wp, dWp, dR


def rhs(state: SimilarityState, pressure: PressureFlag) -> DerivativeTriple:
    """Derivatives (dW, dW', dR) of the reduced system at `state`.

    The canonical explicit form (obtained by dividing the system through by
    Wy and Wy**2):

        dR  = -R (W'y + 3W + 1) / (W y)
        dW' = [ (Wy)^2 (W'y + W + 1 - R)/2 + (W'y + 1)^2 + 4W + 3W^2
                - (A/2)(W'y + 3W + 1) ] / (W y^2)
        dW  = W'

    Raises SingularEvaluation when |W| or y is at or below the breakdown
    threshold: the reduced system degenerates only where W reaches zero.
    """
    if abs(state.W) <= BREAKDOWN_THRESHOLD or state.y <= BREAKDOWN_THRESHOLD:
        raise SingularEvaluation(
            f"rhs evaluated at y={state.y!r}, W={state.W!r} "
            f"(threshold {BREAKDOWN_THRESHOLD})")
    dW, dWp, dR = rhs_components(state.y, state.W, state.Wp, state.R, pressure.A)
    return DerivativeTriple(dW=dW, dWp=dWp, dR=dR)


def map_initial(init: PhysicalInit) -> SimilarityState:
    """Map physical surface data to the reduced state at y = eps:

    W(eps) = v_tilde - 1,  W'(eps) = (v1_tilde - v_tilde)/eps,  R(eps) = d1/eps.
    """
    return SimilarityState(
        y=init.eps,
        W=init.v_tilde - 1.0,
        Wp=(init.v1_tilde - init.v_tilde) / init.eps,
        R=init.d1 / init.eps,
    )


def H(state: SimilarityState) -> float:
    """The balance H = W'y + 3W + 1; H < 0 drives density decay."""
    return state.Wp * state.y + 3.0 * state.W + 1.0


def reconstruct(state: SimilarityState, t: float) -> tuple[float, float, float]:
    """Physical fields (rho, u, r) at time t > 0 from a similarity state."""
    if not t > 0.0:
        raise ValueError(f"t must be > 0, got {t}")
    rho = state.R / (t * t)
    u = state.y * (state.W + 1.0)
    r = state.y * t
    return rho, u, r


def gravity_similarity(state: SimilarityState) -> float:
    """t-free gravity factor -R W y^3 (the physical g(r,t) is t times this)."""
    return -state.R * state.W * state.y ** 3


def gravity_quadrature(trace: SolutionTrace, y: float,
                       core_term: float | None = None) -> float:
    """Gravity at y by trapezoid quadrature of R a^2 over [eps, y].

    The contribution of the region below the trace's first sample is
    `core_term`; by default it is the identity value -R W y^3 at that sample,
    which is the closure under which the outer profile was derived.  Along an
    exact trajectory the result agrees with gravity_similarity because
    (R W y^3)' = -R y^2.
    """
    if len(trace) == 0:
        raise OutOfRange("empty trace")
    ys, Rs = trace.ys, trace.Rs
    if y < ys[0] or y > ys[-1]:
        raise OutOfRange(f"y={y} outside trace range [{ys[0]}, {ys[-1]}]")
    if core_term is None:
        core_term = gravity_similarity(trace.state_at(0))
    integrand = Rs * ys * ys
    i = int(np.searchsorted(ys, y, side="right"))
    total = core_term + float(np.trapezoid(integrand[:i], ys[:i]))
    if i < len(ys) and y > ys[i - 1]:
        # partial last segment, linear in R
        f_y = float(np.interp(y, ys, integrand))
        total += 0.5 * (integrand[i - 1] + f_y) * (y - ys[i - 1])
    return total
