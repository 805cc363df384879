"""First-order similarity system without viscosity, and its sonic point.

Dropping the viscous term reduces the system to first order in (W, R).  With
pressure (A = 1) eliminating W' gives

    R' = R W y (R + 2W) / (1 - (Wy)^2),

so classical solutions break down on the sonic set 1 - (Wy)^2 = 0 unless
R + 2W vanishes there (the Larson-Penston throughput condition).  The
integrator stops just short of the sonic set, reports the defect R + 2W, and
classifies the trajectory.  Without pressure (A = 0) there is no sonic
denominator; the only degeneracy is Wy -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .errors import SingularEvaluation, SonicSingular
from .similarity import BREAKDOWN_THRESHOLD, PressureFlag, Termination

#: |1 - (Wy)^2| at every reported sonic location is at most this
SONIC_LOCATOR_TOL = 1e-8

#: the integrator stops where 1 - (Wy)^2 falls to this (half the locator tol),
#: which also catches blow-up trajectories that approach without crossing
_SONIC_APPROACH = 5e-9

#: a run that stalls (step underflow) with 1-(Wy)^2 below this is treated as
#: sonic contact; square-root-type approaches stall near sqrt(eps) ~ 1e-8 in
#: double precision, so they cannot march down to _SONIC_APPROACH
_SONIC_CONTACT = 1e-6

#: default |R + 2W| below which a sonic hit counts as Larson-Penston
LP_DEFECT_TOL = 1e-4

_SUBSCAN = 8


@dataclass(frozen=True)
class InviscidState:
    """Phase point (W, R) of the first-order system at coordinate y."""

    y: float
    W: float
    R: float

    def __post_init__(self):
        if self.y <= 0.0:
            raise ValueError(f"y must be > 0, got {self.y}")
        if self.R < 0.0:
            raise ValueError(f"R must be >= 0, got {self.R}")


class SonicClass(Enum):
    LarsonPenstonCandidate = "LarsonPenstonCandidate"
    BlowUp = "BlowUp"


@dataclass(frozen=True)
class SonicReport:
    """Located sonic point: position, LP defect R + 2W, and classification."""

    y_bar: float
    lp_defect: float
    classification: SonicClass

    def to_json(self) -> dict:
        return {"y_bar": self.y_bar, "lp_defect": self.lp_defect,
                "classification": self.classification.value}


@dataclass(frozen=True)
class InviscidTrace:
    """Sampled (W, R) trajectory with termination tag and optional sonic hit."""

    ys: np.ndarray
    Ws: np.ndarray
    Rs: np.ndarray
    pressure: PressureFlag
    termination: Termination = Termination.ReachedEnd
    sonic: SonicReport | None = None

    def __post_init__(self):
        for name in ("ys", "Ws", "Rs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.ys) and not np.all(np.diff(self.ys) > 0.0):
            raise ValueError("sample ys must be strictly increasing")

    def __len__(self) -> int:
        return len(self.ys)


def _components(y: float, W: float, R: float, A: int) -> tuple[float, float]:
    """Raw (dW, dR); no validity guards."""
    if R == 0.0:
        return -(3.0 * W + 1.0) / y, 0.0
    if A == 1:
        s = 1.0 - (W * y) ** 2
        dR = R * W * y * (R + 2.0 * W) / s
        dW = (-((W * y) ** 2) * (R + 2.0 * W) / s - (3.0 * W + 1.0)) / y
    else:
        dR = -(R / (W * y)) * (R + 2.0 * W)
        dW = (R - W - 1.0) / y
    return dW, dR


def rhs_inviscid(state: InviscidState, pressure: PressureFlag
                 ) -> tuple[float, float]:
    """Derivatives (dW, dR) of the first-order system at `state`.

    dW is recovered from the mass equation after eliminating R'; the vacuum
    R = 0 is propagated with dR = 0 and the mass-equation closure
    dW = -(3W + 1)/y.  Raises SonicSingular on the sonic set (A = 1) and
    SingularEvaluation at Wy ~ 0 (A = 0).
    """
    if pressure.A == 1:
        s = 1.0 - (state.W * state.y) ** 2
        if abs(s) <= SONIC_LOCATOR_TOL:
            raise SonicSingular(f"1-(Wy)^2 = {s:.3e} at y={state.y}")
    elif abs(state.W) <= BREAKDOWN_THRESHOLD:
        raise SingularEvaluation(f"W={state.W} at the breakdown threshold")
    return _components(state.y, state.W, state.R, pressure.A)


def integrate_inviscid(start: InviscidState, pressure: PressureFlag, cfg,
                       lp_tol: float = LP_DEFECT_TOL
                       ) -> tuple[InviscidTrace, SonicReport | None]:
    """Integrate (W, R) from `start` to cfg.y_end (an IntegratorConfig).

    For A = 1 the run stops where 1 - (Wy)^2 falls to half the locator
    tolerance; the sonic report carries the defect R + 2W there and the
    classification against lp_tol.  For A = 0 the run stops when W reaches
    the breakdown threshold.
    """
    A = pressure.A
    h0, hmax = cfg.resolved(start.y)

    def f(x, u):
        return np.array(_components(x, float(u[0]), float(u[1]), A))

    sol = RK45(f, start.y, np.array([start.W, start.R], dtype=float),
               t_bound=cfg.y_end, rtol=cfg.rel_tol, atol=cfg.abs_tol,
               first_step=h0, max_step=hmax)

    ys = [start.y]
    states = [np.array([start.W, start.R], dtype=float)]
    termination = Termination.ReachedEnd
    sonic: SonicReport | None = None
    steps = 0

    def append_sample(x, u):
        if x > ys[-1]:
            ys.append(float(x))
            states.append(np.asarray(u, dtype=float))

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

            dense = sol.dense_output()
            xs = np.linspace(sol.t_old, sol.t, _SUBSCAN + 2)
            U = dense(xs)
            W = U[0]
            xtol = cfg.rel_tol * max(1.0, sol.t)

            y_stop = None
            if A == 1:
                gs = 1.0 - (W * xs) ** 2 - _SONIC_APPROACH

                def geval(x):
                    return 1.0 - (float(dense(x)[0]) * x) ** 2 - _SONIC_APPROACH
            else:
                gs = np.abs(W) - BREAKDOWN_THRESHOLD

                def geval(x):
                    return abs(float(dense(x)[0])) - BREAKDOWN_THRESHOLD
            if np.any(gs <= 0.0):
                for i in range(len(xs) - 1):
                    if gs[i] > 0.0 >= gs[i + 1]:
                        y_stop = brentq(geval, float(xs[i]), float(xs[i + 1]),
                                        xtol=min(xtol, 1e-12))
                        break
                if y_stop is None:
                    y_stop = float(xs[int(np.argmax(gs <= 0.0))])

            if y_stop is not None:
                u_stop = dense(y_stop)
                append_sample(y_stop, u_stop)
                if A == 1:
                    defect = float(u_stop[1]) + 2.0 * float(u_stop[0])
                    cls = (SonicClass.LarsonPenstonCandidate
                           if abs(defect) <= lp_tol else SonicClass.BlowUp)
                    sonic = SonicReport(y_bar=float(y_stop), lp_defect=defect,
                                        classification=cls)
                    termination = Termination.SonicStop
                else:
                    termination = Termination.BreakdownWZero
                break

            append_sample(sol.t, sol.y)

    # blow-up runs stall just short of the sonic set (the approach is
    # square-root-type in y, unresolvable below ~sqrt(machine eps)); project
    # the contact state onto the sonic relation W = -1/y and classify there
    if sonic is None and A == 1 and termination is Termination.StepFailure:
        w_last, r_last = float(states[-1][0]), float(states[-1][1])
        y_last = float(ys[-1])
        s_last = 1.0 - (w_last * y_last) ** 2
        if abs(s_last) <= _SONIC_CONTACT:
            w_proj = (1.0 if w_last > 0 else -1.0) / y_last
            defect = r_last + 2.0 * w_proj
            cls = (SonicClass.LarsonPenstonCandidate
                   if abs(defect) <= lp_tol else SonicClass.BlowUp)
            sonic = SonicReport(y_bar=y_last, lp_defect=defect,
                                classification=cls)
            termination = Termination.SonicStop

    arr = np.array(states)
    trace = InviscidTrace(ys=np.array(ys), Ws=arr[:, 0],
                          Rs=np.maximum(arr[:, 1], 0.0),
                          pressure=pressure, termination=termination,
                          sonic=sonic)
    return trace, sonic
