"""Machine checks of the qualitative theory along a finished trace.

Each check scans a SolutionTrace for one provable property of the collapsing
family (H < 0, W < -1/3, R strictly decreasing, the power-law density bound,
the -2W - R gap, tail limits, W < -1 up to the second inflection) and returns
a CheckReport: pass/fail, the first violating sample, and the smallest slack
seen.  Strict inequalities are checked with zero slack; a boundary hit
(margin exactly 0) fails and is annotated as such.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientTail
from .similarity import EventKind, SimilarityState, SolutionTrace


@dataclass(frozen=True)
class Violation:
    y: float
    state: SimilarityState
    margin: float

    @property
    def boundary(self) -> bool:
        return self.margin == 0.0


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one invariant check.

    margin is the slack of the strict inequality (positive = satisfied);
    first_violation is the earliest sample with margin <= 0.  skipped marks
    checks whose precondition did not apply (not failures).  detail carries
    free-form notes such as the operational z or the first positive-gap y.
    """

    name: str
    passed: bool
    first_violation: Violation | None = None
    margin_min: float | None = None
    skipped: bool = False
    detail: str | None = None

    def to_json(self) -> dict:
        fv = None
        if self.first_violation is not None:
            v = self.first_violation
            fv = {"y": v.y, "W": v.state.W, "Wp": v.state.Wp, "R": v.state.R,
                  "margin": v.margin}
            if v.boundary:
                fv["boundary"] = True
        out = {"name": self.name, "passed": self.passed,
               "first_violation": fv, "margin_min": self.margin_min}
        if self.skipped:
            out["skipped"] = True
        if self.detail is not None:
            out["detail"] = self.detail
        return out


def _scan(name: str, trace: SolutionTrace, margins: np.ndarray,
          indices: np.ndarray | None = None, detail: str | None = None
          ) -> CheckReport:
    """Build a report from per-sample margins (margin > 0 means satisfied)."""
    if indices is None:
        indices = np.arange(len(margins))
    if len(margins) == 0:
        return CheckReport(name=name, passed=True, margin_min=None,
                           skipped=True, detail=detail or "no samples in scope")
    bad = np.flatnonzero(~(margins > 0.0))
    margin_min = float(np.min(margins))
    if len(bad) == 0:
        return CheckReport(name=name, passed=True, margin_min=margin_min,
                           detail=detail)
    i = int(indices[bad[0]])
    viol = Violation(y=float(trace.ys[i]), state=trace.state_at(i),
                     margin=float(margins[bad[0]]))
    return CheckReport(name=name, passed=False, first_violation=viol,
                       margin_min=margin_min, detail=detail)


def check_H_negative(trace: SolutionTrace) -> CheckReport:
    """H = W'y + 3W + 1 < 0 at every sample."""
    return _scan("H_negative", trace, -trace.H)


def check_W_bound(trace: SolutionTrace) -> CheckReport:
    """W < -1/3 at every sample."""
    return _scan("W_below_minus_third", trace, -trace.Ws - 1.0 / 3.0)


def check_R_monotone(trace: SolutionTrace) -> CheckReport:
    """R strictly decreasing across consecutive samples."""
    margins = trace.Rs[:-1] - trace.Rs[1:]
    return _scan("R_strictly_decreasing", trace, margins,
                 indices=np.arange(1, len(trace)))


def decay_exponent(W_eps: float) -> float:
    """Exponent of the density bound: -(3 + 1/W(eps))."""
    return -(3.0 + 1.0 / W_eps)


def operational_z(trace: SolutionTrace) -> int | None:
    """Index of the first sample where W >= W(eps) or W' >= W'(eps).

    This is the right end of the interval on which the density bound is
    proved; on collapsing runs it sits between the first inflection and the
    velocity minimum.  None when the whole trace stays below the entry values.
    """
    below = (trace.Ws < trace.Ws[0]) & (trace.Wps < trace.Wps[0])
    idx = np.flatnonzero(~below[1:])
    return int(idx[0]) + 1 if len(idx) else None


def check_decay_bound(trace: SolutionTrace) -> CheckReport:
    """R(y) < R(eps) * (y/eps)^(-(3 + 1/W(eps))) strictly on (eps, z)."""
    eps = float(trace.ys[0])
    p = decay_exponent(float(trace.Ws[0]))
    zi = operational_z(trace)
    if zi is None:
        zi = len(trace)
        detail = f"exponent={p:.6g}; z beyond trace end"
    else:
        detail = f"exponent={p:.6g}; z={float(trace.ys[zi]):.6g}"
    idx = np.arange(1, zi)
    bound = trace.Rs[0] * (trace.ys[idx] / eps) ** p
    return _scan("density_decay_bound", trace, bound - trace.Rs[idx],
                 indices=idx, detail=detail)


def check_gap(trace: SolutionTrace, from_y: float | None = None) -> CheckReport:
    """-2W - R > 0 at every sample with y >= from_y.

    With from_y=None the start is auto-detected as the first sample where the
    gap is positive (the density bound guarantees this happens); that y is
    reported in the detail.  Fails outright if the gap never turns positive.
    """
    gap = -2.0 * trace.Ws - trace.Rs
    if from_y is None:
        pos = np.flatnonzero(gap > 0.0)
        if len(pos) == 0:
            worst = int(np.argmax(gap)) if len(gap) else 0
            viol = Violation(y=float(trace.ys[worst]), state=trace.state_at(worst),
                             margin=float(gap[worst]) if len(gap) else 0.0)
            return CheckReport(name="gap_positive", passed=False,
                               first_violation=viol,
                               margin_min=float(gap.max()) if len(gap) else None,
                               detail="gap -2W-R never positive")
        start = int(pos[0])
        detail = f"first positive gap at y={float(trace.ys[start]):.6g}"
    else:
        start = int(np.searchsorted(trace.ys, from_y, side="left"))
        detail = f"checked from y={from_y:.6g}"
    idx = np.arange(start, len(trace))
    return _scan("gap_positive", trace, gap[idx], indices=idx, detail=detail)


def check_asymptotics(trace: SolutionTrace, tail_fraction: float = 0.25,
                      tol_W: float = 0.5, tol_R: float = 0.1,
                      tol_Wy: float = 0.5) -> CheckReport:
    """Tail behavior: |W+1| shrinking in trend and small at the end, R and
    |W'y| small over the tail window.

    The theory gives limits without rates, hence the loose default
    tolerances.  Raises InsufficientTail when the window holds < 10 samples.
    """
    y_end = float(trace.ys[-1])
    lo = y_end * (1.0 - tail_fraction)
    idx = np.flatnonzero(trace.ys >= lo)
    if len(idx) < 10:
        raise InsufficientTail(
            f"tail window [{lo:.6g}, {y_end:.6g}] holds {len(idx)} samples (< 10)")
    w1 = np.abs(trace.Ws[idx] + 1.0)
    half = len(idx) // 2
    trend_ok = np.mean(w1[half:]) <= np.mean(w1[:half]) * 1.01 + 1e-12
    margins = np.concatenate([
        [tol_W - w1[-1]],
        tol_R - trace.Rs[idx],
        tol_Wy - np.abs(trace.Wps[idx] * trace.ys[idx]),
    ])
    indices = np.concatenate([[idx[-1]], idx, idx])
    report = _scan("tail_asymptotics", trace, margins, indices=indices,
                   detail=f"window [{lo:.6g}, {y_end:.6g}], {len(idx)} samples")
    if not trend_ok and report.passed:
        worst = int(idx[half + int(np.argmax(w1[half:]))])
        viol = Violation(y=float(trace.ys[worst]), state=trace.state_at(worst),
                         margin=0.0)
        return CheckReport(name=report.name, passed=False, first_violation=viol,
                           margin_min=report.margin_min,
                           detail="|W+1| trend not decreasing over the tail")
    return report


def check_W_below_minus_one_until_yd(trace: SolutionTrace) -> CheckReport:
    """W < -1 at every sample up to the second inflection y_d.

    Skipped (with a note) when the trace has no InflectionUp event.
    """
    ev = trace.first_event(EventKind.InflectionUp)
    if ev is None:
        return CheckReport(name="W_below_minus_one_until_yd", passed=True,
                           skipped=True, detail="no InflectionUp event in trace")
    idx = np.flatnonzero(trace.ys <= ev.y_star)
    margins = -trace.Ws[idx] - 1.0
    return _scan("W_below_minus_one_until_yd", trace, margins, indices=idx,
                 detail=f"y_d={ev.y_star:.6g}")


def run_suite(trace: SolutionTrace) -> list[CheckReport]:
    """All checks with default parameters; aggregate passes iff every
    non-skipped report passes."""
    reports = [
        check_H_negative(trace),
        check_W_bound(trace),
        check_R_monotone(trace),
        check_decay_bound(trace),
        check_gap(trace),
    ]
    try:
        reports.append(check_asymptotics(trace))
    except InsufficientTail as exc:
        reports.append(CheckReport(name="tail_asymptotics", passed=True,
                                   skipped=True, detail=str(exc)))
    reports.append(check_W_below_minus_one_until_yd(trace))
    return reports


def suite_passed(reports: list[CheckReport]) -> bool:
    return all(r.passed or r.skipped for r in reports)
