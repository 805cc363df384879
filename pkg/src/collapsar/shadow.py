"""Shadow-wave core model and weak-residual scaling probes.

The core is the space-time cone r < eps*t carrying the intermediate state

    rho_core(t) = alpha(t) * eps**-3,    u_core(t) = beta(t) * eps**nu,

with nu >= 1.  The amplitude alpha obeys (t/3) alpha' + alpha (1 - beta) = 0
when nu = 1 and (t/3) alpha' + alpha = 0 when nu > 1; in the latter case the
core mass M(t) = (4/3) pi alpha(t) t^3 is constant.  The residual functions
here are the reduced forms of the weak-formulation convergence conditions:
for a matched self-similar exterior they shrink like eps**2 (mass) and eps
(momentum), which the scaling sweep verifies by log-log fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad, simpson

from .errors import CollapsarError
from .similarity import PhysicalInit, PressureFlag, Termination, map_initial


class SweepAborted(CollapsarError):
    """An integration inside a sweep did not reach its endpoint.

    Carries the rows collected so far in `partial`.
    """

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class CoreState:
    """Interior description of the core: amplitudes, velocity exponent, eps.

    alpha and alpha_prime are callables of t; beta=None means beta == 0.
    States built by solve_alpha satisfy the alpha balance by construction;
    hand-built states may violate it (the residual probes rely on that).
    """

    nu: float
    alpha: Callable[[float], float]
    alpha_prime: Callable[[float], float]
    beta: Callable[[float], float] | None
    eps: float

    def __post_init__(self):
        if self.nu < 1.0:
            raise ValueError(f"nu must be >= 1, got {self.nu}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be > 0, got {self.eps}")

    def beta_at(self, t: float) -> float:
        return 0.0 if self.beta is None else float(self.beta(t))


def solve_alpha(nu: float, beta: Callable[[float], float] | None,
                alpha0: float, t0: float, t1: float,
                eps: float = 1e-2) -> CoreState:
    """Core amplitude alpha(t) on [t0, t1] solving its balance equation.

    For nu > 1 (or beta absent) the closed form alpha0*(t0/t)**3; for nu = 1
    the quadrature form alpha0*exp(-3 int_t0^t (1-beta(s))/s ds).
    """
    if not (t0 > 0.0 and t1 > t0):
        raise ValueError(f"need 0 < t0 < t1, got t0={t0}, t1={t1}")
    if not alpha0 > 0.0:
        raise ValueError(f"alpha0 must be > 0, got {alpha0}")
    if nu > 1.0 or beta is None:
        def alpha(t):
            return alpha0 * (t0 / t) ** 3

        def alpha_prime(t):
            return -3.0 * alpha0 * t0 ** 3 / t ** 4

        return CoreState(nu=nu, alpha=alpha, alpha_prime=alpha_prime,
                         beta=beta, eps=eps)

    def alpha(t):
        val, _ = quad(lambda s: (1.0 - beta(s)) / s, t0, t, limit=200)
        return alpha0 * math.exp(-3.0 * val)

    def alpha_prime(t):
        return -3.0 * (1.0 - beta(t)) / t * alpha(t)

    return CoreState(nu=nu, alpha=alpha, alpha_prime=alpha_prime,
                     beta=beta, eps=eps)


def core_mass(core: CoreState, t: float) -> float:
    """Mass inside the cone at time t: (4/3) pi alpha(t) t^3."""
    return (4.0 / 3.0) * math.pi * core.alpha(t) * t ** 3


def _surface_values(trace) -> tuple[float, float, float, float]:
    """(eps, R, V, V') at the trace's first sample."""
    eps = float(trace.ys[0])
    R = float(trace.Rs[0])
    W = float(trace.Ws[0])
    Wp = float(trace.Wps[0])
    V = eps * (W + 1.0)
    Vp = W + 1.0 + eps * Wp
    return eps, R, V, Vp


def mass_residual(core: CoreState, trace, t: float) -> float:
    """Reduced mass-equation residual at time t:

        alpha' t / 3 + alpha (1 - beta [nu = 1]) + eps^2 rho1 u1,

    with rho1 = R(eps)/t^2 and u1 = V(eps) read off the trace surface.
    For a balance-solving alpha only the eps^2 flux term survives; for
    self-similar data it equals d1 * v_tilde * eps^2 / t^2.
    """
    eps, R, V, _ = _surface_values(trace)
    alpha = core.alpha(t)
    balance = core.alpha_prime(t) * t / 3.0 + alpha
    if core.nu == 1.0:
        balance -= alpha * core.beta_at(t)
    rho1 = R / (t * t)
    return balance + eps * eps * rho1 * V


def momentum_residual(core: CoreState, trace, t: float) -> float:
    """Reduced momentum-flux residual at time t:

        eps^2 rho1 (u1^2 - t d_r u1),

    with t d_r u1 = V'(eps) from the trace.  For self-similar data the
    dominant part is -eps d1 v1_tilde / t^2, i.e. O(eps).
    """
    eps, R, V, Vp = _surface_values(trace)
    rho1 = R / (t * t)
    return eps * eps * rho1 * (V * V - Vp)


def inviscid_admissibility(trace, eps: float) -> float:
    """eps * rho1 * u1^2 at t = 1 (the no-viscosity surface condition)."""
    _, R, V, _ = _surface_values(trace)
    return eps * R * V * V


@dataclass(frozen=True)
class ScalingFit:
    """Log-log fit of residual magnitudes against eps."""

    eps_values: tuple[float, ...]
    magnitudes: tuple[float, ...]
    slope: float
    slope_ci: float

    def __post_init__(self):
        if len(self.eps_values) != len(self.magnitudes):
            raise ValueError("eps and magnitude lists must match")
        if len(self.eps_values) < 3:
            raise ValueError("need at least 3 sweep points")
        if not all(a > b for a, b in zip(self.eps_values, self.eps_values[1:])):
            raise ValueError("eps values must be strictly decreasing")

    def to_json(self) -> dict:
        return {"eps": list(self.eps_values), "magnitude": list(self.magnitudes),
                "slope": self.slope, "fit_residual": self.slope_ci}


def fit_loglog(eps_values: Sequence[float], magnitudes: Sequence[float]
               ) -> ScalingFit:
    """Least-squares slope of log10|magnitude| against log10(eps)."""
    e = np.asarray(eps_values, dtype=float)
    m = np.abs(np.asarray(magnitudes, dtype=float))
    if np.any(m == 0.0):
        raise ValueError("zero magnitude cannot be log-fit")
    le, lm = np.log10(e), np.log10(m)
    slope, intercept = np.polyfit(le, lm, 1)
    rms = float(np.sqrt(np.mean((slope * le + intercept - lm) ** 2)))
    return ScalingFit(eps_values=tuple(float(v) for v in e),
                      magnitudes=tuple(float(v) for v in magnitudes),
                      slope=float(slope), slope_ci=rms)


@dataclass(frozen=True)
class SweepRow:
    eps: float
    u1: float
    rho1: float
    mass_res: float
    mom_res: float


def sweep_rows(init_family: Sequence[PhysicalInit], pressure: PressureFlag,
               cfg=None, jobs: int = 1) -> list[SweepRow]:
    """Per-eps surface measurements at t = 1 with a balance-solved core.

    Each family member is integrated from its own eps (members may run
    concurrently up to `jobs`).  Integration failures abort the sweep; the
    rows collected so far ride on the SweepAborted exception.
    """
    from .engine import IntegratorConfig, integrate

    inits = sorted(init_family, key=lambda i: -i.eps)

    def run_one(init: PhysicalInit) -> SweepRow:
        run_cfg = cfg if cfg is not None else IntegratorConfig(
            y_end=max(1.0, 10.0 * init.eps))
        trace = integrate(map_initial(init), pressure, run_cfg)
        if trace.termination is not Termination.ReachedEnd:
            raise SweepAborted(
                f"integration from eps={init.eps} ended with "
                f"{trace.termination.value}", [])
        core = solve_alpha(nu=2.0, beta=None, alpha0=1.0, t0=1.0, t1=10.0,
                           eps=init.eps)
        eps, R, V, _ = _surface_values(trace)
        return SweepRow(
            eps=eps, u1=abs(V), rho1=R,
            mass_res=mass_residual(core, trace, t=1.0),
            mom_res=momentum_residual(core, trace, t=1.0),
        )

    rows: list[SweepRow] = []
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_one, init) for init in inits]
            for fut in futures:
                try:
                    rows.append(fut.result())
                except SweepAborted as exc:
                    raise SweepAborted(str(exc), rows) from None
    else:
        for init in inits:
            try:
                rows.append(run_one(init))
            except SweepAborted as exc:
                raise SweepAborted(str(exc), rows) from None
    return rows


def admissibility_scaling(init_family: Sequence[PhysicalInit],
                          pressure: PressureFlag, cfg=None, jobs: int = 1,
                          ) -> tuple[ScalingFit, ScalingFit, ScalingFit, ScalingFit]:
    """Sweep eps at fixed (v_tilde, v1_tilde, d1) and fit the four scalings.

    Returns fits for |u1(eps)| (expected slope +1), R(eps) (-1), the mass
    residual with a balance-solved core (+2), and the momentum residual (+1),
    all at t = 1.
    """
    inits = sorted(init_family, key=lambda i: -i.eps)
    if len(inits) < 3:
        raise ValueError("sweep needs at least 3 eps values")
    if inits[0].eps / inits[-1].eps < 99.0:
        raise ValueError("eps sweep must span at least two decades")
    base = (inits[0].v_tilde, inits[0].v1_tilde, inits[0].d1)
    if any((i.v_tilde, i.v1_tilde, i.d1) != base for i in inits):
        raise ValueError("sweep must fix (v_tilde, v1_tilde, d1)")

    rows = sweep_rows(inits, pressure, cfg=cfg, jobs=jobs)
    eps_list = [r.eps for r in rows]
    return (
        fit_loglog(eps_list, [r.u1 for r in rows]),
        fit_loglog(eps_list, [r.rho1 for r in rows]),
        fit_loglog(eps_list, [r.mass_res for r in rows]),
        fit_loglog(eps_list, [r.mom_res for r in rows]),
    )


def inviscid_admissibility_sweep(items: Sequence[tuple[object, float]],
                                 slope_floor: float = -0.05
                                 ) -> tuple[ScalingFit, bool]:
    """Fit eps*rho1*u1^2 across an eps sweep; bounded iff slope >= slope_floor."""
    items = sorted(items, key=lambda it: -it[1])
    eps_values = [eps for _, eps in items]
    vals = [inviscid_admissibility(trace, eps) for trace, eps in items]
    fit = fit_loglog(eps_values, vals)
    return fit, fit.slope >= slope_floor


@dataclass(frozen=True)
class WeakProbe:
    """Smooth compactly supported time profile for weighted residuals.

    phi must vanish at both ends of t_support; t_a > 0.
    """

    phi: Callable[[float], float]
    t_support: tuple[float, float]
    quadrature_nodes: int = 201

    def __post_init__(self):
        t_a, t_b = self.t_support
        if not (0.0 < t_a < t_b):
            raise ValueError(f"need 0 < t_a < t_b, got {self.t_support}")
        if self.quadrature_nodes < 3:
            raise ValueError("need at least 3 quadrature nodes")
        peak = max(abs(self.phi(t)) for t in np.linspace(t_a, t_b, 33))
        bound = 1e-12 * (1.0 + peak)
        if abs(self.phi(t_a)) > bound or abs(self.phi(t_b)) > bound:
            raise ValueError("phi must vanish at the ends of its support")


def smooth_bump(t_a: float, t_b: float) -> Callable[[float], float]:
    """C-infinity bump supported on [t_a, t_b] with unit peak."""

    def phi(t):
        s = (2.0 * t - (t_a + t_b)) / (t_b - t_a)
        if abs(s) >= 1.0:
            return 0.0
        return math.exp(1.0 - 1.0 / (1.0 - s * s))

    return phi


def weighted_mass_residual(core: CoreState, trace, probe: WeakProbe) -> float:
    """int mass_residual(t) phi(t) dt over the probe support (Simpson)."""
    t_a, t_b = probe.t_support
    n = probe.quadrature_nodes
    if n % 2 == 0:
        n += 1
    ts = np.linspace(t_a, t_b, n)
    vals = np.array([mass_residual(core, trace, t) * probe.phi(t) for t in ts])
    return float(simpson(vals, x=ts))
