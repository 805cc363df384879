"""Radial flow evolved in similarity coordinates as a stationarity probe.

With y = r/t, tau = ln(t/t0), rho_hat = t^2 rho and u_hat = u, the radial
system becomes autonomous in tau:

    d_tau rho_hat = -d_y(rho_hat (u_hat - y)) + rho_hat - (2/y) rho_hat u_hat

    d_tau m_hat   = -d_y(m_hat (u_hat - y)) + m_hat - (2/y) m_hat u_hat
                    - A d_y rho_hat
                    + 2 [ d_y rho_hat d_y u_hat
                          + rho_hat (d_yy u_hat + (2/y) d_y u_hat - (2/y^2) u_hat) ]
                    - g_hat rho_hat / y^2

with m_hat = rho_hat u_hat and g_hat(y) = g_inner + int_{y_min}^y a^2 rho_hat da.
The viscosity mu = t rho makes the diffusivity the constant 2 in tau time.  A
self-similar profile (R(y), V(y)) is a fixed point, so evolving the
interpolated profile and watching the deviation grow probes its stability.

Scheme: the equations are marched in the spherical-shell variables
q = y^2 rho_hat and p = y^2 m_hat, for which the radial divergence
(1/y^2) d_y(y^2 .) telescopes:

    d_tau q = -d_y(q (u_hat - y)) - q
    d_tau p = -d_y(p (u_hat - y)) - p - A y^2 d_y rho_hat
              + 2 y^2 [ ... viscous operator ... ] - g_hat rho_hat

with first-order upwind convective fluxes, centered differences for the
pressure gradient and the viscous operator, cumulative trapezoid for
gravity, and forward Euler in tau under a dual (advective + diffusive) CFL
bound.  Both boundaries are Dirichlet, pinned at the initializing profile.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import CflViolation, NonFinite, OutOfRange
from .similarity import PressureFlag, SolutionTrace

#: coefficient of d_yy u_hat after the transform (mu = t rho, tau time)
DIFFUSIVITY = 2.0


@dataclass(frozen=True)
class PdeConfig:
    """Grid, CFL and horizon for a probe run.

    g_inner overrides the inner gravity constant (mass below y_min in
    similarity units); by default it is taken from the initializing profile
    via the identity rho_hat (y - u_hat) y^2 at the inner boundary.
    """

    cells: int = 400
    cfl: float = 0.4
    tau_end: float = 1.0
    y_min: float = 0.05
    y_max: float = 5.0
    bc_inner: str = "profile"
    bc_outer: str = "profile"
    g_inner: float | None = None

    def __post_init__(self):
        if self.cells < 16:
            raise ValueError(f"cells must be >= 16, got {self.cells}")
        if not (0.0 < self.cfl <= 0.9):
            raise ValueError(f"cfl must be in (0, 0.9], got {self.cfl}")
        if not (0.0 < self.y_min < self.y_max):
            raise ValueError(f"need 0 < y_min < y_max, got "
                             f"[{self.y_min}, {self.y_max}]")
        if self.tau_end <= 0.0:
            raise ValueError(f"tau_end must be > 0, got {self.tau_end}")
        for side, bc in (("bc_inner", self.bc_inner), ("bc_outer", self.bc_outer)):
            if bc != "profile":
                raise ValueError(f"{side}: only 'profile' Dirichlet data "
                                 f"is supported, got {bc!r}")


@dataclass(frozen=True)
class RadialField:
    """Discrete (rho_hat, u_hat) on a y grid at log-time tau.

    Carries the pressure flag, the frozen inner gravity constant, the pinned
    Dirichlet boundary values, and a counter of negative-density clips.
    """

    grid: np.ndarray
    rho_hat: np.ndarray
    u_hat: np.ndarray
    tau: float
    pressure: PressureFlag
    g_inner: float
    bc_values: tuple[float, float, float, float]  # rho_lo, u_lo, rho_hi, u_hi
    clip_count: int = 0

    def __post_init__(self):
        for name in ("grid", "rho_hat", "u_hat"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.diff(self.grid) > 0.0):
            raise ValueError("grid must be strictly increasing")
        if len(self.rho_hat) != len(self.grid) or len(self.u_hat) != len(self.grid):
            raise ValueError("field arrays must match the grid length")
        if np.any(np.isfinite(self.rho_hat) & (self.rho_hat < 0.0)):
            raise ValueError("rho_hat must be nonnegative")


def init_from_trace(trace: SolutionTrace, cfg: PdeConfig) -> RadialField:
    """Interpolate a trace's (R, V) onto the probe grid at tau = 0."""
    if trace.ys[0] > cfg.y_min or trace.ys[-1] < cfg.y_max:
        raise OutOfRange(
            f"trace [{trace.ys[0]}, {trace.ys[-1]}] does not cover the grid "
            f"[{cfg.y_min}, {cfg.y_max}]")
    grid = np.linspace(cfg.y_min, cfg.y_max, cfg.cells)
    rho = np.interp(grid, trace.ys, trace.Rs)
    u = np.interp(grid, trace.ys, trace.Vs)
    if cfg.g_inner is not None:
        g_inner = cfg.g_inner
    else:
        g_inner = float(rho[0] * (grid[0] - u[0]) * grid[0] ** 2)
    return RadialField(
        grid=grid, rho_hat=rho, u_hat=u, tau=0.0, pressure=trace.pressure,
        g_inner=g_inner,
        bc_values=(float(rho[0]), float(u[0]), float(rho[-1]), float(u[-1])),
    )


def _tendencies(y: np.ndarray, rho: np.ndarray, u: np.ndarray,
                A: int, g_inner: float) -> tuple[np.ndarray, np.ndarray]:
    """Interior d_tau of the shell variables (q, p); boundary entries zero."""
    n = len(y)
    dy = y[1] - y[0]
    w = y * y
    q = w * rho
    p = q * u
    a = u - y

    a_face = 0.5 * (a[:-1] + a[1:])
    take_left = a_face > 0.0
    flux_q = a_face * np.where(take_left, q[:-1], q[1:])
    flux_p = a_face * np.where(take_left, p[:-1], p[1:])

    dq = np.zeros(n)
    dp = np.zeros(n)
    yi = y[1:-1]

    dq[1:-1] = -(flux_q[1:] - flux_q[:-1]) / dy - q[1:-1]

    d_rho = (rho[2:] - rho[:-2]) / (2.0 * dy)
    d_u = (u[2:] - u[:-2]) / (2.0 * dy)
    d2_u = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dy * dy)

    integrand = rho * w
    g_hat = g_inner + np.concatenate(
        [[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * dy)])

    dp[1:-1] = (-(flux_p[1:] - flux_p[:-1]) / dy - p[1:-1]
                + w[1:-1] * (-A * d_rho
                             + 2.0 * (d_rho * d_u
                                      + rho[1:-1] * (d2_u + 2.0 / yi * d_u
                                                     - 2.0 / (yi * yi) * u[1:-1])))
                - g_hat[1:-1] * rho[1:-1])
    return dq, dp


def stationarity_residual(field: RadialField) -> tuple[np.ndarray, np.ndarray]:
    """Interior (d_tau rho_hat, d_tau u_hat) of the discrete operator.

    Zero up to truncation error on a self-similar profile; used to verify the
    transformed fluxes against the reduced ODE system.
    """
    dq, dp = _tendencies(field.grid, field.rho_hat, field.u_hat,
                         field.pressure.A, field.g_inner)
    w = field.grid * field.grid
    q = w * field.rho_hat
    drho = dq / w
    with np.errstate(divide="ignore", invalid="ignore"):
        du = np.where(q > 0.0, (dp - field.u_hat * dq) / q, 0.0)
    return drho[1:-1], du[1:-1]


def cfl_dt(field: RadialField, cfg: PdeConfig) -> float:
    """Dual CFL bound: advective dy/(max|u-y| + sqrt(A)) and diffusive
    dy^2/(2*diffusivity)."""
    dy = field.grid[1] - field.grid[0]
    speed = float(np.max(np.abs(field.u_hat - field.grid)))
    dt_adv = dy / (speed + np.sqrt(field.pressure.A))
    dt_diff = dy * dy / (2.0 * DIFFUSIVITY)
    dt = cfg.cfl * min(dt_adv, dt_diff)
    if not np.isfinite(dt) or dt <= 1e-300:
        raise CflViolation(f"computed dt={dt} underflowed")
    return dt


def step(field: RadialField, cfg: PdeConfig, dt: float | None = None
         ) -> RadialField:
    """Advance one explicit step (forward Euler at the CFL dt by default).

    Dirichlet values are re-imposed at both ends; negative densities are
    clipped to zero with a conservation warning and counted on the field.
    """
    if not (np.all(np.isfinite(field.rho_hat)) and np.all(np.isfinite(field.u_hat))):
        raise NonFinite("field contains non-finite nodes")
    if dt is None:
        dt = cfl_dt(field, cfg)
    rho, u, clips = _advance(field.grid, field.rho_hat, field.u_hat, dt,
                             field.pressure.A, field.g_inner, field.bc_values)
    if clips:
        warnings.warn(f"clipped {clips} negative-density nodes at "
                      f"tau={field.tau + dt:.6g}; discrete mass not conserved",
                      RuntimeWarning, stacklevel=2)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
        raise NonFinite(f"step produced non-finite nodes at tau={field.tau + dt:.6g}")
    return replace(field, rho_hat=rho, u_hat=u, tau=field.tau + dt,
                   clip_count=field.clip_count + clips)


def _advance(y, rho, u, dt, A, g_inner, bc):
    dq, dp = _tendencies(y, rho, u, A, g_inner)
    w = y * y
    q_n = w * rho + dt * dq
    p_n = w * rho * u + dt * dp
    rho_lo, u_lo, rho_hi, u_hi = bc
    q_n[0], q_n[-1] = w[0] * rho_lo, w[-1] * rho_hi
    p_n[0], p_n[-1] = q_n[0] * u_lo, q_n[-1] * u_hi
    neg = q_n < 0.0
    clips = int(np.count_nonzero(neg))
    if clips:
        q_n[neg] = 0.0
        p_n[neg] = 0.0
    rho_n = q_n / w
    with np.errstate(divide="ignore", invalid="ignore"):
        u_n = np.where(q_n > 0.0, p_n / q_n, 0.0)
    return rho_n, u_n, clips


def evolve(field: RadialField, cfg: PdeConfig,
           checkpoints: tuple[float, ...] = (),
           reference: SolutionTrace | None = None,
           ) -> tuple[RadialField, list[tuple[float, float, float]]]:
    """March to cfg.tau_end; deviations against `reference` are recorded at
    tau = 0, each checkpoint, and the end (empty history without a reference).
    """
    if not (np.all(np.isfinite(field.rho_hat)) and np.all(np.isfinite(field.u_hat))):
        raise NonFinite("field contains non-finite nodes")
    history: list[tuple[float, float, float]] = []
    remaining = sorted(c for c in checkpoints if field.tau < c < cfg.tau_end)

    def record(fld):
        if reference is not None:
            l2, linf = deviation(fld, reference)
            history.append((fld.tau, l2, linf))

    record(field)
    y = field.grid
    rho = field.rho_hat.copy()
    u = field.u_hat.copy()
    tau = field.tau
    clips_total = field.clip_count
    A = field.pressure.A

    while tau < cfg.tau_end - 1e-14:
        dy = y[1] - y[0]
        speed = float(np.max(np.abs(u - y)))
        dt = cfg.cfl * min(dy / (speed + np.sqrt(A)),
                           dy * dy / (2.0 * DIFFUSIVITY))
        if not np.isfinite(dt) or dt <= 1e-300:
            raise CflViolation(f"computed dt={dt} underflowed at tau={tau:.6g}")
        target = remaining[0] if remaining else cfg.tau_end
        dt = min(dt, target - tau, cfg.tau_end - tau)
        rho, u, clips = _advance(y, rho, u, dt, A, field.g_inner, field.bc_values)
        clips_total += clips
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
            raise NonFinite(f"evolution produced non-finite nodes at tau={tau:.6g}")
        tau += dt
        if remaining and tau >= remaining[0] - 1e-14:
            remaining.pop(0)
            record(replace(field, rho_hat=rho, u_hat=u, tau=tau,
                           clip_count=clips_total))

    final = replace(field, rho_hat=rho, u_hat=u, tau=tau, clip_count=clips_total)
    record(final)
    return final, history


def deviation(field: RadialField, trace: SolutionTrace) -> tuple[float, float]:
    """Trace-weighted L2 and max deviation of the field from (R, V).

    The field is interpolated back onto the trace's own samples inside the
    grid, so at tau = 0 this measures exactly the grid representation error
    of the profile.
    """
    lo, hi = field.grid[0], field.grid[-1]
    sel = (trace.ys >= lo) & (trace.ys <= hi)
    if not np.any(sel):
        raise OutOfRange("trace and grid do not overlap")
    ys = trace.ys[sel]
    dr = np.interp(ys, field.grid, field.rho_hat) - trace.Rs[sel]
    du = np.interp(ys, field.grid, field.u_hat) - trace.Vs[sel]
    if len(ys) > 1:
        w = np.empty_like(ys)
        w[1:-1] = 0.5 * (ys[2:] - ys[:-2])
        w[0] = 0.5 * (ys[1] - ys[0])
        w[-1] = 0.5 * (ys[-1] - ys[-2])
    else:
        w = np.ones(1)
    l2 = float(np.sqrt(np.sum(w * (dr * dr + du * du))))
    linf = float(max(np.max(np.abs(dr)), np.max(np.abs(du))))
    return l2, linf


def mass_balance_defect(field: RadialField, cfg: PdeConfig) -> float:
    """One-step defect of the discrete mass balance on the truncated domain.

    In similarity coordinates d/dtau int y^2 rho_hat dy =
    -[y^2 rho_hat (u_hat - y)]_boundaries - int y^2 rho_hat dy; returns the
    normalized defect of the forward-Euler step against that balance.  The
    conservative shell fluxes telescope, so the defect is quadrature-level
    except for the pinned boundary nodes.
    """
    y, rho, u = field.grid, field.rho_hat, field.u_hat
    dt = cfl_dt(field, cfg)
    nxt = step(field, cfg, dt=dt)
    w = y * y
    a_face = 0.5 * ((u[:-1] - y[:-1]) + (u[1:] - y[1:]))
    q = w * rho
    flux_face = a_face * np.where(a_face > 0.0, q[:-1], q[1:])
    mass0 = float(np.trapezoid(w * rho, y))
    mass1 = float(np.trapezoid(w * nxt.rho_hat, y))
    expected = -(flux_face[-1] - flux_face[0]) - mass0
    defect = (mass1 - mass0) / dt - expected
    return abs(defect) / max(1.0, abs(mass0), abs(flux_face[-1]), abs(flux_face[0]))
