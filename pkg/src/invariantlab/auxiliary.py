"""Auxiliary c-number equations feeding the invariant construction.

Two second-order ODEs are solved here with a fixed-step classical
fourth-order Runge-Kutta scheme (deterministic, order-verifiable):

* the anti-damped nonlinear auxiliary equation
      rhoddot - kappa(t) rhodot + omega^2(t) rho = 1/rho^3,
  whose solution parametrizes the weak invariant.  Note the friction term
  carries the opposite sign to the damped mean motion, so perturbations
  around the slow solution *grow* at rate kappa/2;
* the linear mode equation  epsdot' + omega^2(t) eps = 0  behind the
  first-order invariant.

Solutions are sampled on the step grid and evaluated densely by cubic
Hermite interpolation; the second derivative stored alongside comes from
the ODE right-hand side at the nodes (never from finite differencing), so
the residual check below is an honest measure of how well the interpolated
trajectory satisfies the equation between nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularityError, ValidationError
from .schedules import ReflectedSchedule, Schedule

RHO_FLOOR = 1e-6


# ------------------------------------------------------------------ hermite

def _locate(ts: np.ndarray, t: np.ndarray):
    h = ts[1] - ts[0]
    idx = np.clip(((t - ts[0]) / h).astype(int), 0, len(ts) - 2)
    s = (t - ts[idx]) / h
    return idx, s, h


def hermite_value(ts, y, ydot, t):
    """Cubic Hermite interpolant value at t (uniform grid)."""
    t = np.asarray(t, dtype=float)
    idx, s, h = _locate(ts, t)
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y[idx] + h * h10 * ydot[idx] + h01 * y[idx + 1] + h * h11 * ydot[idx + 1]


def hermite_derivative(ts, y, ydot, t):
    """Analytic t-derivative of the cubic Hermite interpolant."""
    t = np.asarray(t, dtype=float)
    idx, s, h = _locate(ts, t)
    s2 = s * s
    d00 = (6 * s2 - 6 * s) / h
    d10 = 3 * s2 - 4 * s + 1
    d01 = (-6 * s2 + 6 * s) / h
    d11 = 3 * s2 - 2 * s
    return d00 * y[idx] + d10 * ydot[idx] + d01 * y[idx + 1] + d11 * ydot[idx + 1]


# ------------------------------------------------------------------- records


@dataclass(frozen=True)
class ErmakovInit:
    rho0: float
    rhodot0: float = 0.0

    def __post_init__(self):
        if not self.rho0 >= RHO_FLOOR:
            raise ValidationError(f"rho0 must be >= {RHO_FLOOR:g}, got {self.rho0}")


@dataclass(frozen=True, eq=False)
class ErmakovSolution:
    """Sampled (rho, rhodot) trajectory with dense Hermite evaluation.

    ``rhoddot`` holds the ODE right-hand side at the nodes.  The same record
    shape carries linear-mode solutions (enforce_floor=False), whose values
    legitimately cross zero.
    """

    ts: np.ndarray
    rho: np.ndarray
    rhodot: np.ndarray
    rhoddot: np.ndarray
    enforce_floor: bool = True

    def __post_init__(self):
        for name in ("ts", "rho", "rhodot", "rhoddot"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.enforce_floor and np.any(self.rho < RHO_FLOOR):
            raise ValidationError("rho samples dip below the positivity floor")

    @property
    def window(self) -> tuple[float, float]:
        return float(self.ts[0]), float(self.ts[-1])

    @property
    def step(self) -> float:
        return float(self.ts[1] - self.ts[0])

    def _check_window(self, t):
        lo, hi = self.window
        t = np.asarray(t, dtype=float)
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ValidationError(
                f"time outside solution window [{lo:g}, {hi:g}]")

    def rho_at(self, t):
        self._check_window(t)
        out = hermite_value(self.ts, self.rho, self.rhodot, t)
        return out if np.ndim(t) else float(out)

    def rhodot_at(self, t):
        self._check_window(t)
        out = hermite_value(self.ts, self.rhodot, self.rhoddot, t)
        return out if np.ndim(t) else float(out)

    def rhoddot_at(self, t):
        """Second derivative of the interpolated trajectory.

        Taken as the analytic derivative of the rhodot interpolant, so it is
        independent of the equation's right-hand side away from the nodes.
        """
        self._check_window(t)
        out = hermite_derivative(self.ts, self.rhodot, self.rhoddot, t)
        return out if np.ndim(t) else float(out)

    def write_csv(self, path, precision: int = 12, every: int = 1):
        fmt = f"{{:.{precision}g}}"
        with open(path, "w") as fh:
            fh.write("t,rho,rhodot\n")
            for i in range(0, len(self.ts), every):
                fh.write(",".join(fmt.format(v) for v in
                                  (self.ts[i], self.rho[i], self.rhodot[i])) + "\n")


# ----------------------------------------------------------------- integrate


def _step_count(t_max: float, h: float) -> int:
    if not h > 0:
        raise ValidationError(f"step h must be > 0, got {h}")
    if not t_max > 0:
        raise ValidationError(f"t_max must be > 0, got {t_max}")
    return int(np.ceil(t_max / h - 1e-9))


def _half_grid_coefficients(omega_s: Schedule, kappa_s: Schedule | None,
                            n_steps: int, h: float):
    """Coefficients at every stage time: nodes and midpoints, in one pass."""
    half = 0.5 * h * np.arange(2 * n_steps + 1)
    w = np.asarray(omega_s.eval(half, 0), dtype=float)
    omega_sq = w * w
    if kappa_s is None:
        kappa = np.zeros_like(half)
    else:
        kappa = np.asarray(kappa_s.eval(half, 0), dtype=float)
    return omega_sq, kappa


def solve_auxiliary(omega_s: Schedule, kappa_s: Schedule, init: ErmakovInit,
                    t_max: float, h: float) -> ErmakovSolution:
    """Integrate the anti-damped auxiliary equation with fixed-step RK4.

    Coefficients are evaluated at the stage times.  If rho drops below the
    positivity floor at any stage, the 1/rho^3 term invalidates the step-size
    assumptions and the run aborts with a SingularityError; no automatic
    refinement is attempted.
    """
    n = _step_count(t_max, h)
    if not (omega_s.covers(0.0, n * h) and kappa_s.covers(0.0, n * h)):
        raise ValidationError("schedules do not cover the integration window")
    omega_sq, kappa = _half_grid_coefficients(omega_s, kappa_s, n, h)

    rho = np.empty(n + 1)
    rhodot = np.empty(n + 1)
    r, v = init.rho0, init.rhodot0
    rho[0], rhodot[0] = r, v

    def rhs(r_, v_, k_, w2_):
        if r_ < RHO_FLOOR:
            raise SingularityError(
                f"rho reached {r_:.3e} (floor {RHO_FLOOR:g}) near t = {t_now:.6g}")
        return v_, k_ * v_ - w2_ * r_ + 1.0 / (r_ * r_ * r_)

    for i in range(n):
        t_now = i * h
        k0, w0 = kappa[2 * i], omega_sq[2 * i]
        km, wm = kappa[2 * i + 1], omega_sq[2 * i + 1]
        k1_, w1 = kappa[2 * i + 2], omega_sq[2 * i + 2]

        a1, b1 = rhs(r, v, k0, w0)
        a2, b2 = rhs(r + 0.5 * h * a1, v + 0.5 * h * b1, km, wm)
        a3, b3 = rhs(r + 0.5 * h * a2, v + 0.5 * h * b2, km, wm)
        a4, b4 = rhs(r + h * a3, v + h * b3, k1_, w1)

        r += h * (a1 + 2 * a2 + 2 * a3 + a4) / 6.0
        v += h * (b1 + 2 * b2 + 2 * b3 + b4) / 6.0
        if r < RHO_FLOOR:
            raise SingularityError(
                f"rho reached {r:.3e} (floor {RHO_FLOOR:g}) near t = {(i + 1) * h:.6g}")
        rho[i + 1], rhodot[i + 1] = r, v

    ts = h * np.arange(n + 1)
    node_kappa = kappa[::2]
    node_wsq = omega_sq[::2]
    rhoddot = node_kappa * rhodot - node_wsq * rho + rho ** -3.0
    return ErmakovSolution(ts=ts, rho=rho, rhodot=rhodot, rhoddot=rhoddot)


def solve_classical_mode(omega_s: Schedule, init: tuple[float, float],
                         t_max: float, h: float) -> ErmakovSolution:
    """Integrate the linear mode equation with the same integrator contract."""
    n = _step_count(t_max, h)
    if not omega_s.covers(0.0, n * h):
        raise ValidationError("schedule does not cover the integration window")
    omega_sq, _ = _half_grid_coefficients(omega_s, None, n, h)

    eps = np.empty(n + 1)
    epsdot = np.empty(n + 1)
    r, v = float(init[0]), float(init[1])
    eps[0], epsdot[0] = r, v

    for i in range(n):
        w0, wm, w1 = omega_sq[2 * i], omega_sq[2 * i + 1], omega_sq[2 * i + 2]
        a1, b1 = v, -w0 * r
        a2, b2 = v + 0.5 * h * b1, -wm * (r + 0.5 * h * a1)
        a3, b3 = v + 0.5 * h * b2, -wm * (r + 0.5 * h * a2)
        a4, b4 = v + h * b3, -w1 * (r + h * a3)
        r += h * (a1 + 2 * a2 + 2 * a3 + a4) / 6.0
        v += h * (b1 + 2 * b2 + 2 * b3 + b4) / 6.0
        eps[i + 1], epsdot[i + 1] = r, v

    ts = h * np.arange(n + 1)
    epsddot = -omega_sq[::2] * eps
    return ErmakovSolution(ts=ts, rho=eps, rhodot=epsdot, rhoddot=epsddot,
                           enforce_floor=False)


def solve_tracking_reference(omega_s: Schedule, kappa_s: Schedule,
                             window: float, h: float,
                             margin: float | None = None) -> ErmakovSolution:
    """Relaxed numerical solution on the slowly-varying branch over [0, window].

    Forward in time the branch the slow-variation series describes is
    repelling (perturbations grow at rate kappa/2), so shooting at it is
    hopeless.  Reflecting time turns the anti-damping into damping: this
    integrates the reflected equation from a series seed placed ``margin``
    ahead of the window, letting the transient decay like exp(-kappa tau/2),
    then maps the samples back onto the forward grid.  Requires kappa > 0
    throughout (no relaxation otherwise).
    """
    k_probe = float(kappa_s.eval(0.0, 0))
    if not k_probe > 0:
        raise ValidationError(
            "tracking reference needs kappa > 0 (got kappa(0) = %g)" % k_probe)
    if margin is None:
        # decay factor exp(-kappa*margin/2) ~ 1e-7 of the seed mismatch
        margin = 2.0 * 16.2 / k_probe
    m = _step_count(window, h)
    n = m + int(np.ceil(margin / h))
    t_end = n * h

    omega_r = ReflectedSchedule(omega_s, t_end)
    kappa_r = ReflectedSchedule(kappa_s, t_end, sign=-1.0)
    seed = ErmakovInit(adiabatic_rho(omega_s, kappa_s, t_end),
                       -adiabatic_rhodot(omega_s, kappa_s, t_end))
    back = solve_auxiliary(omega_r, kappa_r, seed, t_end, h)

    # reflect the sampled trajectory onto forward time and keep [0, window]
    rho_f = back.rho[::-1]
    rhodot_f = -back.rhodot[::-1]
    rhoddot_f = back.rhoddot[::-1]
    ts_f = h * np.arange(n + 1)
    sl = slice(0, m + 1)
    return ErmakovSolution(ts=ts_f[sl], rho=rho_f[sl].copy(),
                           rhodot=rhodot_f[sl].copy(), rhoddot=rhoddot_f[sl].copy())


# ------------------------------------------------------------------ series


def adiabatic_rho(omega_s: Schedule, kappa_s: Schedule, t):
    """Slow-variation solution of the auxiliary equation, displayed terms only.

    Exact for constant coefficients (then it reduces to omega^{-1/2}); the
    truncation error scales with the third power of the slowness rate.
    """
    w = np.asarray(omega_s.eval(t, 0), dtype=float)
    if np.any(w <= 0):
        raise ValidationError("adiabatic series requires omega(t) > 0")
    wd = omega_s.eval(t, 1)
    wdd = omega_s.eval(t, 2)
    k = kappa_s.eval(t, 0)
    kd = kappa_s.eval(t, 1)
    ratio_sq = (k / w) ** 2
    out = (
        w ** -0.5
        - k * wd / (8.0 * w ** 3.5)
        - wd ** 2 * (3.0 - 1.75 * ratio_sq) / (16.0 * w ** 4.5)
        - k * kd * wd / (32.0 * w ** 5.5)
        + wdd * (1.0 - 0.25 * ratio_sq) / (8.0 * w ** 3.5)
    )
    return out if np.ndim(t) else float(out)


def adiabatic_rhodot(omega_s: Schedule, kappa_s: Schedule, t: float,
                     delta: float = 1e-5) -> float:
    """Time derivative of the series by second-order finite differencing.

    Falls back to a one-sided stencil when a table window blocks one side.
    """

    def f(u):
        return adiabatic_rho(omega_s, kappa_s, u)

    both = lambda lo, hi: omega_s.covers(lo, hi) and kappa_s.covers(lo, hi)
    if both(t - delta, t + delta):
        return (f(t + delta) - f(t - delta)) / (2.0 * delta)
    if both(t, t + 2 * delta):
        return (-3.0 * f(t) + 4.0 * f(t + delta) - f(t + 2 * delta)) / (2.0 * delta)
    if both(t - 2 * delta, t):
        return (3.0 * f(t) - 4.0 * f(t - delta) + f(t - 2 * delta)) / (2.0 * delta)
    raise ValidationError(f"cannot difference the series at t = {t:g}: window too tight")


# ----------------------------------------------------------------- residual


def auxiliary_residual(sol: ErmakovSolution, omega_s: Schedule,
                       kappa_s: Schedule, t):
    """ODE defect of the interpolated trajectory at time(s) t.

    Computes rhoddot - kappa rhodot + omega^2 rho - 1/rho^3 with the second
    derivative reconstructed from the rhodot interpolant.  At the nodes this
    vanishes by construction; between nodes it measures genuine integration
    plus interpolation error (fourth order in the step).
    """
    rho = sol.rho_at(t)
    rhodot = sol.rhodot_at(t)
    rhoddot = sol.rhoddot_at(t)
    w = omega_s.eval(t, 0)
    k = kappa_s.eval(t, 0)
    out = rhoddot - k * rhodot + w * w * rho - rho ** -3.0
    return out if np.ndim(t) else float(out)


def max_residual_between_nodes(sol: ErmakovSolution, omega_s: Schedule,
                               kappa_s: Schedule, samples_per_gap: int = 1) -> float:
    """Max |auxiliary_residual| over interval midpoints (optionally more)."""
    h = sol.step
    offsets = (np.arange(1, samples_per_gap + 1) / (samples_per_gap + 1.0)) * h
    worst = 0.0
    for off in offsets:
        pts = sol.ts[:-1] + off
        r = auxiliary_residual(sol, omega_s, kappa_s, pts)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst
