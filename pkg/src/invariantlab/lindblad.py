"""Dissipative evolution engine for the damped parametric oscillator.

The auxiliary solution fixes, at every instant, a single Hermitian jump
operator L = K1 + a2 K2 + a3 K3 and a strength alpha such that the
resulting friction is exactly the declared kappa(t).  This module
assembles that model and evolves density matrices, conserved
observables, and the two closed moment systems with one fixed-step
fourth-order integrator throughout, so convergence claims are uniform.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .auxiliary import (
    ErmakovSolution,
    _half_grid_coefficients,
    _step_count,
    hermite_derivative,
    hermite_value,
)
from .errors import (
    NegativeFrictionError,
    NumericalError,
    PositivityLossError,
    TruncationLeakError,
    ValidationError,
)
from .operators import (
    DENSITY_EIG_FLOOR,
    DENSITY_HERM_TOL,
    DENSITY_TRACE_TOL,
    BasisConfig,
    DensityMatrix,
    FockOperator,
    build_canonical,
    build_su11_generators,
    commutator,
    expectation,
    interior_block,
    max_abs,
)
from .schedules import KAPPA_NEGATIVE_TOL, Schedule, modulated_frequency_sq

# |alpha*(a2 - a3^2) - kappa| above this means the coefficient algebra
# was evaluated on corrupted inputs, not that the step size is too large.
COEFF_IDENTITY_TOL = 1e-12
POSITIVITY_HARD_FLOOR = -1e-6
ADJOINT_HERM_TOL = 1e-10
MOMENT_BOUND_TOL = 1e-9
CLOSURE_GATE_TOL = 1e-10


def _freeze(a) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    out.flags.writeable = False
    return out


# -------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class LindbladCoefficients:
    """Jump-operator mixing weights and strength at one time.

    The first weight is fixed to 1; the combination alpha*(a2 - a3^2)
    is the friction the dissipator realizes.
    """

    t: float
    alpha: float
    a2: float
    a3: float
    a1: float = 1.0

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValidationError(
                f"dissipator strength must be >= 0, got {self.alpha}")
        if self.a1 != 1.0:
            raise ValidationError("the leading mixing weight is fixed to 1")
        if self.a2 - self.a3 * self.a3 < 0.0:
            raise ValidationError(
                "mixing weights must satisfy a2 - a3^2 >= 0 "
                f"(got a2={self.a2}, a3={self.a3})")

    @property
    def friction(self) -> float:
        """Damping rate alpha*(a2 - a3^2) realized by the dissipator."""
        return self.alpha * (self.a2 - self.a3 * self.a3)


def coefficients_at(sol: ErmakovSolution, kappa_s: Schedule,
                    t: float) -> LindbladCoefficients:
    """Dissipator coefficients induced by the auxiliary solution at t.

    alpha = 4 kappa rho^4 / ((rho rhodot)^2 + 4), a2 = rhodot^2/(2 rho^2)
    + rho^-4, a3 = -rhodot/(2 rho).  These satisfy alpha*(a2 - a3^2) =
    kappa identically; the residual of that identity is checked here so
    corrupted inputs fail loudly instead of dephasing the dissipator.
    """
    t = float(t)
    kappa = float(kappa_s.eval(t))
    if kappa < KAPPA_NEGATIVE_TOL:
        raise NegativeFrictionError(
            f"friction is negative at t={t:.6g}: kappa={kappa:.3e}")
    kappa = max(kappa, 0.0)
    r = sol.rho_at(t)
    v = sol.rhodot_at(t)
    r2 = r * r
    alpha = 4.0 * kappa * r2 * r2 / ((r * v) ** 2 + 4.0)
    a2 = v * v / (2.0 * r2) + 1.0 / (r2 * r2)
    a3 = -v / (2.0 * r)
    coeffs = LindbladCoefficients(t=t, alpha=alpha, a2=a2, a3=a3)
    if abs(coeffs.friction - kappa) > COEFF_IDENTITY_TOL:
        raise NumericalError(
            f"coefficient identity violated at t={t:.6g}: "
            f"alpha*(a2-a3^2)={coeffs.friction!r} vs kappa={kappa!r}")
    return coeffs


# --------------------------------------------------------------------- model


@dataclass(frozen=True)
class LindbladModel:
    """Time-dependent generator data: Hamiltonian and jump operators.

    ``dissipators_at`` returns (strength, jump-operator) pairs; the list
    is empty whenever the friction vanishes, which reduces the evolution
    to unitary dynamics without special-casing the integrators.
    """

    hamiltonian_at: Callable[[float], FockOperator]
    dissipators_at: Callable[[float], list[tuple[float, FockOperator]]]
    basis: BasisConfig


def assemble_model(omega_s: Schedule, kappa_s: Schedule, sol: ErmakovSolution,
                   k1: FockOperator, k2: FockOperator, k3: FockOperator,
                   cfg: BasisConfig) -> LindbladModel:
    """Oscillator model H = K1 + omega(t)^2 K2 with one Hermitian jump term."""
    for gen in (k1, k2, k3):
        if gen.dim != cfg.dim:
            raise ValidationError(
                f"generator dimension {gen.dim} does not match basis {cfg.dim}")

    def hamiltonian_at(t: float) -> FockOperator:
        w = float(omega_s.eval(t))
        return FockOperator(k1.entries + (w * w) * k2.entries)

    def dissipators_at(t: float) -> list[tuple[float, FockOperator]]:
        kappa = float(kappa_s.eval(t))
        if kappa < KAPPA_NEGATIVE_TOL:
            raise NegativeFrictionError(
                f"friction is negative at t={float(t):.6g}: kappa={kappa:.3e}")
        if kappa <= 0.0:
            return []
        c = coefficients_at(sol, kappa_s, t)
        jump = FockOperator(k1.entries + c.a2 * k2.entries + c.a3 * k3.entries)
        return [(c.alpha, jump)]

    return LindbladModel(hamiltonian_at=hamiltonian_at,
                         dissipators_at=dissipators_at, basis=cfg)


# --------------------------------------------------------------- diagnostics


def _diagnostics(arr: np.ndarray, cfg: BasisConfig) -> tuple[float, float, float, float]:
    tr = float(np.trace(arr).real)
    herm = max_abs(arr - arr.conj().T)
    sym = 0.5 * (arr + arr.conj().T)
    lo = float(np.linalg.eigvalsh(sym)[0])
    tail = float(np.sum(np.diag(arr).real[cfg.dim - cfg.n_tail:]))
    return tr, herm, lo, tail


def state_diagnostics(rho: DensityMatrix,
                      cfg: BasisConfig) -> tuple[float, float, float, float]:
    """(trace, hermiticity deviation, min eigenvalue, tail population)."""
    if rho.dim != cfg.dim:
        raise ValidationError(
            f"state dimension {rho.dim} does not match basis {cfg.dim}")
    return _diagnostics(rho.entries, cfg)


# ------------------------------------------------------------ density matrix


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded density-matrix evolution with per-sample health metrics.

    A sample outside the state tolerances marks the run failed at the
    first offending time but does not abort it; hard breaches (tail
    leakage, eigenvalues below the hard floor) raise during evolution.
    """

    ts: np.ndarray
    states: tuple[DensityMatrix, ...]
    trace: np.ndarray
    herm_dev: np.ndarray
    min_eig: np.ndarray
    tail_pop: np.ndarray
    basis: BasisConfig
    failed_at: float | None
    warnings: tuple[str, ...]

    def __post_init__(self):
        for name in ("ts", "trace", "herm_dev", "min_eig", "tail_pop"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def ok(self) -> bool:
        return self.failed_at is None

    def moments(self) -> list["MomentVector"]:
        return [moments_from_state(s, self.basis) for s in self.states]

    def write_csv(self, path, precision: int = 12):
        fmt = f"{{:.{precision}g}}"
        with open(path, "w") as fh:
            fh.write("t,mean_x,mean_p,k1,k2,k3,trace,herm_dev,min_eig,tail_pop\n")
            for i, m in enumerate(self.moments()):
                row = (self.ts[i], m.mean_x, m.mean_p, m.k1, m.k2, m.k3,
                       self.trace[i], self.herm_dev[i], self.min_eig[i],
                       self.tail_pop[i])
                fh.write(",".join(fmt.format(v) for v in row) + "\n")


def _density_stage_ops(model: LindbladModel, t: float):
    h_op = model.hamiltonian_at(t).entries
    drift = -1j * h_op
    jumps = []
    for strength, jump in model.dissipators_at(t):
        l_ = jump.entries
        l_h = l_.conj().T
        drift = drift - strength * (l_h @ l_)
        jumps.append((2.0 * strength, l_, l_h))
    return drift, drift.conj().T, jumps


def _density_rhs(state: np.ndarray, ops) -> np.ndarray:
    drift, drift_h, jumps = ops
    out = drift @ state + state @ drift_h
    for c, l_, l_h in jumps:
        out += c * (l_ @ state @ l_h)
    return out


def evolve_density(model: LindbladModel, rho0: DensityMatrix, t_max: float,
                   h: float, record_every: int = 100, *,
                   resymmetrize: bool = False) -> Trajectory:
    """Fixed-step fourth-order integration of the density-matrix equation.

    The right-hand side is -i[H, rho] - sum_n alpha_n (Ln^dag Ln rho +
    rho Ln^dag Ln - 2 Ln rho Ln^dag) with every operator evaluated at
    the stage times.  No renormalization or positivity projection is
    applied: trace drift and eigenvalue dips are reported, not hidden.
    With ``resymmetrize`` the state is replaced by its Hermitian part
    after every step (off by default).
    """
    cfg = model.basis
    if rho0.dim != cfg.dim:
        raise ValidationError(
            f"state dimension {rho0.dim} does not match basis {cfg.dim}")
    if record_every < 1:
        raise ValidationError(f"record_every must be >= 1, got {record_every}")
    n = _step_count(t_max, h)
    half = 0.5 * h

    state = np.array(rho0.entries, dtype=complex)
    rec_ts: list[float] = []
    rec_states: list[DensityMatrix] = []
    rec_diag: list[tuple[float, float, float, float]] = []
    warnings: list[str] = []
    failed_at: float | None = None

    def record(i: int, arr: np.ndarray):
        nonlocal failed_at
        t = h * i
        tr, herm, lo, tail = _diagnostics(arr, cfg)
        if tail > cfg.tail_threshold:
            raise TruncationLeakError(
                f"tail population {tail:.3e} exceeds {cfg.tail_threshold:.1e} "
                f"at t={t:.6g}; increase the basis dimension")
        if lo < POSITIVITY_HARD_FLOOR:
            raise PositivityLossError(
                f"minimum eigenvalue {lo:.3e} at t={t:.6g}")
        problems = []
        if abs(tr - 1.0) > DENSITY_TRACE_TOL:
            problems.append(f"trace drift {tr - 1.0:.3e}")
        if herm > DENSITY_HERM_TOL:
            problems.append(f"hermiticity deviation {herm:.3e}")
        if lo < DENSITY_EIG_FLOOR:
            problems.append(f"negative eigenvalue {lo:.3e}")
        if problems:
            warnings.append(f"t={t:.6g}: " + "; ".join(problems))
            if failed_at is None:
                failed_at = t
        rec_ts.append(t)
        rec_states.append(DensityMatrix(arr.copy(), validate=False))
        rec_diag.append((tr, herm, lo, tail))

    ops_end = None
    for i in range(n + 1):
        if i % record_every == 0 or i == n:
            record(i, state)
        if i == n:
            break
        k0 = 2 * i
        ops_a = ops_end if ops_end is not None else _density_stage_ops(model, half * k0)
        ops_b = _density_stage_ops(model, half * (k0 + 1))
        ops_c = _density_stage_ops(model, half * (k0 + 2))
        ops_end = ops_c

        s1 = _density_rhs(state, ops_a)
        s2 = _density_rhs(state + half * s1, ops_b)
        s3 = _density_rhs(state + half * s2, ops_b)
        s4 = _density_rhs(state + h * s3, ops_c)
        state = state + (h / 6.0) * (s1 + 2.0 * (s2 + s3) + s4)
        if resymmetrize:
            state = 0.5 * (state + state.conj().T)

    diag = np.array(rec_diag)
    return Trajectory(ts=np.array(rec_ts), states=tuple(rec_states),
                      trace=diag[:, 0], herm_dev=diag[:, 1],
                      min_eig=diag[:, 2], tail_pop=diag[:, 3],
                      basis=cfg, failed_at=failed_at, warnings=tuple(warnings))


# --------------------------------------------------------- adjoint evolution


@dataclass(frozen=True, eq=False)
class OperatorTrajectory:
    """Recorded evolution of a conserved observable."""

    ts: np.ndarray
    operators: tuple[FockOperator, ...]
    herm_dev: np.ndarray
    failed_at: float | None
    warnings: tuple[str, ...]

    def __post_init__(self):
        for name in ("ts", "herm_dev"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def ok(self) -> bool:
        return self.failed_at is None


def _adjoint_stage_ops(model: LindbladModel, t: float):
    h_op = model.hamiltonian_at(t).entries
    jumps = []
    for strength, jump in model.dissipators_at(t):
        l_ = jump.entries
        l_h = l_.conj().T
        jumps.append((strength, l_, l_h, l_h @ l_))
    return h_op, jumps


def _adjoint_rhs(q: np.ndarray, ops) -> np.ndarray:
    # grouped so that the generator annihilates the identity exactly,
    # not just to rounding: H q - q H and m q + q m - 2 l^dag q l both
    # cancel termwise at q = 1
    h_op, jumps = ops
    out = -1j * (h_op @ q - q @ h_op)
    for strength, l_, l_h, m in jumps:
        out += strength * (m @ q + q @ m) - (2.0 * strength) * (l_h @ q @ l_)
    return out


def evolve_adjoint_observable(model: LindbladModel, q0: FockOperator,
                              t_max: float, h: float,
                              record_every: int = 100) -> OperatorTrajectory:
    """Evolve an observable so its expectation in the evolving state is fixed.

    Integrates dQ/dt = -i[H, Q] + sum_n alpha_n (Ln^dag Ln Q + Q Ln^dag Ln
    - 2 Ln^dag Q Ln), the trace-pairing adjoint of the density equation:
    tr[Q(t) rho(t)] is constant when both evolve under the same model.
    """
    cfg = model.basis
    if q0.dim != cfg.dim:
        raise ValidationError(
            f"observable dimension {q0.dim} does not match basis {cfg.dim}")
    if not q0.hermitian:
        raise ValidationError(
            f"initial observable is not Hermitian "
            f"(deviation {q0.herm_deviation():.3e})")
    if record_every < 1:
        raise ValidationError(f"record_every must be >= 1, got {record_every}")
    n = _step_count(t_max, h)
    half = 0.5 * h

    q = np.array(q0.entries, dtype=complex)
    rec_ts: list[float] = []
    rec_ops: list[FockOperator] = []
    rec_dev: list[float] = []
    warnings: list[str] = []
    failed_at: float | None = None

    def record(i: int, arr: np.ndarray):
        nonlocal failed_at
        t = h * i
        if not np.all(np.isfinite(arr.view(float))):
            # the adjoint flow amplifies components at rates set by the
            # squared level gaps of the jump operator, so generic
            # observables eventually outgrow float range; conserved
            # observables built for the model stay bounded
            raise NumericalError(
                f"observable grew beyond float range by t={t:.6g}; "
                "shorten the window or seed with a conserved observable")
        dev = max_abs(arr - arr.conj().T)
        if dev > ADJOINT_HERM_TOL:
            warnings.append(f"t={t:.6g}: hermiticity deviation {dev:.3e}")
            if failed_at is None:
                failed_at = t
        rec_ts.append(t)
        rec_ops.append(FockOperator(arr.copy()))
        rec_dev.append(dev)

    ops_end = None
    # overflow between record points is caught at the next record; the
    # intermediate arithmetic may legitimately hit inf, so keep numpy quiet
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n + 1):
            if i % record_every == 0 or i == n:
                record(i, q)
            if i == n:
                break
            k0 = 2 * i
            ops_a = ops_end if ops_end is not None else _adjoint_stage_ops(model, half * k0)
            ops_b = _adjoint_stage_ops(model, half * (k0 + 1))
            ops_c = _adjoint_stage_ops(model, half * (k0 + 2))
            ops_end = ops_c

            s1 = _adjoint_rhs(q, ops_a)
            s2 = _adjoint_rhs(q + half * s1, ops_b)
            s3 = _adjoint_rhs(q + half * s2, ops_b)
            s4 = _adjoint_rhs(q + h * s3, ops_c)
            q = q + (h / 6.0) * (s1 + 2.0 * (s2 + s3) + s4)

    return OperatorTrajectory(ts=np.array(rec_ts), operators=tuple(rec_ops),
                              herm_dev=np.array(rec_dev),
                              failed_at=failed_at, warnings=tuple(warnings))


# -------------------------------------------------------------- moment types


def _check_k_moments(k1: float, k2: float, k3: float):
    if k1 < -MOMENT_BOUND_TOL or k2 < -MOMENT_BOUND_TOL:
        raise ValidationError(
            f"quadratic-form moments must be >= 0, got k1={k1}, k2={k2}")
    if k1 * k2 - (0.25 * k3 * k3 + 0.0625) < -MOMENT_BOUND_TOL:
        raise ValidationError(
            "moments violate the uncertainty bound "
            f"k1*k2 >= k3^2/4 + 1/16: k1={k1}, k2={k2}, k3={k3}")


@dataclass(frozen=True)
class MomentVector:
    """Canonical means and quadratic-generator expectations of one state."""

    mean_x: float
    mean_p: float
    k1: float
    k2: float
    k3: float

    def __post_init__(self):
        _check_k_moments(self.k1, self.k2, self.k3)


@functools.lru_cache(maxsize=8)
def _observable_set(cfg: BasisConfig):
    x_op, p_op = build_canonical(cfg)
    g1, g2, g3 = build_su11_generators(x_op, p_op)
    return x_op, p_op, g1, g2, g3


def moments_from_state(rho: DensityMatrix, cfg: BasisConfig) -> MomentVector:
    """Moment vector of a state: canonical means and K expectations."""
    return MomentVector(*(expectation(op, rho) for op in _observable_set(cfg)))


# ------------------------------------------------------------- first moments


@dataclass(frozen=True, eq=False)
class FirstMomentSeries:
    """Mean position/momentum on a uniform grid, with dense output."""

    ts: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    xdot: np.ndarray
    pdot: np.ndarray
    xddot: np.ndarray

    def __post_init__(self):
        for name in ("ts", "mean_x", "mean_p", "xdot", "pdot", "xddot"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def window(self) -> tuple[float, float]:
        return float(self.ts[0]), float(self.ts[-1])

    def _check_window(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.window
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ValidationError(
                f"time {t!r} outside recorded window [{lo:g}, {hi:g}]")
        return t

    def x_at(self, t):
        t = self._check_window(t)
        return hermite_value(self.ts, self.mean_x, self.xdot, t)

    def p_at(self, t):
        t = self._check_window(t)
        return hermite_value(self.ts, self.mean_p, self.pdot, t)

    def xdot_at(self, t):
        t = self._check_window(t)
        return hermite_value(self.ts, self.xdot, self.xddot, t)

    def xddot_at(self, t):
        t = self._check_window(t)
        return hermite_derivative(self.ts, self.xdot, self.xddot, t)


def evolve_first_moments(omega_s: Schedule, kappa_s: Schedule,
                         m0: tuple[float, float], t_max: float,
                         h: float) -> FirstMomentSeries:
    """Integrate d<x>/dt = <p> - kappa <x>, d<p>/dt = -omega^2 <x> - kappa <p>.

    This is the exact projection of the full evolution onto the means;
    it holds for the constructed jump operator because the realized
    friction equals kappa identically.
    """
    n = _step_count(t_max, h)
    if not (omega_s.covers(0.0, n * h) and kappa_s.covers(0.0, n * h)):
        raise ValidationError("schedules do not cover the integration window")
    omega_sq, kappa = _half_grid_coefficients(omega_s, kappa_s, n, h)
    if kappa.min() < KAPPA_NEGATIVE_TOL:
        t_bad = 0.5 * h * int(np.argmax(kappa < KAPPA_NEGATIVE_TOL))
        raise NegativeFrictionError(
            f"friction is negative at t={t_bad:.6g}: kappa={kappa.min():.3e}")

    xs = np.empty(n + 1)
    ps = np.empty(n + 1)
    x, p = float(m0[0]), float(m0[1])
    xs[0], ps[0] = x, p

    def rhs(x_, p_, k_, w2_):
        return p_ - k_ * x_, -w2_ * x_ - k_ * p_

    for i in range(n):
        k0, w0 = kappa[2 * i], omega_sq[2 * i]
        km, wm = kappa[2 * i + 1], omega_sq[2 * i + 1]
        k1_, w1 = kappa[2 * i + 2], omega_sq[2 * i + 2]

        a1, b1 = rhs(x, p, k0, w0)
        a2, b2 = rhs(x + 0.5 * h * a1, p + 0.5 * h * b1, km, wm)
        a3, b3 = rhs(x + 0.5 * h * a2, p + 0.5 * h * b2, km, wm)
        a4, b4 = rhs(x + h * a3, p + h * b3, k1_, w1)

        x += h * (a1 + 2 * a2 + 2 * a3 + a4) / 6.0
        p += h * (b1 + 2 * b2 + 2 * b3 + b4) / 6.0
        xs[i + 1], ps[i + 1] = x, p

    ts = h * np.arange(n + 1)
    node_k = kappa[::2]
    node_w2 = omega_sq[::2]
    kdot = np.asarray(kappa_s.eval(ts, 1), dtype=float)
    xdot = ps - node_k * xs
    pdot = -node_w2 * xs - node_k * ps
    xddot = pdot - kdot * xs - node_k * xdot
    return FirstMomentSeries(ts=ts, mean_x=xs, mean_p=ps,
                             xdot=xdot, pdot=pdot, xddot=xddot)


def first_moment_residual(series: FirstMomentSeries, omega_s: Schedule,
                          kappa_s: Schedule, t):
    """Defect of the mean motion in its second-order damped form.

    Evaluates xddot + 2 kappa xdot + (omega^2 + kappa^2 + kappadot) x
    from the recorded series; zero for exact solutions, O(h^4) between
    nodes for converged runs.
    """
    kap = np.asarray(kappa_s.eval(t, 0), dtype=float)
    w2_mod = modulated_frequency_sq(omega_s, kappa_s, t)
    return (series.xddot_at(t) + 2.0 * kap * series.xdot_at(t)
            + w2_mod * series.x_at(t))


# ------------------------------------------------------------ su(1,1) moments


def closure_matrix(omega_sq: float, c: LindbladCoefficients) -> np.ndarray:
    """Coefficient matrix of the closed K-moment system.

    The span of the three quadratic generators is preserved by both the
    Hamiltonian and double-commutator terms, so d<K_i>/dt = M_ij <K_j>
    exactly; this returns M for given omega^2 and jump coefficients.
    The derivation is gated by a brute-force matrix check (see
    ``_closure_matrix_verified``) before any moment run uses it.
    """
    al, a2, a3 = c.alpha, c.a2, c.a3
    diag = al * (4.0 * a3 * a3 - 2.0 * a2)
    return np.array([
        [diag, 2.0 * al * a2 * a2, -omega_sq + 2.0 * al * a2 * a3],
        [2.0 * al, diag, 1.0 + 2.0 * al * a3],
        [2.0 - 4.0 * al * a3, -2.0 * omega_sq - 4.0 * al * a2 * a3,
         -4.0 * al * a2],
    ])


@functools.lru_cache(maxsize=1)
def _closure_matrix_verified() -> bool:
    """Check closure_matrix against brute-force commutators once per process.

    For several coefficient draws, i[H, K_i] - alpha [L, [L, K_i]] is
    evaluated with dense matrices and compared entrywise to the closure
    prediction on the truncation-safe interior block.
    """
    cfg = BasisConfig(dim=12, omega_ref=1.0)
    gens = tuple(g.entries for g in build_su11_generators(*build_canonical(cfg)))
    cases = ((1.0, 0.1, 1.0, 0.0),
             (2.3, 0.07, 1.7, -0.4),
             (0.5, 0.12, 3.0, 1.2))
    for omega_sq, alpha, a2, a3 in cases:
        coeffs = LindbladCoefficients(t=0.0, alpha=alpha, a2=a2, a3=a3)
        mat = closure_matrix(omega_sq, coeffs)
        h_op = gens[0] + omega_sq * gens[1]
        l_op = gens[0] + a2 * gens[1] + a3 * gens[2]
        for i in range(3):
            inner = commutator(l_op, gens[i])
            rhs_op = 1j * commutator(h_op, gens[i]) - alpha * commutator(l_op, inner)
            predicted = sum(mat[i, j] * gens[j] for j in range(3))
            dev = max_abs(interior_block(rhs_op - predicted, cfg.interior_dim))
            if dev > CLOSURE_GATE_TOL:
                raise NumericalError(
                    f"moment closure failed its operator check: row {i}, "
                    f"deviation {dev:.3e}")
    return True


@dataclass(frozen=True, eq=False)
class Su11MomentSeries:
    """Expectations of the three quadratic generators on a uniform grid."""

    ts: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray

    def __post_init__(self):
        for name in ("ts", "k1", "k2", "k3"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))


def evolve_su11_moments(omega_s: Schedule, kappa_s: Schedule,
                        sol: ErmakovSolution, v0: tuple[float, float, float],
                        t_max: float, h: float) -> Su11MomentSeries:
    """Integrate the exact closed system for the K-generator expectations."""
    _closure_matrix_verified()
    _check_k_moments(*v0)
    n = _step_count(t_max, h)
    if not (omega_s.covers(0.0, n * h) and kappa_s.covers(0.0, n * h)):
        raise ValidationError("schedules do not cover the integration window")
    half_ts = 0.5 * h * np.arange(2 * n + 1)
    omega_sq, kappa = _half_grid_coefficients(omega_s, kappa_s, n, h)
    if kappa.min() < KAPPA_NEGATIVE_TOL:
        t_bad = 0.5 * h * int(np.argmax(kappa < KAPPA_NEGATIVE_TOL))
        raise NegativeFrictionError(
            f"friction is negative at t={t_bad:.6g}: kappa={kappa.min():.3e}")
    kappa = np.maximum(kappa, 0.0)

    r = np.asarray(sol.rho_at(half_ts), dtype=float)
    v = np.asarray(sol.rhodot_at(half_ts), dtype=float)
    r2 = r * r
    alpha = 4.0 * kappa * r2 * r2 / ((r * v) ** 2 + 4.0)
    a2 = v * v / (2.0 * r2) + 1.0 / (r2 * r2)
    a3 = -v / (2.0 * r)
    identity_dev = np.max(np.abs(alpha * (a2 - a3 * a3) - kappa))
    if identity_dev > COEFF_IDENTITY_TOL:
        raise NumericalError(
            f"coefficient identity violated on the stage grid: {identity_dev:.3e}")

    mats = np.zeros((2 * n + 1, 3, 3))
    diag = alpha * (4.0 * a3 * a3 - 2.0 * a2)
    mats[:, 0, 0] = diag
    mats[:, 0, 1] = 2.0 * alpha * a2 * a2
    mats[:, 0, 2] = -omega_sq + 2.0 * alpha * a2 * a3
    mats[:, 1, 0] = 2.0 * alpha
    mats[:, 1, 1] = diag
    mats[:, 1, 2] = 1.0 + 2.0 * alpha * a3
    mats[:, 2, 0] = 2.0 - 4.0 * alpha * a3
    mats[:, 2, 1] = -2.0 * omega_sq - 4.0 * alpha * a2 * a3
    mats[:, 2, 2] = -4.0 * alpha * a2

    ys = np.empty((n + 1, 3))
    y = np.array(v0, dtype=float)
    ys[0] = y
    for i in range(n):
        m0, mm, m1 = mats[2 * i], mats[2 * i + 1], mats[2 * i + 2]
        s1 = m0 @ y
        s2 = mm @ (y + 0.5 * h * s1)
        s3 = mm @ (y + 0.5 * h * s2)
        s4 = m1 @ (y + h * s3)
        y = y + (h / 6.0) * (s1 + 2.0 * (s2 + s3) + s4)
        ys[i + 1] = y

    ts = h * np.arange(n + 1)
    return Su11MomentSeries(ts=ts, k1=ys[:, 0], k2=ys[:, 1], k3=ys[:, 2])
