"""Closed-form conserved observables and their verification toolkit.

Three families of observables are constructed from auxiliary-equation
data:

* the quadratic form ``rho^2 K1 + (rhodot^2 + 1/rho^2) K2 - rho rhodot K3``
  built on a solution of the dissipative auxiliary equation, whose
  expectation is conserved under the damped evolution up to the defect
  quantified below;
* the same quadratic form specialized to a frictionless auxiliary
  solution, written directly in the canonical pair as
  ``[(rho p - rhodot x)^2 + x^2/rho^2] / 2``;
* the linear form ``eps p - epsdot x`` built on a classical mode of the
  undamped oscillator, conserved under unitary evolution.

The verification toolkit evaluates operator-equation residuals by
central differencing of the closed forms (so the check is independent
of the algebra used to derive them), expectation series along density
trajectories, instantaneous spectra with continuity-checked pairing,
the per-eigenvalue drift formula, and the three coupled constraint
equations relating the jump-operator coefficients to the auxiliary
solution.

A structural note verified by the tests.  Expanding the transport
equation in the closed algebra of the three quadratic generators shows
that the constructed quadratic form satisfies it only up to an exact
defect term ``i kappa rho rhodot K3``: the coefficient construction
cancels the K1 and K2 components identically, and the K3 component
reduces to ``rho (rhoddot + omega^2 rho - 1/rho^3) = kappa rho rhodot``
by the auxiliary equation.  Consequences, each pinned quantitatively by
a test: the operator-equation residual equals ``|kappa rho rhodot|``
times the interior norm of K3; expectation series creep at rate
``kappa rho rhodot <K3>``; and the drift formula applied to the closed
form returns exactly ``-kappa (rho rhodot)^2 (n + 1/2)`` even though
its instantaneous spectrum is pinned to ``n + 1/2`` at every time by
the unit discriminant ``rho^2 (rhodot^2 + 1/rho^2) - (rho rhodot)^2 =
1`` (the drift formula presumes an exact transport solution, which the
closed form is not).  The defect vanishes identically when the friction
vanishes or when the auxiliary solution sits at an equilibrium point
(``rhodot = 0``), which are therefore the regimes where conservation,
residual, and drift checks are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .auxiliary import ErmakovSolution
from .errors import NumericalError, ValidationError
from .lindblad import LindbladCoefficients, LindbladModel, Trajectory
from .operators import (
    FockOperator,
    commutator,
    expectation,
    interior_block,
    max_abs,
)
from .schedules import Schedule

__all__ = [
    "DEGENERATE_MODE_TOL",
    "DRIFT_GAP_TOL",
    "ExpectationSeries",
    "InvariantSpec",
    "SpectrumSeries",
    "constraint_residuals",
    "drift_rhs",
    "expectation_series",
    "invariant_residual",
    "linear_invariant_at",
    "lr_invariant_at",
    "spectrum_series",
    "weak_invariant_at",
]

# Half-step for central differencing of closed-form time derivatives.
FD_HALF_STEP = 1e-4
# Sorted-order eigenvalue pairing is flagged when one level moves more
# than this between consecutive sample times.
CONTINUITY_BOUND = 0.1
# Eigenpairs closer than this to a neighbor are excluded from drift
# predictions (the projector formula needs simple eigenvalues).
DRIFT_GAP_TOL = 1e-6
# A linear mode with |eps| + |epsdot| below this at some time is the
# identically-zero solution and yields no observable.
DEGENERATE_MODE_TOL = 1e-12


def weak_invariant_at(sol: ErmakovSolution, k1: FockOperator,
                      k2: FockOperator, k3: FockOperator,
                      t: float) -> FockOperator:
    """Quadratic conserved observable on a dissipative auxiliary solution.

    Returns ``rho^2 K1 + (rhodot^2 + 1/rho^2) K2 - rho rhodot K3``
    evaluated at ``t``.  The coefficient matrix has unit discriminant
    for every (rho, rhodot), so the interior spectrum sits at n + 1/2.
    """
    if not (k1.dim == k2.dim == k3.dim):
        raise ValidationError("generator dimensions differ")
    r = float(sol.rho_at(t))
    v = float(sol.rhodot_at(t))
    return FockOperator((r * r) * k1.entries
                        + (v * v + 1.0 / (r * r)) * k2.entries
                        - (r * v) * k3.entries)


def lr_invariant_at(sol0: ErmakovSolution, x_op: FockOperator,
                    p_op: FockOperator, t: float) -> FockOperator:
    """Frictionless quadratic invariant in its canonical-pair form.

    Returns ``[(rho p - rhodot x)^2 + x^2 / rho^2] / 2`` for a solution
    of the undamped auxiliary equation; expanding the square reproduces
    ``weak_invariant_at`` on the same (rho, rhodot) exactly.
    """
    if x_op.dim != p_op.dim:
        raise ValidationError("canonical-pair dimensions differ")
    r = float(sol0.rho_at(t))
    v = float(sol0.rhodot_at(t))
    a = r * p_op.entries - v * x_op.entries
    x2 = x_op.entries @ x_op.entries
    return FockOperator(0.5 * (a @ a) + (0.5 / (r * r)) * x2)


def linear_invariant_at(mode: ErmakovSolution, x_op: FockOperator,
                        p_op: FockOperator, t: float) -> FockOperator:
    """Linear conserved observable ``eps p - epsdot x`` on a classical mode.

    The identically-zero mode would produce the zero operator, which is
    conserved but carries no information; it is rejected as degenerate.
    """
    if x_op.dim != p_op.dim:
        raise ValidationError("canonical-pair dimensions differ")
    e = float(mode.rho_at(t))
    ed = float(mode.rhodot_at(t))
    if abs(e) + abs(ed) <= DEGENERATE_MODE_TOL:
        raise ValidationError(
            f"degenerate mode at t={t:.6g}: eps and epsdot both vanish, "
            "the resulting observable is the zero operator")
    return FockOperator(e * p_op.entries - ed * x_op.entries)


@dataclass(frozen=True)
class InvariantSpec:
    """A conserved-observable family: kind, source solution, operators.

    kinds:
      * ``weak``              — quadratic form on a dissipative auxiliary
                                solution; operators = (K1, K2, K3)
      * ``lewis_riesenfeld``  — quadratic form on a frictionless solution
                                written in the canonical pair;
                                operators = (x, p)
      * ``linear``            — linear form on a classical mode;
                                operators = (x, p)

    The caller is responsible for supplying a frictionless solution for
    the ``lewis_riesenfeld`` kind (the solution object does not record
    which friction schedule produced it).
    """

    kind: str
    sol: ErmakovSolution
    operators: tuple[FockOperator, ...]

    KINDS = ("weak", "lewis_riesenfeld", "linear")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(
                f"kind must be one of {self.KINDS}, got {self.kind!r}")
        want = 3 if self.kind == "weak" else 2
        if len(self.operators) != want:
            raise ValidationError(
                f"{self.kind} invariant needs {want} operators, "
                f"got {len(self.operators)}")
        dims = {op.dim for op in self.operators}
        if len(dims) != 1:
            raise ValidationError("operator dimensions differ")
        if self.kind == "linear":
            if self.sol.enforce_floor:
                raise ValidationError(
                    "linear invariant needs a classical mode "
                    "(solve_classical_mode), not an auxiliary solution")
        elif not self.sol.enforce_floor:
            raise ValidationError(
                f"{self.kind} invariant needs an auxiliary solution, "
                "not a classical mode")

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @property
    def window(self) -> tuple[float, float]:
        return self.sol.window

    def at(self, t: float) -> FockOperator:
        if self.kind == "weak":
            return weak_invariant_at(self.sol, *self.operators, t)
        if self.kind == "lewis_riesenfeld":
            return lr_invariant_at(self.sol, *self.operators, t)
        return linear_invariant_at(self.sol, *self.operators, t)


def invariant_residual(inv: InvariantSpec, model: LindbladModel, t: float,
                       h_t: float = FD_HALF_STEP) -> float:
    """Interior max-norm defect of the conservation operator equation.

    Evaluates ``i dI/dt - [H, I] - i sum_n alpha_n [L_n, [L_n, I]]`` for
    the ``weak`` kind and ``i dI/dt - [H, I]`` for the frictionless
    kinds, with dI/dt obtained by central differencing of the closed
    form at half-step ``h_t`` — deliberately independent of the algebra
    that constructed the observable.
    """
    if h_t <= 0:
        raise ValidationError(f"h_t must be > 0, got {h_t}")
    cfg = model.basis
    if inv.dim != cfg.dim:
        raise ValidationError(
            f"invariant dimension {inv.dim} does not match basis {cfg.dim}")
    d_op = (inv.at(t + h_t).entries - inv.at(t - h_t).entries) / (2.0 * h_t)
    i_op = inv.at(t).entries
    res = 1j * d_op - commutator(model.hamiltonian_at(t).entries, i_op)
    if inv.kind == "weak":
        for alpha, jump in model.dissipators_at(t):
            l_arr = jump.entries
            res -= 1j * alpha * commutator(l_arr, commutator(l_arr, i_op))
    return max_abs(interior_block(res, cfg.interior_dim))


@dataclass(frozen=True, eq=False)
class ExpectationSeries:
    """Expectation of a conserved observable along a recorded trajectory."""

    ts: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("ts", "values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.ts.shape != self.values.shape:
            raise ValidationError("time and value grids differ in length")

    @property
    def rel_drift(self) -> np.ndarray:
        base = self.values[0]
        scale = max(abs(base), np.finfo(float).tiny)
        return np.abs(self.values - base) / scale

    @property
    def max_rel_drift(self) -> float:
        return float(np.max(self.rel_drift))

    def write_csv(self, path, precision: int = 12):
        fmt = f"{{:.{precision}g}}"
        drift = self.rel_drift
        with open(path, "w") as fh:
            fh.write("t,expect_I,rel_drift\n")
            for i in range(len(self.ts)):
                fh.write(",".join(fmt.format(v) for v in
                                  (self.ts[i], self.values[i], drift[i]))
                         + "\n")


def expectation_series(traj: Trajectory, inv: InvariantSpec) -> ExpectationSeries:
    """tr[I(t) rho(t)] at the trajectory's record times."""
    if inv.dim != traj.basis.dim:
        raise ValidationError(
            f"invariant dimension {inv.dim} does not match "
            f"trajectory basis {traj.basis.dim}")
    lo, hi = inv.window
    if traj.ts[0] < lo - 1e-12 or traj.ts[-1] > hi + 1e-12:
        raise ValidationError(
            f"trajectory window [{traj.ts[0]:g}, {traj.ts[-1]:g}] is not "
            f"covered by the invariant's window [{lo:g}, {hi:g}]")
    values = np.array([expectation(inv.at(float(t)), state)
                       for t, state in zip(traj.ts, traj.states)])
    return ExpectationSeries(ts=np.asarray(traj.ts, dtype=float),
                             values=values)


@dataclass(frozen=True, eq=False)
class SpectrumSeries:
    """Lowest eigenvalues over time, paired by sorted order.

    ``flagged`` lists (time index, level index) pairs where a level
    moved more than the continuity bound between consecutive samples —
    there the sorted-order pairing is unreliable.  Flagging is advisory,
    never fatal.
    """

    ts: np.ndarray
    levels: np.ndarray  # shape (len(ts), m), ascending along axis 1
    continuity_bound: float
    flagged: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if levels.shape[0] != ts.shape[0]:
            raise ValidationError("level rows do not match the time grid")
        if np.any(np.diff(levels, axis=1) < 0):
            raise ValidationError("per-time eigenvalue lists must be sorted")
        for name, arr in (("ts", ts), ("levels", levels)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.levels.shape[1]

    @property
    def pairing_ok(self) -> bool:
        return not self.flagged

    def write_csv(self, path, precision: int = 12):
        fmt = f"{{:.{precision}g}}"
        header = "t," + ",".join(f"lambda_{n}" for n in range(self.m))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(len(self.ts)):
                row = [self.ts[i], *self.levels[i]]
                fh.write(",".join(fmt.format(v) for v in row) + "\n")


def _operator_at_factory(source, times):
    """Normalize the spectrum source to a t -> ndarray callable."""
    if isinstance(source, InvariantSpec):
        return lambda t: source.at(t).entries, source.dim
    if hasattr(source, "operators") and hasattr(source, "ts"):
        lookup = {round(float(t), 9): i for i, t in enumerate(source.ts)}
        missing = [t for t in times if round(float(t), 9) not in lookup]
        if missing:
            raise ValidationError(
                f"time {missing[0]:g} is not a record time of the "
                "operator trajectory")
        ops = source.operators

        def from_records(t):
            return ops[lookup[round(float(t), 9)]].entries

        return from_records, ops[0].dim
    if callable(source):
        probe = source(float(times[0]))
        return lambda t: source(t).entries, probe.dim
    raise ValidationError(
        "spectrum source must be an InvariantSpec, an operator "
        "trajectory, or a callable t -> FockOperator")


def spectrum_series(source, times, m: int,
                    continuity_bound: float = CONTINUITY_BOUND) -> SpectrumSeries:
    """Lowest ``m`` eigenvalues of a time-indexed observable family.

    ``source`` may be an InvariantSpec (closed form), an operator
    trajectory from the transport engine (``times`` must then be record
    times), or any callable mapping t to a FockOperator.  Requires
    m <= dim/3 so the reported levels stay clear of the truncation edge.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValidationError("times must be a non-empty 1-d sequence")
    at, dim = _operator_at_factory(source, times)
    if not 1 <= m <= dim // 3:
        raise ValidationError(
            f"m must lie in [1, dim/3] = [1, {dim // 3}], got {m}")
    levels = np.empty((times.size, m))
    for i, t in enumerate(times):
        arr = at(float(t))
        sym = 0.5 * (arr + arr.conj().T)
        levels[i] = np.linalg.eigvalsh(sym)[:m]
    flagged = [(i + 1, n)
               for i in range(times.size - 1)
               for n in range(m)
               if abs(levels[i + 1, n] - levels[i, n]) > continuity_bound]
    return SpectrumSeries(ts=times, levels=levels,
                          continuity_bound=continuity_bound,
                          flagged=tuple(flagged))


def drift_rhs(j_op: FockOperator, lam: np.ndarray, vecs: np.ndarray,
              l_op: FockOperator | None, alpha: float, m: int,
              gap_tol: float = DRIFT_GAP_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Predicted instantaneous eigenvalue drift of an evolving observable.

    For each retained eigenpair (lam[i], vecs[:, i]) of J, returns

        2 alpha (lam[i] <v_i|L^2|v_i> - <L v_i|J|L v_i>)

    which equals d lam[i]/dt along the transport flow when the
    eigenvalue is simple.  Pairs among the lowest ``m`` whose gap to a
    neighbor is below ``gap_tol`` are excluded (the formula needs a
    one-dimensional eigenprojector).  Returns (kept indices, drifts).
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(np.diff(lam) < 0):
        raise ValidationError("eigenvalues must be sorted ascending")
    if not 1 <= m <= lam.size:
        raise ValidationError(f"m must lie in [1, {lam.size}], got {m}")
    if alpha < 0:
        raise ValidationError(f"alpha must be >= 0, got {alpha}")
    if alpha > 0 and l_op is None:
        raise ValidationError("a jump operator is required when alpha > 0")

    kept = []
    for i in range(m):
        gap_lo = np.inf if i == 0 else lam[i] - lam[i - 1]
        gap_hi = np.inf if i == lam.size - 1 else lam[i + 1] - lam[i]
        if min(gap_lo, gap_hi) >= gap_tol:
            kept.append(i)
    if not kept:
        raise NumericalError(
            f"all {m} candidate eigenpairs are degenerate within "
            f"gap {gap_tol:g}; no drift prediction is possible")
    kept = np.asarray(kept, dtype=int)
    if alpha == 0.0:
        return kept, np.zeros(kept.size)

    j_arr = j_op.entries
    l_arr = l_op.entries
    l_sq = l_arr.conj().T @ l_arr
    drifts = np.empty(kept.size)
    for out, i in enumerate(kept):
        v = vecs[:, i]
        lv = l_arr @ v
        drifts[out] = 2.0 * alpha * (
            lam[i] * float(np.real(v.conj() @ (l_sq @ v)))
            - float(np.real(lv.conj() @ (j_arr @ lv))))
    return kept, drifts


def constraint_residuals(sol: ErmakovSolution, coeffs: LindbladCoefficients,
                         kappa_s: Schedule, omega_s: Schedule,
                         t: float) -> tuple[float, float, float]:
    """Left-hand sides of the three coupled coefficient constraints.

    The constraints tie the jump-operator coefficients (alpha, a2, a3)
    to the auxiliary solution; with the construction used by
    ``coefficients_at`` all three vanish identically.  They are
    evaluated exactly as displayed — the second keeps its overall
    rhodot prefactor on the auxiliary bracket, no simplification is
    applied first — with rho'' reconstructed from the dissipative
    auxiliary equation.
    """
    r = float(sol.rho_at(t))
    v = float(sol.rhodot_at(t))
    w = float(omega_s.eval(t))
    kap = float(kappa_s.eval(t))
    alpha, a2, a3 = coeffs.alpha, coeffs.a2, coeffs.a3

    rddot = kap * v - (w * w) * r + 1.0 / r ** 3
    bracket = rddot + (w * w) * r - 1.0 / r ** 3
    q = v * v + 1.0 / (r * r)

    e1 = kap * r * r - alpha * (a3 * a3 * r * r + 2.0 * a3 * r * v + q)
    e2 = v * bracket + (alpha * (a2 * a2 * r * r + 2.0 * a2 * a3 * r * v
                                 + a3 * a3 * q) - kap * q)
    e3 = r * bracket - alpha * (a2 * a3 * r * r + 2.0 * a2 * r * v + a3 * q)
    return float(e1), float(e2), float(e3)
