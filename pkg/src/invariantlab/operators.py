"""Finite-dimensional operator core on a truncated Fock basis.

Everything downstream works with dense complex matrices in the number basis
of a reference oscillator with frequency ``omega_ref`` (hbar = m = 1).  The
canonical pair, the three quadratic generators K1 = p^2/2, K2 = x^2/2,
K3 = (px+xp)/2, density matrices, and expectation values are built here.

Truncation policy: operators are built at the working dimension N with no
padding.  Identities such as [x, p] = i hold exactly only away from the
truncation edge, so algebra checks are evaluated on an interior block and
states are monitored for population leaking into the top levels.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field

import numpy as np

from .errors import SupportLeakError, ValidationError

# Tolerances used across the package (an order above double-precision
# accumulation noise for dims up to ~128).
HERMITICITY_TOL = 1e-12      # operator flag threshold
DENSITY_HERM_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-9
DENSITY_EIG_FLOOR = -1e-8
SUPPORT_LEAK_TOL = 1e-10

# Default interior margin: commutator identities of the quadratic generators
# are exact on levels 0..N-7 (pentadiagonal operators contaminate the top
# levels only).
INTERIOR_MARGIN = 6


@dataclass(frozen=True)
class BasisConfig:
    """Working basis: dimension, reference frequency, tail monitoring."""

    dim: int
    omega_ref: float
    tail_fraction: float = 0.1
    tail_threshold: float = 1e-8

    def __post_init__(self):
        if self.dim < 8:
            raise ValidationError(f"basis.dim must be >= 8, got {self.dim}")
        if not self.omega_ref > 0:
            raise ValidationError(f"basis.omega_ref must be > 0, got {self.omega_ref}")
        if not 0 < self.tail_fraction < 1:
            raise ValidationError(
                f"basis.tail_fraction must lie in (0,1), got {self.tail_fraction}")
        if not self.tail_threshold > 0:
            raise ValidationError(
                f"basis.tail_threshold must be > 0, got {self.tail_threshold}")

    @property
    def n_tail(self) -> int:
        """Number of top levels summed into the tail-population diagnostic."""
        return max(1, int(round(self.tail_fraction * self.dim)))

    @property
    def interior_dim(self) -> int:
        return self.dim - INTERIOR_MARGIN


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex, copy=True, order="C")
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Dense complex matrix on the truncated Fock space."""

    entries: np.ndarray
    hermitian: bool = field(init=False)

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError(f"operator must be square, got shape {entries.shape}")
        entries = _readonly(entries)
        if not np.all(np.isfinite(entries.view(float))):
            raise ValidationError("operator entries must be finite")
        object.__setattr__(self, "entries", entries)
        dev = max_abs(entries - entries.conj().T)
        object.__setattr__(self, "hermitian", bool(dev <= HERMITICITY_TOL))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def herm_deviation(self) -> float:
        return max_abs(self.entries - self.entries.conj().T)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Unit-trace positive-semidefinite state, dense in the Fock basis.

    With ``validate=False`` the tolerance checks are skipped; the evolution
    engine uses that to record diagnostics for states it is about to flag
    instead of refusing to hold them.
    """

    entries: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        entries = _readonly(np.asarray(self.entries))
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError(f"state must be square, got shape {entries.shape}")
        object.__setattr__(self, "entries", entries)
        if validate:
            dev = self.herm_deviation()
            if dev > DENSITY_HERM_TOL:
                raise ValidationError(f"state not Hermitian: max|rho-rho^†| = {dev:.3e}")
            tr = self.trace()
            if abs(tr - 1.0) > DENSITY_TRACE_TOL:
                raise ValidationError(f"state trace {tr!r} differs from 1")
            lo = self.min_eigenvalue()
            if lo < DENSITY_EIG_FLOOR:
                raise ValidationError(f"state has negative eigenvalue {lo:.3e}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def herm_deviation(self) -> float:
        return max_abs(self.entries - self.entries.conj().T)

    def min_eigenvalue(self) -> float:
        sym = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(sym)[0])


@dataclass(frozen=True)
class StateSpec:
    """Initial-state menu: coherent / fock / thermal / invariant_ground."""

    kind: str
    beta: complex = 0.0 + 0.0j
    fock_n: int = 0
    nbar: float = 0.0

    KINDS = ("coherent", "fock", "thermal", "invariant_ground")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"state.kind must be one of {self.KINDS}, got {self.kind!r}")
        if self.kind == "fock" and self.fock_n < 0:
            raise ValidationError("state.fock_n must be >= 0")
        if self.kind == "thermal" and self.nbar < 0:
            raise ValidationError("state.nbar must be >= 0")

    def check_against(self, cfg: BasisConfig):
        """Keep the requested support well away from the truncation edge."""
        if self.kind == "coherent" and abs(self.beta) ** 2 >= cfg.dim / 4:
            raise ValidationError(
                f"|beta|^2 = {abs(self.beta)**2:.3g} too large for dim {cfg.dim} (needs < dim/4)")
        if self.kind == "fock" and self.fock_n >= cfg.dim / 2:
            raise ValidationError(
                f"fock_n = {self.fock_n} too large for dim {cfg.dim} (needs < dim/2)")
        if self.kind == "thermal" and self.nbar >= cfg.dim / 8:
            raise ValidationError(
                f"nbar = {self.nbar} too large for dim {cfg.dim} (needs < dim/8)")


# ---------------------------------------------------------------------------
# array helpers (raw ndarray in, raw ndarray out; used throughout the engine)

def max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def interior_block(m: np.ndarray, k: int) -> np.ndarray:
    """Compression onto the lowest k Fock levels."""
    return m[:k, :k]


def trace_pair(a: np.ndarray, b: np.ndarray) -> complex:
    """tr[a @ b] without forming the product."""
    return complex(np.sum(a * b.T))


# ---------------------------------------------------------------------------
# constructors

def build_canonical(cfg: BasisConfig) -> tuple[FockOperator, FockOperator]:
    """Position and momentum matrices in the number basis of omega_ref.

    x = (a + a†)/sqrt(2 w), p = i sqrt(w/2) (a† - a).  Both come out exactly
    Hermitian; [x, p] = i holds on levels 0..N-2 (the corner element of the
    commutator is spoiled by truncation).
    """
    n = np.arange(1, cfg.dim)
    lower = np.diag(np.sqrt(n.astype(float)), 1)  # a|n> = sqrt(n)|n-1>
    raise_op = lower.T
    w = cfg.omega_ref
    x = (lower + raise_op) / np.sqrt(2.0 * w)
    p = 1j * np.sqrt(w / 2.0) * (raise_op - lower)
    return FockOperator(x), FockOperator(p)


def build_su11_generators(
    x: FockOperator, p: FockOperator
) -> tuple[FockOperator, FockOperator, FockOperator]:
    """Quadratic generators K1 = p²/2, K2 = x²/2, K3 = (px+xp)/2."""
    if x.dim != p.dim:
        raise ValidationError(f"dimension mismatch: {x.dim} vs {p.dim}")
    xm, pm = x.entries, p.entries
    k1 = 0.5 * (pm @ pm)
    k2 = 0.5 * (xm @ xm)
    k3 = 0.5 * (pm @ xm + xm @ pm)
    return FockOperator(k1), FockOperator(k2), FockOperator(k3)


def check_su11_relations(
    k1: FockOperator, k2: FockOperator, k3: FockOperator, interior_dim: int
) -> tuple[float, float, float]:
    """Residual norms of the three commutation relations on an interior block.

    Returns max-norms of [K1,K2]+iK3, [K2,K3]-2iK2, [K3,K1]-2iK1 compressed
    onto levels 0..interior_dim-1.  The relations are exact away from the
    truncation edge; at full dimension the edge contaminates them.
    """
    dim = k1.dim
    if not (k2.dim == dim and k3.dim == dim):
        raise ValidationError("generator dimensions differ")
    if interior_dim > dim or interior_dim < 1:
        raise ValidationError(f"interior_dim {interior_dim} out of range for dim {dim}")
    a, b, c = k1.entries, k2.entries, k3.entries
    r1 = commutator(a, b) + 1j * c
    r2 = commutator(b, c) - 2j * b
    r3 = commutator(c, a) - 2j * a
    k = interior_dim
    return (
        max_abs(interior_block(r1, k)),
        max_abs(interior_block(r2, k)),
        max_abs(interior_block(r3, k)),
    )


def build_state(
    spec: StateSpec, cfg: BasisConfig, invariant_op: FockOperator | None = None
) -> DensityMatrix:
    """Construct the initial density matrix requested by ``spec``.

    Coherent and thermal states are renormalized after truncation; if the
    pre-renormalization trace is off by more than SUPPORT_LEAK_TOL the
    requested state does not fit the basis and a SupportLeakError is raised.
    """
    spec.check_against(cfg)
    dim = cfg.dim

    if spec.kind == "fock":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[spec.fock_n, spec.fock_n] = 1.0
        return DensityMatrix(rho)

    if spec.kind == "coherent":
        psi = np.zeros(dim, dtype=complex)
        psi[0] = np.exp(-0.5 * abs(spec.beta) ** 2)
        for n in range(1, dim):
            psi[n] = psi[n - 1] * spec.beta / np.sqrt(n)
        norm = float(np.sum(np.abs(psi) ** 2))
        _check_support(norm, spec, cfg)
        psi /= np.sqrt(norm)
        return DensityMatrix(np.outer(psi, psi.conj()))

    if spec.kind == "thermal":
        if spec.nbar == 0:
            weights = np.zeros(dim)
            weights[0] = 1.0
        else:
            q = spec.nbar / (spec.nbar + 1.0)
            weights = (1.0 - q) * q ** np.arange(dim)
        norm = float(weights.sum())
        _check_support(norm, spec, cfg)
        return DensityMatrix(np.diag(weights / norm).astype(complex))

    # invariant_ground
    if invariant_op is None:
        raise ValidationError("invariant_ground state needs the invariant operator")
    if not invariant_op.hermitian:
        raise ValidationError("invariant operator must be Hermitian")
    _, vecs = np.linalg.eigh(invariant_op.entries)
    ground = vecs[:, 0]
    return DensityMatrix(np.outer(ground, ground.conj()))


def _check_support(norm: float, spec: StateSpec, cfg: BasisConfig):
    deficit = abs(1.0 - norm)
    if deficit > SUPPORT_LEAK_TOL:
        raise SupportLeakError(
            f"{spec.kind} state loses trace {deficit:.3e} to truncation at dim {cfg.dim}")


def expectation(op: FockOperator, rho: DensityMatrix) -> float:
    """Re tr[A rho] for Hermitian A; rejects inputs that make it complex."""
    if op.dim != rho.dim:
        raise ValidationError(f"dimension mismatch: {op.dim} vs {rho.dim}")
    if not op.hermitian:
        raise ValidationError(
            f"observable is not Hermitian (deviation {op.herm_deviation():.3e})")
    val = trace_pair(op.entries, rho.entries)
    if abs(val.imag) > 1e-10:
        raise ValidationError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)
