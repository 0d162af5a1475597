"""Error taxonomy shared by the whole package.

Exit-code convention used by the CLI:
  1 -- a verification check failed (no exception involved),
  2 -- configuration problems (ParseError, ValidationError),
  3 -- numerical failures during a run (NumericalError subclasses).
"""


class InvariantLabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParseError(InvariantLabError):
    """Scenario file is unreadable or syntactically malformed."""

    exit_code = 2


class ValidationError(InvariantLabError):
    """Input is well-formed but violates a documented constraint."""

    exit_code = 2


class NumericalError(InvariantLabError):
    """A run aborted because a numerical guard tripped."""

    exit_code = 3


class NegativeFrictionError(NumericalError):
    """Friction coefficient went negative: the dissipator weight would be < 0."""


class SingularityError(NumericalError):
    """Auxiliary solution approached zero; the 1/rho^3 term is blowing up."""


class TruncationLeakError(NumericalError):
    """Population leaked into the monitored tail of the truncated basis."""


class PositivityLossError(NumericalError):
    """Density matrix developed a negative eigenvalue beyond tolerance."""


class SupportLeakError(NumericalError):
    """State construction lost more probability to truncation than allowed."""
