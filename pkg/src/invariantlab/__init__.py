"""Weak-invariant laboratory for the damped quantum harmonic oscillator.

Simulates the Lindblad dynamics of an oscillator with time-dependent
frequency and friction, constructs the associated weak invariant from a
nonlinear auxiliary equation, and verifies the algebraic and dynamical
identities the construction implies.
"""

__version__ = "0.1.0"

from .errors import (
    InvariantLabError,
    NegativeFrictionError,
    NumericalError,
    ParseError,
    PositivityLossError,
    SingularityError,
    SupportLeakError,
    TruncationLeakError,
    ValidationError,
)
from .runner import (
    CheckResult,
    RunReport,
    SimulationResult,
    run_scenario,
    sweep,
    verify_scenario,
)
from .scenario import Scenario, build_scenario, load_scenario, schema_text

__all__ = [
    "CheckResult",
    "InvariantLabError",
    "NegativeFrictionError",
    "NumericalError",
    "ParseError",
    "PositivityLossError",
    "RunReport",
    "Scenario",
    "SimulationResult",
    "SingularityError",
    "SupportLeakError",
    "TruncationLeakError",
    "ValidationError",
    "build_scenario",
    "load_scenario",
    "run_scenario",
    "schema_text",
    "sweep",
    "verify_scenario",
]
