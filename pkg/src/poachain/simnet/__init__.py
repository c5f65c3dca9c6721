from .checks import ConvergenceResult, SafetyResult, assert_convergence, assert_safety
from .config import ConfigInvalid, SimConfig
from .engine import SimTrace, Simulation, run

__all__ = [
    "ConvergenceResult", "SafetyResult", "assert_convergence", "assert_safety",
    "ConfigInvalid", "SimConfig", "SimTrace", "Simulation", "run",
]
