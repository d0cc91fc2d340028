"""Halpern-type proximal point iterations with exact quantitative rates and empirical certification."""

from .certify import CertReport, CheckResult, WitnessRecord
from .config import ExperimentConfig
from .counterfunctions import Counterfunction
from .dynamics import Trajectory, browder_path, run_halpern, run_hppa, run_ppa
from .moduli import ModuliPack
from .operators import (AbsSubdiff, AffinePD, MonotoneOperator, NormalConeBall, NormalConeBox,
                        QuadraticShift)
from .schedules import ParamSchedule
from .showcase import run_section5
from .tolerance import Tolerance

__version__ = "0.1.0"

__all__ = [
    "AbsSubdiff", "AffinePD", "CertReport", "CheckResult", "Counterfunction", "ExperimentConfig",
    "ModuliPack", "MonotoneOperator", "NormalConeBall", "NormalConeBox", "ParamSchedule", "QuadraticShift",
    "Tolerance", "Trajectory", "WitnessRecord", "browder_path", "run_halpern", "run_hppa", "run_ppa",
    "run_section5",
]
