"""Batched adaptive integration of many independent ODE systems.

Two explicit solvers are provided: Runge-Kutta-Cash-Karp 5(4) for nonstiff
systems and second-order Runge-Kutta-Chebyshev with a power-method spectral
radius estimate for moderately stiff ones.
"""

from .batch import BatchStats, OuterLoopResult, integrate_batch, outer_loop, partition
from .errors import (
    BatchOdeError,
    InvalidInterval,
    InvalidShape,
    InvalidStageCount,
    StepSizeUnderflow,
)
from .layout import BatchStates, pack, unpack
from .problem import IntegrationStats, OdeProblem, SolverChoice, ToleranceSettings
from .rkc import rkc_driver
from .rkck import rkck_driver

__version__ = "0.1.0"

__all__ = [
    "BatchOdeError",
    "BatchStates",
    "BatchStats",
    "IntegrationStats",
    "InvalidInterval",
    "InvalidShape",
    "InvalidStageCount",
    "OdeProblem",
    "OuterLoopResult",
    "SolverChoice",
    "StepSizeUnderflow",
    "ToleranceSettings",
    "integrate_batch",
    "outer_loop",
    "pack",
    "partition",
    "rkc_driver",
    "rkck_driver",
    "unpack",
]
