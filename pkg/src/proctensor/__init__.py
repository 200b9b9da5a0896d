"""Process tensors in matrix-product-operator form.

The package builds the multi-time propagator of a small open quantum
system exactly, learns a compressed matrix-product-operator model of it
from simulated interventions, and scores the learned model against the
exact one.
"""

from proctensor.exceptions import CapabilityError, NumericalError, ValidationError
from proctensor.model import ModelParams, Superoperator
from proctensor.tn import MPO, MPS
from proctensor.process import InstrumentElement, ProcessMPO
from proctensor.datagen import Dataset
from proctensor.learn import TrainConfig, TrainReport
from proctensor.evaluation import EvalReport

__all__ = [
    "CapabilityError",
    "NumericalError",
    "ValidationError",
    "ModelParams",
    "Superoperator",
    "MPO",
    "MPS",
    "InstrumentElement",
    "ProcessMPO",
    "Dataset",
    "TrainConfig",
    "TrainReport",
    "EvalReport",
]
