"""Decision-aware training and inference for long-tailed classification."""

__version__ = "0.1.0"

from rfdlc.utility import UtilityMatrix
from rfdlc.data import LabeledDataset, WeightForm
from rfdlc.model import MlpArchitecture, ParticleEnsemble
from rfdlc.objective import ObjectiveConfig
from rfdlc.trainer import TrainConfig, train

__all__ = [
    "UtilityMatrix",
    "LabeledDataset",
    "WeightForm",
    "MlpArchitecture",
    "ParticleEnsemble",
    "ObjectiveConfig",
    "TrainConfig",
    "train",
]
