"""Skeleton action recognition with image encodings and residual networks."""

from .augment import AugmentPolicy, CenterCrop, augment_all, augment_dataset, eval_view
from .dataset_io import DataError, ProtocolSpec, SkeletonSequence, make_split, parse_corpus
from .encoder import PartMap, SkeletonImageEncoder, encode
from .estimator import ResNetClassifier
from .harness import ExperimentResult, report, run_protocol
from .resnet import ResNetConfig, build, param_count
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AugmentPolicy",
    "CenterCrop",
    "DataError",
    "ExperimentResult",
    "PartMap",
    "ProtocolSpec",
    "ResNetClassifier",
    "ResNetConfig",
    "SkeletonImageEncoder",
    "SkeletonSequence",
    "TrainConfig",
    "augment_all",
    "augment_dataset",
    "build",
    "encode",
    "eval_view",
    "evaluate",
    "make_split",
    "param_count",
    "parse_corpus",
    "report",
    "run_protocol",
    "train",
]
