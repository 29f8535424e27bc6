"""Multi-source domain-adaptive defect category prediction."""

from .corpus import Corpus, Sample, load_corpus, make_batches, split_target, tokenize
from .estimator import DomainAdaptiveClassifier, HashedNgramFeaturizer
from .featurize import featurize
from .labels import CWE_IDS, CweLabel
from .losses import DomainCorrelation, KernelConfig
from .metrics import ConfusionMatrix, RunResult
from .networks import ModelBundle, init_bundle, load_checkpoint, save_checkpoint
from .ranking import RankTable, ScoreGroup, cohens_d, scott_knott_esd
from .synth import SynthConfig, synth_corpus
from .training import TrainConfig, TrainReport, lambda_schedule, predict, train

__version__ = "0.1.0"

__all__ = [
    "CWE_IDS",
    "ConfusionMatrix",
    "Corpus",
    "CweLabel",
    "DomainAdaptiveClassifier",
    "DomainCorrelation",
    "HashedNgramFeaturizer",
    "KernelConfig",
    "ModelBundle",
    "RankTable",
    "RunResult",
    "Sample",
    "ScoreGroup",
    "SynthConfig",
    "TrainConfig",
    "TrainReport",
    "cohens_d",
    "featurize",
    "init_bundle",
    "lambda_schedule",
    "load_checkpoint",
    "load_corpus",
    "make_batches",
    "predict",
    "save_checkpoint",
    "scott_knott_esd",
    "split_target",
    "synth_corpus",
    "tokenize",
    "train",
]
