"""Obfuscation of crowdsourced signal-strength data and privacy-utility benchmarking."""

from .adversary import InferenceAdversary
from .dataset import Dataset, FeatureMatrix, NormStats, load_csv, synthesize
from .metrics import MetricWeights
from .privatizers import GapPrivatizer, ItPrivatizer, LdpPrivatizer, NoisePrivatizer
from .rssmap import RssRegressor

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FeatureMatrix",
    "GapPrivatizer",
    "InferenceAdversary",
    "ItPrivatizer",
    "LdpPrivatizer",
    "MetricWeights",
    "NoisePrivatizer",
    "NormStats",
    "RssRegressor",
    "load_csv",
    "synthesize",
]
