"""The four privatizers: Gaussian noise, local DP, GAP and the codebook (IT) privatizer."""

from .basic import LdpParams, LdpPrivatizer, NoiseParams, NoisePrivatizer
from .gap import GapModel, GapParams, GapPrivatizer
from .infotheory import ItParams, ItPrivatizer

__all__ = [
    "GapModel",
    "GapParams",
    "GapPrivatizer",
    "ItParams",
    "ItPrivatizer",
    "LdpParams",
    "LdpPrivatizer",
    "NoiseParams",
    "NoisePrivatizer",
]
