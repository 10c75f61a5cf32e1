"""Private, communication-limited distributed estimation.

SQKR for mean estimation, recursive Hadamard response for frequency and
distribution estimation, a Hadamard heavy-hitter scheme, the Subset
Selection and separation baselines, and an experiment harness.
"""

from .core import fwht, hadamard_entry, pack_message, unpack_message
from .estimators import (
    HeavyHitterEstimator,
    RHRDistributionEstimator,
    RHRFrequencyEstimator,
    SeparationEstimator,
    SQKRMeanEstimator,
    StatisticalSQKRMeanEstimator,
    SubsetSelectionEstimator,
)
from .frames import build_frame, kashin_decompose
from .privacy import RRParams, SharedRandomness, rr_perturb

__version__ = "0.1.0"

__all__ = [
    "HeavyHitterEstimator", "RHRDistributionEstimator", "RHRFrequencyEstimator", "RRParams",
    "SQKRMeanEstimator", "SeparationEstimator", "SharedRandomness", "StatisticalSQKRMeanEstimator",
    "SubsetSelectionEstimator", "build_frame", "fwht", "hadamard_entry", "kashin_decompose",
    "pack_message", "rr_perturb", "unpack_message",
]
