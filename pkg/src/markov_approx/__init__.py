"""Desk-scale verification of Markov-process approximation rates in Wasserstein-1."""

from .sampling import RngStream, StableParams, stable_constants
from .wasserstein import SampleSet, W1Estimate

__all__ = [
    "RngStream",
    "SampleSet",
    "StableParams",
    "W1Estimate",
    "stable_constants",
]
