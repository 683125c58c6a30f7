"""Model-based binaural speech enhancement.

Codebook-driven Bayesian estimation of speech/noise AR parameters, a
directional harmonic-model pitch estimator, and fixed-lag Kalman
smoothing under unvoiced and voiced-unvoiced excitation models.
"""

from .codebook import Codebook
from .linpred import ArModel, LsfVector
from .pipeline import RunConfig, process, process_single
from .pitch import DirectivityModel, PitchInfo
from .signal_core import AudioBuffer, Frame, Spectrum
from .stp import GammaPrior, StpEstimate

__all__ = [
    "ArModel",
    "AudioBuffer",
    "Codebook",
    "DirectivityModel",
    "Frame",
    "GammaPrior",
    "LsfVector",
    "PitchInfo",
    "RunConfig",
    "Spectrum",
    "StpEstimate",
    "process",
    "process_single",
]

__version__ = "0.1.0"
