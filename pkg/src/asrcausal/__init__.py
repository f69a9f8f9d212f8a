"""Error decomposition and causal-strength analysis for children's ASR
transcripts: WER/S/D/I scoring, oracle hypothesis selection, covariate
derivation (pronunciation quality, vocabulary rarity, SNR, word count),
discretization, discrete Bayesian network fitting, and per-edge ACE/CMI
quantification validated against an exactly enumerable synthetic SCM.
"""

from . import alignment, causal, covariates, discretize, ingest, synthetic
from .errors import ToolkitError

__version__ = "0.1.0"

__all__ = [
    "alignment",
    "causal",
    "covariates",
    "discretize",
    "ingest",
    "synthetic",
    "ToolkitError",
    "__version__",
]
