"""lfikit: likelihood-free parameter estimation toolkit.

Learned reconstruction maps (raw-data and dimension-reduced), synthetic
likelihood, ABC with bandwidth-tempered parallel chains, and local-search
refinement, plus Monte Carlo risk benchmarking and parametric-bootstrap
uncertainty quantification for simulator-defined models.
"""

from ._accel import NUMBA_ENABLED
from .rng import RngStream
from .simulators import Dataset, DesignBox, get_model
from .summaries import get_pipeline

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED",
    "RngStream",
    "Dataset",
    "DesignBox",
    "get_model",
    "get_pipeline",
    "__version__",
]
