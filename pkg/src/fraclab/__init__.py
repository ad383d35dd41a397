"""Simulation laboratory for fractional and mixed fractional market models.

Exact fractional Brownian samplers, pathwise calculus along dyadic
partitions, the explicit arbitrage and hedging constructions those models
admit, discretized hedging under proportional transaction costs, binary-tree
approximations with the discrete Wick product, and two heavy-tailed
aggregation routes to fractional noise.
"""

__version__ = "0.1.0"

from .errors import (ConvexityError, FracLabError, NumericalError,
                     StrategyError, UsageError)
from .fbm import (build_covariance_matrix, fbm_covariance, sample_bm,
                  sample_fbm_cholesky, sample_fbm_circulant, sample_mixed)
from .models import ModelSpec, PricePath, load_price_csv, simulate_model
from .paths import SamplePath, TimeGrid, subsample

__all__ = [
    "ConvexityError", "FracLabError", "NumericalError", "StrategyError",
    "UsageError", "build_covariance_matrix", "fbm_covariance", "sample_bm",
    "sample_fbm_cholesky", "sample_fbm_circulant", "sample_mixed",
    "ModelSpec", "PricePath", "load_price_csv", "simulate_model",
    "SamplePath", "TimeGrid", "subsample", "__version__",
]
