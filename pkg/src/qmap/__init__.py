"""Quantized MAP (Q-MAP) denoising of analog sources.

Scalar and pairwise Q-MAP solvers, spike-and-slab and piecewise Markov
source models, information-dimension estimates and a patch-based image
denoiser with a learned codeword prior.
"""

from .denoise import (
    DenoiseConfig,
    DenoiseResult,
    brute_force_qmap,
    hard_threshold_scalar,
    mmse_scalar,
    qmap_markov_dp,
    qmap_scalar,
    recover_structure,
)
from .kernels import BACKEND
from .quantize import QuantSpec, WeightTable
from .sources import (
    MarkovModel,
    SpikeSlabModel,
    example1_model,
    example2_model,
    iid_weight_table,
    load_model,
    markov_weight_table,
    parse_model,
)

__version__ = "0.1.0"

__all__ = [
    "DenoiseConfig", "DenoiseResult", "brute_force_qmap", "hard_threshold_scalar", "mmse_scalar",
    "qmap_markov_dp", "qmap_scalar", "recover_structure", "BACKEND", "QuantSpec", "WeightTable",
    "MarkovModel", "SpikeSlabModel", "example1_model", "example2_model",
    "iid_weight_table", "load_model", "markov_weight_table", "parse_model",
]
