"""Luminance-chrominance low-light image enhancement.

A desk-scale float64 implementation: a minimal reverse-mode autodiff engine,
an exact luminance/chrominance color decomposition, a guided-attention
encoder-decoder network, a training recipe, dataset-curation filters, and
evaluation metrics including pairwise-preference ranking.
"""

from .autodiff import ContractError, DimensionError, Parameter, Tensor, make_rng
from .color import LcPair, decompose, luminance_of, recompose
from .data import (DegradeParams, ImageFormatError, PairRecord, curate_corpus,
                   histogram_match, load_image, save_image, synth_degrade,
                   synthetic_pair)
from .metrics import (RankingOutcome, bradley_terry_fit, psnr, ssim,
                      variance_of_laplacian)
from .model import (CheckpointError, ConfigError, EnhancementModel, ModelConfig,
                    expected_parameter_count, load_checkpoint, save_checkpoint)
from .train import (PairDataset, TrainConfig, TrainState, adam_step,
                    lcc_distance, plateau_step, total_loss, train)
from .verify import gradcheck_blocks

__version__ = "0.1.0"

__all__ = [
    "Tensor", "Parameter", "make_rng", "DimensionError", "ContractError",
    "LcPair", "decompose", "recompose", "luminance_of",
    "ModelConfig", "EnhancementModel", "ConfigError", "CheckpointError",
    "expected_parameter_count", "save_checkpoint", "load_checkpoint",
    "TrainConfig", "TrainState", "PairDataset", "train", "total_loss",
    "lcc_distance", "adam_step", "plateau_step",
    "PairRecord", "DegradeParams", "ImageFormatError", "curate_corpus",
    "load_image", "save_image", "histogram_match", "synth_degrade",
    "synthetic_pair",
    "psnr", "ssim", "variance_of_laplacian", "RankingOutcome",
    "bradley_terry_fit",
    "gradcheck_blocks",
    "__version__",
]
