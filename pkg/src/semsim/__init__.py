"""Change-gated semantic transmission simulator.

Pipeline: a synthetic scene source emits frames with ground-truth binary
masks; a value-of-information gate decides which maps are worth sending; an
F-composite fading channel with inversion power control prices each
transmission in joules; a toy conditional diffusion model stands in for the
receiver-side generative decoder.
"""

__version__ = "0.1.0"

from .channel import (
    FadingParams,
    LinkBudget,
    average_power,
    instantaneous_power,
    moment,
    pdf,
    rate,
    sample_gain,
    transmission_energy,
)
from .config import ExperimentConfig, config_hash, load_config
from .diffusion import (
    Condition,
    Denoiser,
    UntrainedBranchWarning,
    VarianceSchedule,
    cfg_combine,
    denoising_loss,
    forward_marginal,
    forward_step,
    linear_schedule,
    posterior_params,
    sample,
    train,
)
from .pipeline import RunLedger, run_baseline, run_gated, sweep_rows, write_sweep
from .sampling import Decision, SemanticMap, VoISampler, aoi, change_degree, resize_map, voi
from .scene import Frame, SceneConfig, decode_mask, encode_frame, encode_mask, generate_stream

__all__ = [
    "FadingParams", "LinkBudget", "average_power", "instantaneous_power",
    "moment", "pdf", "rate", "sample_gain", "transmission_energy",
    "ExperimentConfig", "config_hash", "load_config",
    "Condition", "Denoiser", "UntrainedBranchWarning", "VarianceSchedule", "cfg_combine",
    "denoising_loss", "forward_marginal", "forward_step", "linear_schedule",
    "posterior_params", "sample", "train",
    "RunLedger", "run_baseline", "run_gated", "sweep_rows", "write_sweep",
    "Decision", "SemanticMap", "VoISampler", "aoi", "change_degree",
    "resize_map", "voi",
    "Frame", "SceneConfig", "decode_mask", "encode_frame", "encode_mask",
    "generate_stream",
    "__version__",
]
