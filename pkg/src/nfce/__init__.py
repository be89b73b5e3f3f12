"""Near/far-field ELAA channel simulation and channel-estimation workbench."""

from .channel import (
    ArrayConfig,
    ChannelRealization,
    PathSet,
    ScenarioSpec,
    build_steering_matrix,
    far_steering_vector,
    near_element_distance,
    near_steering_vector,
    rayleigh_distance,
    sample_channel,
    sample_channels,
)
from .classical import MmseFilter, fit_mmse, ls_estimate, mmse_estimate
from .datastore import (
    ChannelDataset,
    FormatError,
    generate_dataset,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .evaluation import (
    Estimator,
    LsEstimator,
    MmseEstimator,
    ModelEstimator,
    NmseReport,
    OracleEstimator,
    SweepScenario,
    nmse,
    parse_scenario_grid,
    parse_snr_grid,
    run_sweep,
)
from .model import ModelConfig, TrainedModel, build_model, denoise
from .observation import Observation, observe, snr_to_noise_var
from .seeding import make_rng, mix_seed, splitmix64
from .training import NonFiniteLossError, TrainConfig, adam_step, mse_loss, train

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig",
    "ChannelRealization",
    "PathSet",
    "ScenarioSpec",
    "Observation",
    "MmseFilter",
    "ChannelDataset",
    "FormatError",
    "Estimator",
    "LsEstimator",
    "MmseEstimator",
    "ModelEstimator",
    "OracleEstimator",
    "NmseReport",
    "SweepScenario",
    "ModelConfig",
    "TrainedModel",
    "TrainConfig",
    "NonFiniteLossError",
    "build_steering_matrix",
    "far_steering_vector",
    "near_element_distance",
    "near_steering_vector",
    "rayleigh_distance",
    "sample_channel",
    "sample_channels",
    "observe",
    "snr_to_noise_var",
    "ls_estimate",
    "fit_mmse",
    "mmse_estimate",
    "generate_dataset",
    "load_dataset",
    "save_dataset",
    "load_model",
    "save_model",
    "nmse",
    "parse_scenario_grid",
    "parse_snr_grid",
    "run_sweep",
    "build_model",
    "denoise",
    "adam_step",
    "mse_loss",
    "train",
    "make_rng",
    "mix_seed",
    "splitmix64",
    "__version__",
]
