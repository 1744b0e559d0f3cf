"""Engine package: diffusion schedule, process arithmetic and the reverse sampler."""

from .errors import (
    CapabilityError,
    ConfigurationError,
    InputError,
    ManifestError,
    NumericError,
    ParameterError,
    TrainingDivergedError,
    TSEError,
    UnknownLabelError,
)
from .process import (
    Posterior,
    batch_coefficients,
    cfg_combine,
    forward_sample,
    posterior,
    recover_noise,
    recover_x0,
    velocity,
)
from .sampler import AUDIO_GUIDANCE, TEXT_GUIDANCE, SamplerConfig, default_guidance, inference_timesteps, sample
from .schedule import (
    NoiseSchedule,
    build_schedule,
    load_schedule,
    rescale_terminal,
    save_schedule,
    schedule_from_betas,
    schedule_from_dict,
    schedule_to_dict,
)

__all__ = [
    "AUDIO_GUIDANCE",
    "TEXT_GUIDANCE",
    "default_guidance",
    "CapabilityError",
    "ConfigurationError",
    "InputError",
    "ManifestError",
    "NoiseSchedule",
    "NumericError",
    "ParameterError",
    "Posterior",
    "SamplerConfig",
    "TSEError",
    "TrainingDivergedError",
    "UnknownLabelError",
    "batch_coefficients",
    "build_schedule",
    "cfg_combine",
    "forward_sample",
    "inference_timesteps",
    "load_schedule",
    "posterior",
    "recover_noise",
    "recover_x0",
    "rescale_terminal",
    "sample",
    "save_schedule",
    "schedule_from_betas",
    "schedule_from_dict",
    "schedule_to_dict",
    "velocity",
]
