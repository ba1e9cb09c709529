"""Speech-driven gesture synthesis with a recurrent encoder and a denoising
diffusion model, built on numpy."""

from .schedule import VarianceSchedule, build_schedule
from .diffusion import forward_diffuse, posterior_mean, sample_frame, diffusion_loss
from .model import GestureModel, ModelConfig
from .config import RunConfig, load_config
from .pipeline import sg_smooth, quantile_sample, rollout, synthesize

__version__ = "0.1.0"
