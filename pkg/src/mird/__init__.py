"""Multi-input residual-shifting diffusion for video frame interpolation.

Classical front-end (optical flow, softmax splatting, edge maps, occlusion
infill), an n-condition residual diffusion core with a closed-form posterior,
temporal-position estimation from motion mass, and Monte-Carlo verification
of the sampler -- all deterministic given a seed.
"""

from .diffusion import (
    ConditionSet,
    SamplerRun,
    ScalarScenario,
    forward_marginal,
    forward_step,
    make_denoiser,
    mc_verify,
    posterior_stats,
    residuals,
    reverse_sample,
)
from .edges import EdgeParams, dog, nedt
from .errors import (
    ConfigError,
    FloFormatError,
    GenerationError,
    InvalidInputError,
    MirdError,
    NumericalError,
)
from .flow import (
    FlowParams,
    backward_warp,
    estimate_flow,
    flow_magnitude,
    importance_z,
    occlusion_mask,
    read_flo,
    softmax_splat,
    write_flo,
)
from .imaging import (
    edt,
    morph,
    otsu_threshold,
    psnr,
    read_png,
    ssim,
    to_grayscale,
    write_png,
)
from .pipeline import (
    InterpConfig,
    UncertaintyReport,
    WarpBundle,
    infill,
    interpolate,
    rmse_map,
    uncertainty,
    warp_to_tau,
)
from .schedule import NoiseSchedule, ScheduleConfig, build_schedule, partition_weights
from .synthdata import SceneSpec, Shape, TripletSample, gen_triplet, load_triplets, render
from .taumetric import TauEstimate, motion_mask, tau_ifd

__version__ = "0.1.0"
