"""Gaussian-splatting reconstruction for computed laminography."""
import os

# Workqueue keeps numba quiet and deterministic when TBB is missing.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .errors import (  # noqa: E402
    ClsplatError,
    DegenerateHistogram,
    EmptyMask,
    NonFiniteLoss,
    NonPositiveDepth,
    ValidationError,
)
from .fdk import FdkConfig, fdk  # noqa: E402
from .geometry import LaminographyGeometry, build_view, project_point  # noqa: E402
from .init_af import AfConfig, initialize_scene, uniform_scene  # noqa: E402
from .metrics import psnr_volume, ssim_slices  # noqa: E402
from .optimizer import TrainConfig, train  # noqa: E402
from .phantom import PhantomSpec, generate_phantom, simulate_dataset  # noqa: E402
from .rasterizer import render, render_backward  # noqa: E402
from .types import GaussianScene, GridSpec, ProjectionStack, Volume  # noqa: E402

__version__ = "0.1.0"
