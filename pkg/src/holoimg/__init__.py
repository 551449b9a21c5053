"""Near-field holographic imaging with XL-MIMO arrays and reflecting surfaces."""

from .channel import ChannelMatrix, dof_estimate, freespace_channel
from .geometry import build_planar_layout, build_roi
from .harness import ImageSpec, Mode, Scenario, run_trials, sweep_truncation
from .illum import optimize_illumination
from .regsolve import estimate, svd_decompose, theoretical_mse, truncate

__version__ = "0.1.0"

__all__ = [
    "ChannelMatrix",
    "ImageSpec",
    "Mode",
    "Scenario",
    "build_planar_layout",
    "build_roi",
    "dof_estimate",
    "estimate",
    "freespace_channel",
    "optimize_illumination",
    "run_trials",
    "svd_decompose",
    "sweep_truncation",
    "theoretical_mse",
    "truncate",
]
