"""Dense monocular visual odometry with learned depth, outlier-mask and semantic priors."""

from ._core import (
    FilterParams,
    Intrinsics,
    PixelState,
    ate_rmse,
    back_project,
    default_intrinsics,
    init_pixel,
    load_config,
    measurement_variance,
    miou,
    ncc,
    project,
    read_trajectory,
    run,
    se3_exp,
    se3_log,
    snippet_ate,
    synth,
    update,
    write_trajectory,
)

__all__ = [
    "FilterParams",
    "Intrinsics",
    "PixelState",
    "ate_rmse",
    "back_project",
    "default_intrinsics",
    "init_pixel",
    "load_config",
    "measurement_variance",
    "miou",
    "ncc",
    "project",
    "read_trajectory",
    "run",
    "se3_exp",
    "se3_log",
    "snippet_ate",
    "synth",
    "update",
    "write_trajectory",
]
