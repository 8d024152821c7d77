# SPDX-License-Identifier: Apache-2.0

from ._trajdiff import (
    ConfigError,
    DegenerateError,
    IndexError,
    NoiseSchedule,
    NumericError,
    ShapeError,
    ToyDenoiser,
    attention,
    blob_sample,
    build_cross_mask,
    build_self_mask,
    build_temporal_mask,
    detect_blob,
    efdm_match,
    evaluate,
    generate_gaussian,
    iou,
    make_linear_schedule,
    mask_normalize,
    masks_active,
    pearson,
    rasterize_boxes,
    tau,
    tau_gradient,
    tid_coefficients,
    train_toy_denoiser,
)

__all__ = [name for name in dir() if not name.startswith("_")]
