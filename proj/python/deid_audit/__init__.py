"""Cue-preservation and image-quality audit for de-identified driver video."""

from ._core import (
    AuditError,
    __version__,
    calibrate,
    default_config,
    detect_anomalies,
    ergas,
    eye_aspect_ratio,
    fraction_below,
    frame_quality,
    lip_aspect_ratio,
    mse,
    psnr,
    pupil_circularity,
    rmse,
    run_audit,
    sam,
    summarize,
    synth,
    uiqi,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
