"""Baseline post-processing methods and their evasion-rate tuning."""

from .filters import brightness_contrast, gaussian_blur, gaussian_noise
from .jpeg import jpeg
from .tuning import KINDS, PostProcessSpec, TuneResult, postprocess, scan_to_evasion, tune_to_evasion

__all__ = [
    "KINDS",
    "PostProcessSpec",
    "TuneResult",
    "brightness_contrast",
    "gaussian_blur",
    "gaussian_noise",
    "jpeg",
    "postprocess",
    "scan_to_evasion",
    "tune_to_evasion",
]
