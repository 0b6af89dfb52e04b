"""Mask design tools for snapshot compressive imaging.

Forward model ``y = sum_i D_i x_i`` with stochastic binary (or signed /
bounded) masks, recovery-error bounds as functions of the mask statistics,
projected-gradient recovery, and Monte-Carlo checks of the underlying
concentration formulas.
"""

__version__ = "0.1.0"

from .tensor import DataCube, FrameImage, FormatError, psnr, synth_video, vectorize, devectorize
from .masks import (IidBernoulli, InFrameMarkov, OutFrameMarkov, SignedIid, BoundedIid,
                    MaskCube, sample_mask)
from .forward import SensingOperator, Measurement, measure, add_noise
from .bounds import BoundParams, BoundReport, InapplicableTheoremError
from .recovery import PgdConfig, TvProjector, CodebookProjector, pgd_recover, csp_exhaustive

__all__ = [
    "DataCube", "FrameImage", "FormatError", "psnr", "synth_video", "vectorize", "devectorize",
    "IidBernoulli", "InFrameMarkov", "OutFrameMarkov", "SignedIid", "BoundedIid", "MaskCube",
    "sample_mask", "SensingOperator", "Measurement", "measure", "add_noise", "BoundParams",
    "BoundReport", "InapplicableTheoremError", "PgdConfig", "TvProjector", "CodebookProjector",
    "pgd_recover", "csp_exhaustive",
]
