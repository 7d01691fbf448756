"""Robust online 3D reconstruction from single-photon lidar histograms.

Modules: ``core`` (IRF, depth grid, histograms), ``estimators`` (per-pixel
depth estimators), ``adf`` (spatio-temporal prior), ``detector`` (surface
presence test), ``pipeline`` (online loop), ``sim`` (simulator and benchmark),
``msl`` (multi-band extension), ``formats`` (file I/O) and ``cli``.
"""

__version__ = "0.1.0"

from .core import DepthGrid, GaussianBelief, Irf, PixelHistogram, SceneConfig, normalize_irf, shifted_irf
from .pipeline import FrameResult, Reconstructor, process_frame, run_sequence

__all__ = [
    "DepthGrid", "GaussianBelief", "Irf", "PixelHistogram", "SceneConfig", "normalize_irf",
    "shifted_irf", "FrameResult", "Reconstructor", "process_frame", "run_sequence",
]
