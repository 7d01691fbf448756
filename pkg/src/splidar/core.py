"""Domain types and IRF handling shared by every stage of the reconstruction.

Depths are integer time-bin indices throughout. The convention is that a
surface at depth ``d`` puts the *peak* of the instrument response on bin ``d``;
conversion to metres happens only at output (``bins_to_metres``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

#: Lower bound applied to every belief variance (bins^2).
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class Irf:
    """Normalized instrument response sampled on ``N_T`` time bins.

    Instances hash by identity so that derived matrices can be cached per IRF.
    """

    samples: np.ndarray
    peak_bin: int
    fwhm_bins: float
    bin_width: float = 1.0

    def __post_init__(self):
        self.samples.setflags(write=False)

    @property
    def n_bins(self) -> int:
        return self.samples.size

    @property
    def support(self) -> tuple[int, int]:
        """First and last bin with a strictly positive sample."""
        nz = np.flatnonzero(self.samples > 0)
        return int(nz[0]), int(nz[-1])

    @property
    def guards(self) -> tuple[int, int]:
        """Extent of the support to the left and right of the peak, in bins."""
        lo, hi = self.support
        return self.peak_bin - lo, hi - self.peak_bin

    @property
    def kernel(self) -> np.ndarray:
        """Samples restricted to the support, peak at index ``guards[0]``."""
        lo, hi = self.support
        return self.samples[lo:hi + 1]


def _fwhm(samples: np.ndarray, peak: int) -> float:
    half = samples[peak] / 2.0
    # Samples beyond the array are treated as zero.
    padded = np.concatenate(([0.0], samples, [0.0]))
    p = peak + 1
    i = p
    while padded[i] >= half:
        i -= 1
    left = i + (half - padded[i]) / (padded[i + 1] - padded[i])
    j = p
    while padded[j] >= half:
        j += 1
    right = j - 1 + (padded[j - 1] - half) / (padded[j - 1] - padded[j])
    return float(right - left)


def normalize_irf(raw, bin_width: float = 1.0) -> Irf:
    """Build an :class:`Irf` from raw (possibly noisy, unnormalized) samples.

    Negative entries are clamped to zero with a warning. FWHM is measured by
    linear interpolation at the two half-maximum crossings.

    >>> normalize_irf([0, 2, 4, 2, 0]).samples.tolist()
    [0.0, 0.25, 0.5, 0.25, 0.0]
    """
    x = np.array(raw, dtype=float).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("degenerate IRF: empty or non-finite samples")
    if np.any(x < 0):
        warnings.warn(f"IRF has {int(np.sum(x < 0))} negative samples; clamped to 0")
        x = np.clip(x, 0.0, None)
    total = x.sum()
    if total <= 0:
        raise ValueError("degenerate IRF: no positive sample")
    x = x / total
    peak = int(np.argmax(x))
    return Irf(samples=x, peak_bin=peak, fwhm_bins=_fwhm(x, peak), bin_width=float(bin_width))


@dataclass(frozen=True)
class DepthGrid:
    """Inclusive range of admissible integer depths ``d_min..d_max``."""

    d_min: int
    d_max: int

    def __post_init__(self):
        if self.d_max < self.d_min:
            raise ValueError(f"empty depth grid [{self.d_min}, {self.d_max}]")

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.d_min, self.d_max + 1, dtype=float)

    @property
    def size(self) -> int:
        return self.d_max - self.d_min + 1

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.d_min + self.d_max)

    @property
    def flat_variance(self) -> float:
        """Variance of the Gaussian that stands in for a uniform on the grid."""
        return (self.d_max - self.d_min) ** 2 / 12.0

    def __contains__(self, d) -> bool:
        return self.d_min <= d <= self.d_max

    @classmethod
    def for_irf(cls, irf: Irf, d_min: int | None = None, d_max: int | None = None) -> "DepthGrid":
        """Largest grid (or the requested one) on which shifting ``irf`` loses no support.

        Raises ``ValueError`` when the requested bounds violate the guards.
        """
        left, right = irf.guards
        lo_ok, hi_ok = left, irf.n_bins - 1 - right
        d_min = lo_ok if d_min is None else int(d_min)
        d_max = hi_ok if d_max is None else int(d_max)
        if d_min < lo_ok or d_max > hi_ok:
            raise ValueError(
                f"depth grid [{d_min}, {d_max}] violates IRF guards; admissible range is [{lo_ok}, {hi_ok}]"
            )
        return cls(d_min, d_max)


def shifted_irf(irf: Irf, d: int, beta: float = 1.0, grid: DepthGrid | None = None) -> np.ndarray:
    """IRF translated so its peak sits on bin ``d``, raised element-wise to ``beta``.

    Zero-padded, never wrapped. ``d`` must lie on ``grid`` (default: the widest
    guard-respecting grid for ``irf``).
    """
    if grid is None:
        grid = DepthGrid.for_irf(irf)
    if int(d) != d or d not in grid:
        raise ValueError(f"depth {d} is outside the grid [{grid.d_min}, {grid.d_max}]")
    d = int(d)
    lo, hi = irf.support
    out = np.zeros(irf.n_bins)
    k = irf.kernel
    out[d - irf.peak_bin + lo:d - irf.peak_bin + hi + 1] = k if beta == 1 else k ** beta
    return out


@lru_cache(maxsize=64)
def shift_matrix(irf: Irf, grid: DepthGrid, beta: float = 1.0) -> np.ndarray:
    """Rows are ``shifted_irf(irf, d, beta)`` for every ``d`` on ``grid``; shape (G, N_T).

    Cached and read-only; the per-pixel inner products become one matrix product.
    """
    DepthGrid.for_irf(irf, grid.d_min, grid.d_max)
    lo, hi = irf.support
    k = irf.kernel if beta == 1 else irf.kernel ** beta
    S = np.zeros((grid.size, irf.n_bins))
    rows = np.arange(grid.size)
    starts = grid.d_min + rows - irf.peak_bin + lo
    cols = starts[:, None] + np.arange(hi - lo + 1)[None, :]
    S[rows[:, None], cols] = k[None, :]
    S.setflags(write=False)
    return S


def sliding_windows(counts: np.ndarray, irf: Irf, grid: DepthGrid) -> np.ndarray:
    """Counts seen through the IRF support at every grid depth.

    ``counts`` has shape (..., N_T); the result has shape (..., G, W) where W is
    the support width, aligned with ``irf.kernel``. A view, not a copy.
    """
    lo, hi = irf.support
    w = hi - lo + 1
    win = np.lib.stride_tricks.sliding_window_view(counts, w, axis=-1)
    start = grid.d_min - irf.peak_bin + lo
    return win[..., start:start + grid.size, :]


@dataclass
class PixelHistogram:
    """Photon counts per time bin for one pixel and frame."""

    counts: np.ndarray
    toas: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if np.any(self.counts < 0):
            raise ValueError("negative photon count")

    @property
    def K(self) -> int:
        return int(self.counts.sum())

    @property
    def n_bins(self) -> int:
        return self.counts.size

    def expand_toas(self) -> np.ndarray:
        """Sorted bin-resolution arrival times (one entry per photon)."""
        if self.toas is not None:
            return np.sort(np.asarray(self.toas))
        return np.repeat(np.arange(self.counts.size), self.counts.astype(np.int64))


def histogram_from_toas(toas, n_bins: int) -> PixelHistogram:
    toas = np.asarray(toas, dtype=np.int64).ravel()
    bad = toas[(toas < 0) | (toas >= n_bins)]
    if bad.size:
        raise ValueError(f"time of arrival {int(bad[0])} outside [0, {n_bins})")
    counts = np.bincount(toas, minlength=n_bins)
    return PixelHistogram(counts=counts, toas=toas)


@dataclass(frozen=True)
class GaussianBelief:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"belief variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class PixelState:
    """What one pixel carries from frame n-1 to frame n."""

    belief: GaussianBelief
    presence_prob: float = 0.5
    presence_prior: float = 0.5
    background: float = 0.0
    reflectivity: float | None = None

    def __post_init__(self):
        for name in ("presence_prob", "presence_prior"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.background < 0:
            raise ValueError("background must be non-negative")


@dataclass
class SceneConfig:
    """Acquisition geometry and reconstruction hyperparameters.

    Defaults: beta 0.5, random-walk std sqrt(3) bins, five-pixel cross
    neighbourhood with centre weight 0.5, 153 bins of 250 ps.
    """

    rows: int = 32
    cols: int = 32
    n_frames: int = 0
    n_bins: int = 153
    bin_width: float = 250e-12
    beta: float = 0.5
    sigma_rw: float = math.sqrt(3.0)
    M: int = 5
    nu0: float = 0.5
    d_min: int | None = None
    d_max: int | None = None
    reflectivity_mean: float = 55.0
    reflectivity_shape: float = 2.0
    faulty_pixels: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.faulty_pixels = tuple(int(p) for p in self.faulty_pixels)
        self.validate()

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")
        if self.n_frames < 0:
            raise ValueError("n_frames must be non-negative")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.sigma_rw > 0:
            raise ValueError("sigma_rw must be positive")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not 0.0 <= self.nu0 <= 1.0:
            raise ValueError("nu0 must lie in [0, 1]")
        if self.M == 1 and self.nu0 != 1.0:
            raise ValueError("a single-pixel neighbourhood needs nu0 = 1")
        if not (self.reflectivity_mean > 0 and self.reflectivity_shape > 0):
            raise ValueError("reflectivity prior hyperparameters must be positive")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        for p in self.faulty_pixels:
            if not 0 <= p < self.n_pixels:
                raise ValueError(f"faulty pixel index {p} out of range")

    def grid(self, irf: Irf) -> DepthGrid:
        if irf.n_bins != self.n_bins:
            raise ValueError(f"IRF has {irf.n_bins} bins, scene has {self.n_bins}")
        return DepthGrid.for_irf(irf, self.d_min, self.d_max)


def bins_to_metres(d, bin_width: float):
    """Round-trip time in bins to one-way distance."""
    return np.asarray(d, dtype=float) * bin_width * SPEED_OF_LIGHT / 2.0
