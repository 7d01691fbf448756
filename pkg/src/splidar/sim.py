"""Synthetic photon-count data and the Monte Carlo p_d benchmark."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .core import DepthGrid, GaussianBelief, Irf, PixelHistogram, normalize_irf, shift_matrix, shifted_irf
from .estimators import (
    DiscretePosterior,
    bf_log_lik,
    beta_pseudo_log_lik,
    half_sample_mode,
    log_prior_on_grid,
    moments,
    oracle_log_lik,
)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def _truncate(p: np.ndarray, rel_floor: float) -> np.ndarray:
    p = np.where(p >= rel_floor * p.max(), p, 0.0)
    return p


def make_gaussian_irf(fwhm_bins: float, center_bin: int, n_bins: int,
                      rel_floor: float = 1e-12, bin_width: float = 1.0) -> Irf:
    """Bin-integrated Gaussian IRF peaking on ``center_bin``.

    Samples below ``rel_floor`` times the peak are zeroed, giving the IRF a
    compact support and therefore finite depth-grid guards.
    """
    if not fwhm_bins > 0:
        raise ValueError("fwhm must be positive")
    if not 0 <= center_bin < n_bins:
        raise ValueError("center outside the time axis")
    sigma = fwhm_bins * FWHM_TO_SIGMA
    edges = np.arange(n_bins + 1) - 0.5 - center_bin
    # Difference of survival functions on the right keeps precision in the far tail.
    cdf = stats.norm.cdf(edges, scale=sigma)
    sf = stats.norm.sf(edges, scale=sigma)
    p = np.where(edges[1:] <= 0, np.diff(cdf), -np.diff(sf))
    return normalize_irf(_truncate(p, rel_floor), bin_width=bin_width)


def make_emg_irf(fwhm_bins: float, center_bin: int, n_bins: int, tail_bins: float = 30.0,
                 rel_floor: float = 1e-6, bin_width: float = 1.0) -> Irf:
    """Right-skewed IRF: exponentially modified Gaussian with a prescribed FWHM.

    ``tail_bins`` is the exponential decay length; the Gaussian width is solved
    so the discretized FWHM matches ``fwhm_bins``. The peak is placed on
    ``center_bin``.
    """
    def build(sigma, loc):
        edges = np.arange(n_bins + 1) - 0.5
        dist = stats.exponnorm(tail_bins / sigma, loc=loc, scale=sigma)
        return np.clip(np.diff(dist.cdf(edges)), 0.0, None)

    def mode_offset(sigma):
        dist = stats.exponnorm(tail_bins / sigma, scale=sigma)
        res = optimize.minimize_scalar(lambda x: -dist.pdf(x), bounds=(-5 * sigma, 5 * sigma + tail_bins),
                                       method="bounded")
        return res.x

    def fwhm_error(sigma):
        loc = center_bin - mode_offset(sigma)
        return normalize_irf(build(sigma, loc)).fwhm_bins - fwhm_bins

    hi = fwhm_bins * FWHM_TO_SIGMA
    lo = 1e-3 * hi
    if fwhm_error(lo) > 0:
        raise ValueError(f"tail of {tail_bins} bins alone is wider than FWHM {fwhm_bins}")
    sigma = optimize.brentq(fwhm_error, lo, hi, xtol=1e-6)
    loc = center_bin - mode_offset(sigma)
    p = build(sigma, loc)
    loc += center_bin - int(np.argmax(p))
    p = build(sigma, loc)
    return normalize_irf(_truncate(p, rel_floor), bin_width=bin_width)


def make_irf(kind: str, fwhm_bins: float = 28.0, center_bin: int = 600, n_bins: int = 1500,
             bin_width: float = 1.0) -> Irf:
    if kind == "gaussian":
        return make_gaussian_irf(fwhm_bins, center_bin, n_bins, bin_width=bin_width)
    if kind == "emg":
        return make_emg_irf(fwhm_bins, center_bin, n_bins, bin_width=bin_width)
    raise ValueError(f"unknown IRF kind {kind!r} (expected 'gaussian' or 'emg')")


def sbr_params(msc: float, sbr: float, n_bins: int) -> tuple[float, float]:
    """Signal amplitude and per-bin background for a target MSC and SBR.

    Uses ``SBR = r / (b * N_T)``; an infinite SBR gives ``b = 0``.
    """
    if not sbr > 0:
        raise ValueError(f"SBR must be positive, got {sbr}")
    if not (msc > 0 and n_bins > 0):
        raise ValueError("MSC and N_T must be positive")
    return float(msc), float(msc) / (sbr * n_bins)


def generate_pixel_histogram(irf: Irf, d: int, r: float, b: float, rng: np.random.Generator,
                             grid: DepthGrid | None = None) -> PixelHistogram:
    if r < 0 or b < 0:
        raise ValueError("r and b must be non-negative")
    lam = r * shifted_irf(irf, d, 1.0, grid) + b
    return PixelHistogram(rng.poisson(lam))


def generate_histograms(irf: Irf, depths, r, b, rng: np.random.Generator, grid: DepthGrid) -> np.ndarray:
    """Batch of histograms, one row per entry of ``depths``; ``r``/``b`` broadcast."""
    depths = np.asarray(depths, dtype=np.int64)
    if depths.size and (depths.min() < grid.d_min or depths.max() > grid.d_max):
        raise ValueError(f"depths must lie on the grid [{grid.d_min}, {grid.d_max}]")
    S = shift_matrix(irf, grid, 1.0)
    lam = np.asarray(r, dtype=float)[..., None] * S[depths - grid.d_min] + np.asarray(b, dtype=float)[..., None]
    return rng.poisson(lam)


def p_d(estimates, truths, eta: float) -> float:
    """Fraction of estimates strictly within ``eta`` of the truth. NaN counts as a miss."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.size == 0:
        raise ValueError("p_d of an empty sample")
    if est.shape != tru.shape:
        raise ValueError("estimates and truths differ in length")
    with np.errstate(invalid="ignore"):
        return float(np.mean(np.abs(est - tru) < eta))


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    beta: float | None = None

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        """``oracle``, ``bf``, ``hsm`` or ``pb:<beta>``."""
        name, _, arg = text.strip().partition(":")
        name = name.lower()
        if name == "pb":
            beta = float(arg) if arg else 0.5
            if not beta > 0:
                raise ValueError("PB needs beta > 0")
            return cls("pb", beta)
        if name in ("oracle", "bf", "hsm") and not arg:
            return cls(name)
        raise ValueError(f"unknown estimator {text!r}")

    def __str__(self):
        return f"pb:{self.beta:g}" if self.name == "pb" else self.name


@dataclass
class SweepSpec:
    """A grid of (SBR, MSC) cells, each with ``n_mc`` seeded trials."""

    sbr_values: list[float] = field(default_factory=lambda: list(np.logspace(-4, 2, 13)))
    msc_values: list[float] = field(default_factory=lambda: [10, 20, 35, 50, 100, 200, 300, 500, 1000])
    n_mc: int = 200
    eta: float = 28.0
    estimators: list[EstimatorSpec] = field(default_factory=lambda: [
        EstimatorSpec("oracle"), EstimatorSpec("bf"), EstimatorSpec("hsm"),
        *(EstimatorSpec("pb", b) for b in (0.1, 0.3, 0.5, 0.7, 1.0))])
    irf: str = "gaussian"
    fwhm_bins: float = 28.0
    n_bins: int = 1500
    irf_peak: int = 600
    prior_mean: float = 600.0
    prior_var: float = 2500.0
    seed: int = 0
    d_min: int | None = None
    d_max: int | None = None

    def __post_init__(self):
        self.estimators = [e if isinstance(e, EstimatorSpec) else EstimatorSpec.parse(e) for e in self.estimators]
        self.validate()

    def validate(self):
        if not self.sbr_values or any(not s > 0 for s in self.sbr_values):
            raise ValueError("SBR values must be positive")
        if not self.msc_values or any(not m > 0 for m in self.msc_values):
            raise ValueError("MSC values must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.n_mc < 1:
            raise ValueError("n_mc must be at least 1")
        if not self.prior_var > 0:
            raise ValueError("prior variance must be positive")
        if not self.estimators:
            raise ValueError("no estimators requested")

    def make_irf(self) -> Irf:
        return make_irf(self.irf, self.fwhm_bins, self.irf_peak, self.n_bins)


def cell_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream addressed by ``(seed, *key)``; no shared state between cells."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def draw_truth_depths(rng: np.random.Generator, n: int, mean: float, var: float, grid: DepthGrid) -> np.ndarray:
    """Integer depths from a Gaussian truncated to the grid (rejection sampling)."""
    out = np.empty(0, dtype=np.int64)
    sd = math.sqrt(var)
    while out.size < n:
        d = np.rint(rng.normal(mean, sd, size=2 * (n - out.size) + 8)).astype(np.int64)
        out = np.concatenate([out, d[(d >= grid.d_min) & (d <= grid.d_max)]])
    return out[:n]


def _posterior_means(ll: np.ndarray, log_prior: np.ndarray, grid: DepthGrid) -> np.ndarray:
    """Posterior means for a batch of log-likelihood rows; rows with no finite
    value fall back to the prior mean."""
    ok = np.any(np.isfinite(ll), axis=-1)
    prior_mean = moments(DiscretePosterior.from_log_weights(grid, log_prior).probs, grid.values)[0]
    out = np.full(ll.shape[0], float(prior_mean))
    if np.any(ok):
        post = DiscretePosterior.from_log_weights(grid, log_prior + ll[ok])
        out[ok] = moments(post.probs, grid.values)[0]
    return out


def run_estimator(est: EstimatorSpec, counts: np.ndarray, irf: Irf, grid: DepthGrid,
                  log_prior: np.ndarray, r: float, b: float) -> np.ndarray:
    """Point estimates for a batch of histograms (rows of ``counts``)."""
    if est.name == "pb":
        return _posterior_means(beta_pseudo_log_lik(counts, irf, est.beta, grid), log_prior, grid)
    if est.name == "bf":
        return _posterior_means(bf_log_lik(counts, irf, grid), log_prior, grid)
    if est.name == "oracle":
        return _posterior_means(oracle_log_lik(counts, irf, r, b, grid), log_prior, grid)
    if est.name == "hsm":
        out = np.full(counts.shape[0], math.nan)
        for i, row in enumerate(counts):
            if row.sum() > 0:
                out[i] = half_sample_mode(np.repeat(np.arange(row.size), row.astype(np.int64)))
        return out
    raise ValueError(f"unknown estimator {est.name}")


SWEEP_COLUMNS = ["estimator", "beta", "sbr", "msc", "p_d", "n_mc", "seed"]


def sweep_cell(spec: SweepSpec, i_sbr: int, i_msc: int, irf: Irf | None = None,
               grid: DepthGrid | None = None) -> list[dict]:
    irf = irf or spec.make_irf()
    grid = grid or DepthGrid.for_irf(irf, spec.d_min, spec.d_max)
    sbr, msc = spec.sbr_values[i_sbr], spec.msc_values[i_msc]
    r, b = sbr_params(msc, sbr, spec.n_bins)
    rng = cell_rng(spec.seed, i_sbr, i_msc)
    truths = draw_truth_depths(rng, spec.n_mc, spec.prior_mean, spec.prior_var, grid)
    counts = generate_histograms(irf, truths, r, b, rng, grid).astype(float)
    log_prior = log_prior_on_grid(GaussianBelief(spec.prior_mean, spec.prior_var), grid)
    rows = []
    for est in spec.estimators:
        d_hat = run_estimator(est, counts, irf, grid, log_prior, r, b)
        rows.append({
            "estimator": est.name,
            "beta": "" if est.beta is None else f"{est.beta:g}",
            "sbr": f"{sbr:.6g}",
            "msc": f"{msc:.6g}",
            "p_d": f"{p_d(d_hat, truths, spec.eta):.6f}",
            "n_mc": spec.n_mc,
            "seed": spec.seed,
        })
    return rows


def sweep(spec: SweepSpec, threads: int = 1) -> list[dict]:
    """p_d for every (SBR, MSC, estimator) combination, in a fixed row order."""
    irf = spec.make_irf()
    grid = DepthGrid.for_irf(irf, spec.d_min, spec.d_max)
    cells = [(i, j) for i in range(len(spec.sbr_values)) for j in range(len(spec.msc_values))]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda c: sweep_cell(spec, *c, irf=irf, grid=grid), cells))
    else:
        results = [sweep_cell(spec, *c, irf=irf, grid=grid) for c in cells]
    return [row for cell in results for row in cell]


def rows_to_csv(rows: list[dict], columns=SWEEP_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# --- scene videos --------------------------------------------------------------

SCENARIOS = ("static", "ramp", "ball")


@dataclass
class SceneTruth:
    """Per-frame ground truth, arrays of shape (rows, cols); depth NaN where empty."""

    depth: np.ndarray
    r: np.ndarray
    b: np.ndarray


def scene_depths(scenario: str, rows: int, cols: int, n: int, grid: DepthGrid,
                 depth: float | None = None, slope: float = 1.0) -> np.ndarray:
    """Depth map (bins, NaN = no surface) of ``scenario`` at frame ``n``."""
    yy, xx = np.mgrid[0:rows, 0:cols]
    if scenario == "static":
        d0 = grid.midpoint if depth is None else depth
        return np.full((rows, cols), float(round(d0)))
    if scenario == "ramp":
        d0 = grid.d_min + 2 if depth is None else depth
        return (round(d0) + np.floor(slope * xx) + n).astype(float)
    if scenario == "ball":
        mid = grid.midpoint
        span = min(10.0, (grid.d_max - grid.d_min) / 6)
        left_d, right_d = round(mid - span), round(mid + span)
        slab = max(1, round(0.22 * cols))
        out = np.full((rows, cols), np.nan)
        body = (yy >= round(0.1 * rows))
        out[body & (xx < slab)] = left_d
        out[body & (xx >= cols - slab)] = right_d
        radius = max(1.0, 0.12 * min(rows, cols))
        x_lo, x_hi = slab + radius, cols - 1 - slab - radius
        period = 60
        phase = (n % period) / period
        frac = 2 * phase if phase < 0.5 else 2 - 2 * phase
        cx = x_lo + frac * max(x_hi - x_lo, 0.0)
        cy = 0.45 * rows
        disk = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2
        out[disk] = round(left_d + frac * (right_d - left_d))
        return out
    raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")


def make_scene_video(scenario: str, rows: int, cols: int, n_frames: int, irf: Irf, grid: DepthGrid,
                     msc: float, b: float, rng: np.random.Generator, depth: float | None = None,
                     slope: float = 1.0):
    """Yield ``(frame, truth)`` pairs; ``frame`` has shape (rows, cols, N_T).

    Surfaces return ``msc`` signal photons on average, every pixel sees ``b``
    background photons per bin.
    """
    S = shift_matrix(irf, grid, 1.0)
    for n in range(n_frames):
        d = scene_depths(scenario, rows, cols, n, grid, depth, slope)
        present = np.isfinite(d)
        if np.any(present) and (np.nanmin(d) < grid.d_min or np.nanmax(d) > grid.d_max):
            raise ValueError(f"frame {n}: scene depth leaves the grid [{grid.d_min}, {grid.d_max}]")
        idx = np.where(present, d, grid.d_min).astype(np.int64) - grid.d_min
        r = np.where(present, float(msc), 0.0)
        lam = r[..., None] * S[idx] + b
        frame = rng.poisson(lam)
        yield frame, SceneTruth(d, r, np.full((rows, cols), float(b)))


def truth_rows(n: int, truth: SceneTruth):
    rows, cols = truth.depth.shape
    for i in range(rows):
        for j in range(cols):
            yield [n, i, j, truth.depth[i, j], truth.r[i, j], truth.b[i, j]]
