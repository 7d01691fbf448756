"""Online reconstruction loop: one call of :func:`process_frame` per frame.

Each frame reads only the previous frame's state, so all pixels of a frame are
independent given that snapshot and the loop's memory does not grow with the
number of frames.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .adf import neighbor_table, neighbor_weights, predict_prior_batch
from .core import DepthGrid, Irf, SceneConfig, bins_to_metres
from .detector import log_evidence_h0, log_evidence_h1, presence_from_evidence, propagate_presence_prior
from .estimators import DiscretePosterior, beta_pseudo_log_lik, mle_r_b, moments

log = logging.getLogger(__name__)

#: Floor on the exponential background prior mean (counts per bin).
MIN_BACKGROUND = 1e-6


@dataclass
class FilterState:
    """Per-pixel arrays (length P) carried from one frame to the next."""

    mean: np.ndarray
    variance: np.ndarray
    presence: np.ndarray
    presence_prior: np.ndarray
    background: np.ndarray
    reflectivity: np.ndarray
    frame: int = 0

    def nbytes(self) -> int:
        return sum(getattr(self, f.name).nbytes for f in fields(self) if f.name != "frame")

    def copy(self) -> "FilterState":
        return replace(self, **{f.name: getattr(self, f.name).copy() for f in fields(self) if f.name != "frame"})


def initial_state(n_pixels: int, grid: DepthGrid, presence_prior: float = 0.5) -> FilterState:
    """Flat depth beliefs, presence prior one half, no background estimate yet."""
    return FilterState(
        mean=np.full(n_pixels, grid.midpoint),
        variance=np.full(n_pixels, grid.flat_variance),
        presence=np.zeros(n_pixels),
        presence_prior=np.full(n_pixels, float(presence_prior)),
        background=np.full(n_pixels, np.nan),
        reflectivity=np.full(n_pixels, np.nan),
    )


@dataclass
class FrameResult:
    """Per-pixel outputs of one frame; NaN marks "absent" (and every faulty pixel)."""

    frame: int
    depth: np.ndarray
    variance: np.ndarray
    presence: np.ndarray
    background: np.ndarray
    reflectivity: np.ndarray
    flagged: np.ndarray
    duration: float = 0.0

    @property
    def detected(self) -> np.ndarray:
        return np.isfinite(self.depth)


@dataclass
class Reconstructor:
    """Binds a scene configuration and IRF to the per-frame update."""

    config: SceneConfig
    irf: Irf
    threads: int = 1
    grid: DepthGrid = field(init=False)

    def __post_init__(self):
        self.grid = self.config.grid(self.irf)
        c = self.config
        self.table = neighbor_table(c.rows, c.cols, c.M)
        self.weights = neighbor_weights(c.M, c.nu0)
        self.faulty = np.zeros(c.n_pixels, dtype=bool)
        self.faulty[list(c.faulty_pixels)] = True

    def initial_state(self) -> FilterState:
        return initial_state(self.config.n_pixels, self.grid)

    def process_frame(self, state: FilterState, frame: np.ndarray) -> tuple[FilterState, FrameResult]:
        return process_frame(state, frame, self)


def _detection(counts, grid, irf, probs, mu_b, pi0, cfg, threads):
    shape = cfg.reflectivity_shape
    scale = cfg.reflectivity_mean / shape

    def run(sl):
        m1 = log_evidence_h1(counts[sl], irf, grid, probs[sl], mu_b[sl], shape, scale)
        m0 = log_evidence_h0(counts[sl], mu_b[sl])
        return presence_from_evidence(m1, m0, pi0[sl])

    p = counts.shape[0]
    if threads <= 1 or p < 2 * threads:
        return run(slice(None))
    from concurrent.futures import ThreadPoolExecutor
    bounds = np.linspace(0, p, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(run, [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]))
    return np.concatenate(parts)


def process_frame(state: FilterState, frame: np.ndarray, rec: Reconstructor) -> tuple[FilterState, FrameResult]:
    """Advance the filter by one frame.

    ``frame`` has shape (rows, cols, N_T) or (P, N_T). Faulty pixels take their
    prior as posterior and presence one half. A pixel whose numbers go
    non-finite is flagged and handled the same way instead of failing the frame.
    """
    t0 = time.perf_counter()
    cfg, grid, irf = rec.config, rec.grid, rec.irf
    counts = np.asarray(frame, dtype=float).reshape(-1, np.shape(frame)[-1])
    if counts.shape != (cfg.n_pixels, cfg.n_bins):
        raise ValueError(f"frame shape {np.shape(frame)} does not match {cfg.rows}x{cfg.cols}x{cfg.n_bins}")
    if state.mean.shape != (cfg.n_pixels,):
        raise ValueError("state size does not match the configuration")
    faulty = rec.faulty

    # Prior from the previous frame's beliefs and detections.
    detected_prev = (state.presence > 0.5) & ~faulty
    prior = predict_prior_batch(state.mean, state.variance, detected_prev, rec.table, rec.weights,
                                cfg.sigma_rw, grid)
    log_prior = prior.log_density(grid)

    ll = beta_pseudo_log_lik(counts, irf, cfg.beta, grid)
    ll[faulty] = 0.0
    log_w = log_prior + ll
    flagged = ~np.all(np.isfinite(log_w), axis=1) & ~faulty
    log_w[flagged] = log_prior[flagged]
    post = DiscretePosterior.from_log_weights(grid, log_w)
    mean, var = moments(post.probs, grid.values)

    k = counts.sum(axis=1)
    bootstrap = k / cfg.n_bins
    mu_b = np.where(np.isfinite(state.background), state.background, bootstrap)
    mu_b = np.maximum(mu_b, MIN_BACKGROUND)
    with np.errstate(all="ignore"):
        pi = _detection(counts, grid, irf, post.probs, mu_b, state.presence_prior, cfg, rec.threads)
    bad = ~np.isfinite(pi) & ~faulty
    if np.any(bad):
        log.warning("frame %d: %d pixels with non-finite presence probability", state.frame, int(bad.sum()))
    flagged |= bad
    pi = np.where(faulty | flagged, 0.5, pi)

    detected = (pi > 0.5) & ~faulty
    background = np.where(faulty, state.background, bootstrap)
    reflectivity = np.full(cfg.n_pixels, np.nan)
    if np.any(detected):
        d_hat = np.clip(np.rint(mean[detected]), grid.d_min, grid.d_max).astype(np.int64)
        fit = mle_r_b(counts[detected], irf, d_hat, warn=False)
        reflectivity[detected] = fit.r
        background[detected] = fit.b

    new_state = FilterState(
        mean=mean,
        variance=var,
        presence=pi,
        presence_prior=propagate_presence_prior(pi, rec.table, rec.weights),
        background=background,
        reflectivity=reflectivity,
        frame=state.frame + 1,
    )
    show = ~faulty
    result = FrameResult(
        frame=state.frame,
        depth=np.where(detected, mean, np.nan),
        variance=np.where(detected, var, np.nan),
        presence=np.where(show, pi, np.nan),
        background=np.where(show, background, np.nan),
        reflectivity=np.where(detected, reflectivity, np.nan),
        flagged=flagged,
        duration=time.perf_counter() - t0,
    )
    return new_state, result


# --- streaming -------------------------------------------------------------------


class MemorySink:
    """Keeps every FrameResult; for tests and small runs."""

    def __init__(self):
        self.results: list[FrameResult] = []

    def write(self, result: FrameResult) -> None:
        self.results.append(result)

    def close(self) -> None:
        pass


class CsvSink:
    """Per-frame depth/variance/presence CSVs plus one cumulative point cloud.

    Point-cloud records are ``frame x y depth_m signal`` with x the column and
    y the row index of the pixel.
    """

    def __init__(self, out_dir, rows: int, cols: int, bin_width: float):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.rows, self.cols, self.bin_width = rows, cols, bin_width
        self._cloud = open(self.out / "pointcloud.txt", "w")
        self._cloud.write("# frame x y depth_m signal\n")

    def _grid_csv(self, name: str, values: np.ndarray) -> None:
        np.savetxt(self.out / name, values.reshape(self.rows, self.cols), delimiter=",", fmt="%.10g")

    def write(self, res: FrameResult) -> None:
        n = res.frame
        self._grid_csv(f"frame_{n:05d}_depth.csv", res.depth)
        self._grid_csv(f"frame_{n:05d}_variance.csv", res.variance)
        self._grid_csv(f"frame_{n:05d}_presence.csv", res.presence)
        idx = np.flatnonzero(res.detected)
        y, x = np.divmod(idx, self.cols)
        metres = bins_to_metres(res.depth[idx], self.bin_width)
        for xi, yi, dm, r in zip(x, y, metres, res.reflectivity[idx]):
            self._cloud.write(f"{n} {xi} {yi} {dm:.6f} {r:.4f}\n")

    def close(self) -> None:
        self._cloud.close()


@dataclass
class RunSummary:
    frames: int = 0
    mean_latency: float = 0.0
    detection_rate: float = 0.0
    truncated: bool = False
    state_bytes: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def run_sequence(frames, rec: Reconstructor, sink=None, state: FilterState | None = None) -> RunSummary:
    """Process ``frames`` strictly in order, handing each result to ``sink``.

    ``frames`` is any iterable of frames; if it exposes a ``truncated``
    attribute (e.g. :class:`~splidar.formats.SplfReader`) it is reported.
    """
    state = state or rec.initial_state()
    summary = RunSummary()
    latency = 0.0
    detections = 0
    observed = 0
    for frame in frames:
        state, res = rec.process_frame(state, frame)
        if sink is not None:
            sink.write(res)
        summary.frames += 1
        latency += res.duration
        detections += int(res.detected.sum())
        observed += int((~rec.faulty).sum())
        summary.state_bytes = max(summary.state_bytes, state.nbytes())
    if sink is not None:
        sink.close()
    if summary.frames:
        summary.mean_latency = latency / summary.frames
        summary.detection_rate = detections / max(observed, 1)
    summary.truncated = bool(getattr(frames, "truncated", False))
    if summary.truncated:
        log.warning("input truncated after %d complete frames", summary.frames)
    return summary
