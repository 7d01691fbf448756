"""Multispectral (multi-band) extension of the beta pseudo-likelihood.

With L bands sharing one depth, the pseudo-likelihood factorizes over bands:

    ((beta+1)/beta) * prod_l (1/K_l) z_l . s_l,d**beta

and its log is computed here per grid depth. Only maximum-likelihood
estimates are benchmarked; a pseudo-posterior is offered for completeness.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DepthGrid, Irf, PixelHistogram, shift_matrix
from .estimators import DiscretePosterior, bf_log_lik, log_prior_on_grid, oracle_log_lik
from .sim import (
    SWEEP_COLUMNS,
    SweepSpec,
    cell_rng,
    draw_truth_depths,
    generate_histograms,
    make_irf,
    p_d,
    sbr_params,
)

log = logging.getLogger(__name__)


@dataclass
class MslObservation:
    """One pixel seen in L bands: ``counts`` has shape (L, N_T), one IRF per band."""

    counts: np.ndarray
    irfs: list

    def __post_init__(self):
        c = self.counts
        if isinstance(c, (list, tuple)):
            c = np.stack([h.counts if isinstance(h, PixelHistogram) else np.asarray(h) for h in c])
        self.counts = np.asarray(c, dtype=float)
        if self.counts.ndim != 2:
            raise ValueError("counts must have shape (L, N_T)")
        if len(self.irfs) != self.counts.shape[0]:
            raise ValueError(f"{self.counts.shape[0]} bands of data but {len(self.irfs)} IRFs")
        if self.counts.shape[0] < 1:
            raise ValueError("need at least one band")

    @property
    def n_bands(self) -> int:
        return self.counts.shape[0]


def _band_terms(counts: np.ndarray, irfs, beta: float, grid: DepthGrid) -> np.ndarray:
    """log(z_l . s_l,d**beta) - log K_l for each band, shape (L, ..., G).

    ``counts`` has shape (L, ..., N_T). Entries with K_l = 0 come out NaN.
    """
    out = []
    for z, irf in zip(counts, irfs):
        xc = z @ shift_matrix(irf, grid, float(beta)).T
        k = z.sum(axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            out.append(np.log(xc) - np.log(k))
    return np.stack(out)


def msl_pseudo_log_lik(obs: MslObservation, beta: float, grid: DepthGrid) -> np.ndarray:
    """Log multi-band pseudo-likelihood at every grid depth.

    Bands without photons are dropped with a warning. A depth at which some
    band's cross-correlation is zero gets ``-inf``.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    k = obs.counts.sum(axis=1)
    keep = k > 0
    if not np.any(keep):
        raise ValueError("no photons in any band")
    if not np.all(keep):
        warnings.warn(f"dropping {int(np.sum(~keep))} empty band(s)", RuntimeWarning, stacklevel=2)
    irfs = [irf for irf, ok in zip(obs.irfs, keep) if ok]
    terms = _band_terms(obs.counts[keep], irfs, beta, grid)
    return math.log((beta + 1.0) / beta) + terms.sum(axis=0)


def msl_pseudo_posterior(obs: MslObservation, beta: float, prior, grid: DepthGrid) -> DiscretePosterior:
    return DiscretePosterior.from_log_weights(grid, log_prior_on_grid(prior, grid) + msl_pseudo_log_lik(obs, beta, grid))


def _argmax_or_nan(ll: np.ndarray, grid: DepthGrid) -> np.ndarray:
    """Grid depth maximizing each row; NaN when the whole row is -inf."""
    ok = np.any(np.isfinite(ll), axis=-1)
    d = grid.d_min + np.argmax(np.where(np.isfinite(ll), ll, -np.inf), axis=-1)
    return np.where(ok, d.astype(float), np.nan)


def band_irfs(n_bands: int, fwhm_bins: float = 28.0, center_bin: int = 600, n_bins: int = 1500,
              spread: float = 0.5) -> list[Irf]:
    """``n_bands`` Gaussian IRFs of FWHMs spread over ``fwhm * [1 - spread/2, 1 + spread/2]``,
    all peaking at ``center_bin``; a synthetic stand-in for measured per-band responses."""
    if n_bands < 1:
        raise ValueError("need at least one band")
    scales = np.linspace(1 - spread / 2, 1 + spread / 2, n_bands) if n_bands > 1 else np.ones(1)
    return [make_irf("gaussian", fwhm_bins * s, center_bin, n_bins) for s in scales]


def common_grid(irfs, d_min=None, d_max=None) -> DepthGrid:
    """Largest grid inside every band's guards."""
    grids = [DepthGrid.for_irf(irf) for irf in irfs]
    lo = max(g.d_min for g in grids) if d_min is None else d_min
    hi = min(g.d_max for g in grids) if d_max is None else d_max
    for irf in irfs:
        DepthGrid.for_irf(irf, lo, hi)
    return DepthGrid(lo, hi)


@dataclass
class MslSweepSpec:
    """Sweep settings for the multi-band MLE benchmark; trials and cells as in :class:`SweepSpec`."""

    base: SweepSpec = field(default_factory=SweepSpec)
    n_bands: int = 4
    betas: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 1.0])
    spread: float = 0.5


def msl_sweep_cell(spec: MslSweepSpec, irfs, grid: DepthGrid, i_sbr: int, i_msc: int) -> list[dict]:
    base = spec.base
    sbr, msc = base.sbr_values[i_sbr], base.msc_values[i_msc]
    r, b = sbr_params(msc, sbr, base.n_bins)
    rng = cell_rng(base.seed, i_sbr, i_msc)
    truths = draw_truth_depths(rng, base.n_mc, base.prior_mean, base.prior_var, grid)
    counts = np.stack([generate_histograms(irf, truths, r, b, rng, grid) for irf in irfs]).astype(float)

    estimates = []
    for beta in spec.betas:
        terms = _band_terms(counts, irfs, beta, grid)
        # Bands with K_l = 0 are left out, trial by trial.
        empty = counts.sum(axis=-1) == 0                                   # (L, n_mc)
        ll = np.where(empty[..., None], 0.0, terms).sum(axis=0)
        ll[np.all(empty, axis=0)] = -np.inf
        estimates.append(("pb", f"{beta:g}", _argmax_or_nan(ll, grid)))
    bf = sum(bf_log_lik(c, irf, grid) for c, irf in zip(counts, irfs))
    estimates.append(("bf", "", _argmax_or_nan(bf, grid)))
    orc = sum(oracle_log_lik(c, irf, r, b, grid) for c, irf in zip(counts, irfs))
    estimates.append(("oracle", "", _argmax_or_nan(orc, grid)))
    return [{
        "estimator": name, "beta": beta, "sbr": f"{sbr:.6g}", "msc": f"{msc:.6g}",
        "p_d": f"{p_d(d_hat, truths, base.eta):.6f}", "n_mc": base.n_mc, "seed": base.seed,
    } for name, beta, d_hat in estimates]


def msl_sweep(spec: MslSweepSpec, irfs=None, threads: int = 1) -> list[dict]:
    """Per-cell p_d of the multi-band MLEs: PB for each beta, summed BF, summed Oracle.

    Rows use the single-band sweep's CSV columns.
    """
    base = spec.base
    if irfs is None:
        irfs = band_irfs(spec.n_bands, base.fwhm_bins, base.irf_peak, base.n_bins, spec.spread)
    if len(irfs) != spec.n_bands:
        raise ValueError(f"expected {spec.n_bands} band IRFs, got {len(irfs)}")
    grid = common_grid(irfs, base.d_min, base.d_max)
    cells = [(i, j) for i in range(len(base.sbr_values)) for j in range(len(base.msc_values))]

    def run(c):
        return msl_sweep_cell(spec, irfs, grid, *c)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]
    return [row for cell in results for row in cell]


MSL_COLUMNS = SWEEP_COLUMNS
