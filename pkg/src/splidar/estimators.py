"""Single-pixel, single-frame depth estimators.

Every log-likelihood here is evaluated for all grid depths at once as a
product with the cached shift matrix, so ``counts`` may carry any number of
leading batch axes: shape (..., N_T) in, (..., G) out.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    VARIANCE_FLOOR,
    DepthGrid,
    GaussianBelief,
    Irf,
    PixelHistogram,
    shift_matrix,
)

log = logging.getLogger(__name__)


def _counts(hist) -> np.ndarray:
    if isinstance(hist, PixelHistogram):
        return hist.counts.astype(float)
    return np.asarray(hist, dtype=float)


@dataclass
class DiscretePosterior:
    """A (pseudo-)posterior tabulated on a depth grid.

    ``log_weights`` and ``probs`` have shape (..., G); ``probs`` sums to one
    along the last axis.
    """

    grid: DepthGrid
    log_weights: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_log_weights(cls, grid: DepthGrid, log_weights: np.ndarray) -> "DiscretePosterior":
        lw = np.asarray(log_weights, dtype=float)
        top = lw.max(axis=-1, keepdims=True)
        if not np.all(np.isfinite(top)):
            raise FloatingPointError("posterior degenerate: no grid depth has finite weight")
        p = np.exp(lw - top)
        p /= p.sum(axis=-1, keepdims=True)
        return cls(grid, lw, p)

    @property
    def mode(self):
        return self.grid.d_min + np.argmax(self.probs, axis=-1)


@dataclass
class Estimate:
    belief: GaussianBelief
    estimate: float
    posterior: DiscretePosterior | None = None
    no_overlap: bool = False


def log_prior_on_grid(prior, grid: DepthGrid) -> np.ndarray:
    """Log-density of ``prior`` at the grid depths, up to a constant.

    ``prior`` is ``None`` (flat), a :class:`GaussianBelief`, or an array of
    log-values already tabulated on the grid.
    """
    if prior is None:
        return np.zeros(grid.size)
    if isinstance(prior, GaussianBelief):
        d = grid.values
        return -0.5 * (d - prior.mean) ** 2 / prior.variance - 0.5 * math.log(2 * math.pi * prior.variance)
    lp = np.asarray(prior, dtype=float)
    if lp.shape[-1] != grid.size:
        raise ValueError(f"prior has {lp.shape[-1]} grid values, grid has {grid.size}")
    return lp


def beta_pseudo_log_lik(hist, irf: Irf, beta: float, grid: DepthGrid) -> np.ndarray:
    """Log pseudo-likelihood ``((beta+1)/beta) * z . s_d**beta`` at every grid depth.

    The beta-cross-entropy's depth-independent constant is dropped.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    z = _counts(hist)
    return (beta + 1.0) / beta * (z @ shift_matrix(irf, grid, float(beta)).T)


def pseudo_posterior(hist, irf: Irf, beta: float, prior, grid: DepthGrid) -> DiscretePosterior:
    lw = log_prior_on_grid(prior, grid) + beta_pseudo_log_lik(hist, irf, beta, grid)
    return DiscretePosterior.from_log_weights(grid, lw)


def moments(probs: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched mean and floored variance of distributions tabulated on ``values``."""
    mean = probs @ values
    centred = values - np.asarray(mean)[..., None]
    var = np.sum(probs * centred ** 2, axis=-1)
    return mean, np.maximum(var, VARIANCE_FLOOR)


def posterior_moments(post: DiscretePosterior) -> GaussianBelief:
    if post.probs.ndim != 1:
        raise ValueError("posterior_moments expects a single posterior; use moments() for batches")
    mean, var = moments(post.probs, post.grid.values)
    return GaussianBelief(float(mean), float(var))


def pb_estimate(hist, irf: Irf, beta: float, prior, grid: DepthGrid) -> Estimate:
    """Pseudo-posterior mean and variance."""
    post = pseudo_posterior(hist, irf, beta, prior, grid)
    b = posterior_moments(post)
    return Estimate(b, b.mean, post)


def bf_log_lik(hist, irf: Irf, grid: DepthGrid) -> np.ndarray:
    """Background-free log-likelihood ``sum_t z_t log s_d(t)`` with r profiled out.

    A depth whose shifted IRF is zero at a bin holding photons gets ``-inf``.
    """
    z = _counts(hist)
    S = shift_matrix(irf, grid, 1.0)
    inside = S > 0
    log_s = np.where(inside, np.log(np.where(inside, S, 1.0)), 0.0)
    ll = z @ log_s.T
    k_in = z @ inside.T.astype(float)
    k = z.sum(axis=-1, keepdims=True)
    return np.where(k - k_in > 1e-9 * np.maximum(k, 1.0), -np.inf, ll)


def _fallback(prior, grid: DepthGrid) -> Estimate:
    if isinstance(prior, GaussianBelief):
        return Estimate(prior, prior.mean, None, no_overlap=True)
    lp = log_prior_on_grid(prior, grid)
    post = DiscretePosterior.from_log_weights(grid, lp)
    b = posterior_moments(post)
    return Estimate(b, b.mean, post, no_overlap=True)


def bf_estimate(hist, irf: Irf, prior, grid: DepthGrid) -> Estimate:
    """MMSE depth under the background-free Poisson model.

    When no grid depth explains every photon the prior is returned with
    ``no_overlap`` set.
    """
    ll = bf_log_lik(hist, irf, grid)
    if not np.any(np.isfinite(ll)):
        return _fallback(prior, grid)
    post = DiscretePosterior.from_log_weights(grid, log_prior_on_grid(prior, grid) + ll)
    b = posterior_moments(post)
    return Estimate(b, b.mean, post)


def oracle_log_lik(hist, irf: Irf, r: float, b: float, grid: DepthGrid) -> np.ndarray:
    """Poisson log-likelihood with known signal amplitude ``r`` and background ``b``.

    The ``log z!`` term is omitted; everything else is kept.
    """
    if r < 0 or b < 0:
        raise ValueError("r and b must be non-negative")
    z = _counts(hist)
    n_t = z.shape[-1]
    k = z.sum(axis=-1, keepdims=True)
    if r == 0 and b == 0:
        if np.any(k > 0):
            raise ValueError("impossible observation: photons recorded with r = b = 0")
        return np.zeros(z.shape[:-1] + (grid.size,))
    S = shift_matrix(irf, grid, 1.0)
    mass = S.sum(axis=1)
    if b > 0:
        return k * math.log(b) + z @ np.log1p((r / b) * S).T - r * mass - b * n_t
    return bf_log_lik(z, irf, grid) + k * math.log(r) - r * mass


def oracle_mmse(hist, irf: Irf, r: float, b: float, prior, grid: DepthGrid) -> Estimate:
    ll = oracle_log_lik(hist, irf, r, b, grid)
    if not np.any(np.isfinite(ll)):
        return _fallback(prior, grid)
    post = DiscretePosterior.from_log_weights(grid, log_prior_on_grid(prior, grid) + ll)
    bel = posterior_moments(post)
    return Estimate(bel, bel.mean, post)


def half_sample_mode(toas) -> float:
    """Half-sample mode of a one-dimensional sample (Bickel and Fruehwirth).

    Repeatedly keeps the shortest window holding ``ceil(n/2)`` consecutive order
    statistics until at most three points remain.
    """
    x = np.sort(np.asarray(toas, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    while x.size > 3:
        h = (x.size + 1) // 2
        widths = x[h - 1:] - x[:x.size - h + 1]
        i = int(np.argmin(widths))
        x = x[i:i + h]
    if x.size == 3:
        lo, hi = x[1] - x[0], x[2] - x[1]
        if lo < hi:
            return float((x[0] + x[1]) / 2)
        if hi < lo:
            return float((x[1] + x[2]) / 2)
        return float(x[1])
    return float(x.mean())


def hsm_estimate(hist) -> float:
    """HSM on the photon arrival times of a histogram; NaN for an empty one."""
    h = hist if isinstance(hist, PixelHistogram) else PixelHistogram(np.asarray(hist).astype(np.int64))
    if h.K == 0:
        return math.nan
    return half_sample_mode(h.expand_toas())


@dataclass
class RBFit:
    r: np.ndarray | float
    b: np.ndarray | float
    converged: np.ndarray | bool
    iterations: int


def mle_r_b(hist, irf: Irf, d_hat, max_iter: int = 50, rtol: float = 1e-8, warn: bool = True) -> RBFit:
    """Maximum-likelihood signal amplitude and background for a fixed depth.

    EM on the signal/uniform mixture reading of the Poisson model: each photon
    in bin t is signal with responsibility ``r s(t) / (r s(t) + b)``. Accepts a
    batch: ``hist`` of shape (P, N_T) with ``d_hat`` of shape (P,).
    Non-converged entries keep their last iterate and ``converged`` is False;
    a warning is logged unless ``warn`` is False (then at debug level).
    """
    z = _counts(hist)
    scalar = z.ndim == 1
    z = np.atleast_2d(z)
    d = np.atleast_1d(np.asarray(d_hat)).astype(np.int64)
    n_t = z.shape[-1]
    lo, hi = irf.support
    k_s = irf.kernel
    w = k_s.size
    start = d - irf.peak_bin + lo
    if np.any(start < 0) or np.any(start + w > n_t):
        raise ValueError("depth outside the IRF guard region")
    zw = np.take_along_axis(z, start[:, None] + np.arange(w)[None, :], axis=1)
    k_tot = z.sum(axis=1)
    k_win = zw.sum(axis=1)

    if n_t > w:
        b = (k_tot - k_win) / (n_t - w)
    else:
        b = k_tot / (2.0 * n_t)
    r = np.maximum(k_win - b * w, 0.0)
    # Photons where the IRF vanishes need some background to be explained.
    orphan = np.any((zw > 0) & (k_s[None, :] == 0), axis=1) | ((k_tot > k_win) & (b == 0))
    b = np.where(orphan & (b == 0), np.maximum(k_tot, 1.0) * 1e-6 / n_t, b)
    r = np.where((r == 0) & (b == 0) & (k_tot > 0), k_tot, r)

    converged = k_tot == 0
    r = np.where(converged, 0.0, r)
    b = np.where(converged, 0.0, b)
    it = 0
    for it in range(1, max_iter + 1):
        active = ~converged
        if not np.any(active):
            it -= 1
            break
        rs = r[active, None] * k_s[None, :]
        lam = rs + b[active, None]
        gamma = np.divide(rs, lam, out=np.zeros_like(rs), where=lam > 0)
        sig = np.sum(zw[active] * gamma, axis=1)
        r_new = sig / k_s.sum()
        b_new = np.maximum(k_tot[active] - sig, 0.0) / n_t
        dr = np.abs(r_new - r[active]) / np.maximum(np.abs(r_new), 1e-300)
        db = np.abs(b_new - b[active]) / np.maximum(np.abs(b_new), 1e-300)
        step = np.maximum(np.where(r_new == r[active], 0.0, dr), np.where(b_new == b[active], 0.0, db))
        r[active] = r_new
        b[active] = b_new
        idx = np.flatnonzero(active)
        converged[idx[step < rtol]] = True
    if not np.all(converged):
        (log.warning if warn else log.debug)("mle_r_b: %d of %d fits did not converge in %d iterations",
                    int(np.sum(~converged)), converged.size, max_iter)
    if scalar:
        return RBFit(float(r[0]), float(b[0]), bool(converged[0]), it)
    return RBFit(r, b, converged, it)
