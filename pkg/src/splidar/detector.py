"""Per-pixel Bayesian surface-presence test.

H0 (no surface): z_t ~ Poisson(b). H1: z_t ~ Poisson(r s_d(t) + b). The
background has an exponential prior, the amplitude a gamma prior, and the
depth prior is the pixel's current pseudo-posterior. H0's evidence is closed
form; H1's is a tensor-product quadrature over (r, b) and a sum over the
depth grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .core import DepthGrid, Irf, PixelHistogram, sliding_windows

#: Presence probabilities are clamped to [EPS, 1 - EPS] before taking logits.
EPS = 1e-6
N_NODES = 16


@dataclass
class DetectionPriors:
    """Hyperparameters of one pixel's presence test.

    ``background_mean`` is the exponential prior mean (counts per bin);
    the amplitude prior is gamma(``reflectivity_shape``, ``reflectivity_scale``).
    """

    background_mean: float
    reflectivity_shape: float
    reflectivity_scale: float
    presence_prior: float = 0.5

    def __post_init__(self):
        if not (self.background_mean > 0 and self.reflectivity_shape > 0 and self.reflectivity_scale > 0):
            raise ValueError("detection prior hyperparameters must be positive")
        if not 0.0 <= self.presence_prior <= 1.0:
            raise ValueError("presence prior must lie in [0, 1]")

    @classmethod
    def from_mean(cls, background_mean: float, reflectivity_mean: float, shape: float = 2.0,
                  presence_prior: float = 0.5) -> "DetectionPriors":
        return cls(background_mean, shape, reflectivity_mean / shape, presence_prior)


def quadrature_nodes(n: int = N_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on (0, 1) and weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def log_evidence_h0(counts: np.ndarray, background_mean) -> np.ndarray:
    """log p(z | H0) with b ~ Exponential(mean) integrated out exactly.

    The likelihood depends on b only through K: b^K e^{-N_T b} / prod z_t!,
    so the integral is ``lam K! / (N_T + lam)^(K+1)`` with ``lam = 1/mean``.
    """
    z = np.asarray(counts, dtype=float)
    n_t = z.shape[-1]
    k = z.sum(axis=-1)
    lam = 1.0 / np.asarray(background_mean, dtype=float)
    log_fact = special.gammaln(z + 1.0).sum(axis=-1)
    return np.log(lam) + special.gammaln(k + 1.0) - (k + 1.0) * np.log(n_t + lam) - log_fact


def log_evidence_h1(counts: np.ndarray, irf: Irf, grid: DepthGrid, depth_probs: np.ndarray,
                    background_mean, reflectivity_shape, reflectivity_scale,
                    n_nodes: int = N_NODES, depth_tol: float = 1e-12) -> np.ndarray:
    """log p(z | H1) by quadrature; batched over leading axes of ``counts``.

    Nodes in (r, b) are the prior quantiles at Gauss-Legendre points of (0, 1),
    so the prior densities are absorbed into the change of variables. Depths
    whose prior weight is below ``depth_tol`` times the pixel's largest weight
    are skipped; ``depth_tol=0`` sums over the whole grid.
    """
    z = np.asarray(counts, dtype=float)
    batch = z.shape[:-1]
    z2 = z.reshape(-1, z.shape[-1])
    p = z2.shape[0]

    def per_pixel(a):
        return np.broadcast_to(np.asarray(a, dtype=float), batch).reshape(p)

    mu_b, shape, scale = per_pixel(background_mean), per_pixel(reflectivity_shape), per_pixel(reflectivity_scale)
    dp = np.asarray(depth_probs, dtype=float).reshape(p, grid.size)
    keep = dp > depth_tol * dp.max(axis=1, keepdims=True)
    n_keep = keep.sum(axis=1)
    # Largest-first so each chunk pads to a similar depth count.
    order = np.argsort(-n_keep, kind="stable")
    win_all = sliding_windows(z2, irf, grid)
    out = np.empty(p)
    i = 0
    while i < p:
        q = int(n_keep[order[i]])
        # Bound the (chunk, Q, n_nodes^2) work tensor to roughly 32 MB.
        chunk = max(1, int(4_000_000 // (q * n_nodes * n_nodes)))
        idx = order[i:i + chunk]
        # Top-q depths of each pixel; padded entries get zero weight.
        sel = np.argsort(-dp[idx], axis=1, kind="stable")[:, :q]
        w = np.take_along_axis(dp[idx], sel, axis=1)
        w = np.where(np.take_along_axis(keep[idx], sel, axis=1), w, 0.0)
        win = win_all[idx[:, None], sel]                                       # (C, Q, W)
        out[idx] = _log_evidence_h1_chunk(z2[idx], win, irf, w, mu_b[idx], shape[idx], scale[idx], n_nodes)
        i += chunk
    return out.reshape(batch)


def _log_evidence_h1_chunk(z, win, irf, depth_w, mu_b, shape, scale, n_nodes):
    p, n_t = z.shape
    u, wu = quadrature_nodes(n_nodes)
    b_nodes = -mu_b[:, None] * np.log1p(-u)[None, :]                             # (P, nb)
    r_nodes = stats.gamma.ppf(u[None, :], shape[:, None], scale=scale[:, None])  # (P, nr)
    k = z.sum(axis=1)
    kernel = irf.kernel
    # log1p(r s_j / b) for every (r, b, j) is the only depth-dependent term.
    ratio = r_nodes[:, :, None, None] / b_nodes[:, None, :, None]
    table = np.log1p(ratio * kernel).reshape(p, n_nodes * n_nodes, -1)          # (P, nr*nb, W)
    inner = np.matmul(win, table.transpose(0, 2, 1))                            # (P, Q, nr*nb)
    base = (k[:, None, None] * np.log(b_nodes[:, None, :])
            - r_nodes[:, :, None] * kernel.sum() - b_nodes[:, None, :] * n_t)     # (P, nr, nb)
    log_w = np.log(wu)[:, None] + np.log(wu)[None, :]
    inner += (base + log_w).reshape(p, 1, -1)
    with np.errstate(divide="ignore"):
        log_dp = np.log(depth_w)
    total = _logsumexp(inner, axis=2) + log_dp
    # Reduce over depth along a non-contiguous axis: numpy then accumulates
    # sequentially, so zero-weight padding cannot change the rounding.
    return _logsumexp(np.ascontiguousarray(total.T), axis=0) - special.gammaln(z + 1.0).sum(axis=1)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(a - top), axis=axis)) + np.squeeze(top, axis=axis)


def presence_from_evidence(log_m1, log_m0, presence_prior) -> np.ndarray:
    """Posterior presence probability from the two log evidences and the prior odds."""
    pi0 = np.clip(np.asarray(presence_prior, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        prior_logit = np.log(pi0) - np.log1p(-pi0)
    return special.expit(prior_logit + np.asarray(log_m1) - np.asarray(log_m0))


def target_presence_probability(hist, irf: Irf, priors: DetectionPriors, grid: DepthGrid,
                                depth_probs: np.ndarray) -> float:
    """Posterior probability that the pixel holds a surface.

    ``depth_probs`` is the pseudo-posterior over ``grid`` used as the depth prior.
    """
    z = hist.counts if isinstance(hist, PixelHistogram) else np.asarray(hist)
    m0 = log_evidence_h0(z, priors.background_mean)
    m1 = log_evidence_h1(z, irf, grid, depth_probs, priors.background_mean,
                         priors.reflectivity_shape, priors.reflectivity_scale)
    return float(presence_from_evidence(m1, m0, priors.presence_prior))


def propagate_presence_prior(pi: np.ndarray, table: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Next-frame presence priors by logit-space averaging over each neighbourhood.

    Out-of-view neighbours (``table == -1``) contribute a logit of zero,
    i.e. probability one half.
    """
    pi = np.clip(np.asarray(pi, dtype=float), EPS, 1.0 - EPS)
    lg = special.logit(pi)
    valid = table >= 0
    contrib = np.where(valid, lg[np.where(valid, table, 0)], 0.0)
    return special.expit(contrib @ np.asarray(weights, dtype=float))


def background_no_target(k, n_bins: int):
    """Background rate (counts per bin) of a pixel judged empty."""
    return np.asarray(k, dtype=float) / n_bins if np.ndim(k) else float(k) / n_bins
