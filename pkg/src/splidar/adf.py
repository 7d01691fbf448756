"""Spatio-temporal depth prior and assumed-density filtering.

The prior for pixel p at frame n is a Gaussian mixture over its neighbourhood:
each neighbour's frame n-1 Gaussian belief, widened by the random-walk
variance, or a wide "flat" Gaussian standing in for a uniform on the depth
grid when the neighbour had no detected surface, is faulty, or lies outside
the field of view.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import DepthGrid, GaussianBelief
from .estimators import DiscretePosterior, posterior_moments

# (row, col) offsets, centre first.
_OFFSETS = {
    1: [(0, 0)],
    5: [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)],
    9: [(0, 0)] + [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)],
}


def neighbor_weights(M: int, nu0: float) -> np.ndarray:
    """Mixture weights: ``nu0`` for the centre, the rest shared equally.

    >>> neighbor_weights(5, 0.5).tolist()
    [0.5, 0.125, 0.125, 0.125, 0.125]
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0.0 <= nu0 <= 1.0:
        raise ValueError("nu0 must lie in [0, 1]")
    if M == 1:
        if nu0 != 1.0:
            raise ValueError("a single-pixel neighbourhood needs nu0 = 1")
        return np.ones(1)
    return np.concatenate(([nu0], np.full(M - 1, (1.0 - nu0) / (M - 1))))


def neighborhood_offsets(M: int) -> list[tuple[int, int]]:
    try:
        return list(_OFFSETS[M])
    except KeyError:
        raise ValueError(f"unsupported neighbourhood size M={M}; choose from {sorted(_OFFSETS)}") from None


def neighbor_table(rows: int, cols: int, M: int) -> np.ndarray:
    """Row-major pixel index of every neighbour, shape (rows*cols, M); -1 when out of view."""
    yy, xx = np.divmod(np.arange(rows * cols), cols)
    table = np.empty((rows * cols, M), dtype=np.int64)
    for k, (dy, dx) in enumerate(neighborhood_offsets(M)):
        ny, nx = yy + dy, xx + dx
        inside = (ny >= 0) & (ny < rows) & (nx >= 0) & (nx < cols)
        table[:, k] = np.where(inside, ny * cols + nx, -1)
    return table


@dataclass
class MixturePrior:
    """Gaussian mixture with arrays of shape (..., M)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def log_density(self, grid: DepthGrid) -> np.ndarray:
        """Log mixture density at each grid depth, shape (..., G)."""
        d = grid.values
        m = self.means[..., None]
        v = self.variances[..., None]
        comp = -0.5 * (d - m) ** 2 / v - 0.5 * np.log(2 * np.pi * v)
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)[..., None]
        return logsumexp(comp + lw, axis=-2)

    def density(self, grid: DepthGrid) -> np.ndarray:
        return np.exp(self.log_density(grid))


def predict_prior(neighbors, sigma_rw: float, grid: DepthGrid, nu0: float) -> MixturePrior:
    """Prior for one pixel from its neighbours' previous beliefs.

    ``neighbors`` lists ``(belief, detected)`` pairs, centre pixel first; a
    ``None`` belief (out of view, faulty) or ``detected=False`` yields the flat
    component.
    """
    if not sigma_rw > 0:
        raise ValueError("sigma_rw must be positive")
    w = neighbor_weights(len(neighbors), nu0)
    means = np.empty(len(neighbors))
    variances = np.empty(len(neighbors))
    rw = sigma_rw ** 2
    for k, (belief, detected) in enumerate(neighbors):
        if belief is not None and detected:
            means[k] = belief.mean
            variances[k] = belief.variance + rw
        else:
            means[k] = grid.midpoint
            variances[k] = grid.flat_variance
    return MixturePrior(w, means, variances)


def predict_prior_batch(means: np.ndarray, variances: np.ndarray, detected: np.ndarray,
                        table: np.ndarray, weights: np.ndarray, sigma_rw: float,
                        grid: DepthGrid) -> MixturePrior:
    """Vectorized :func:`predict_prior` for every pixel of a frame.

    ``means``, ``variances`` and ``detected`` are per-pixel frame n-1 values,
    ``table`` comes from :func:`neighbor_table`.
    """
    valid = table >= 0
    idx = np.where(valid, table, 0)
    use = valid & detected[idx]
    m = np.where(use, means[idx], grid.midpoint)
    v = np.where(use, variances[idx] + sigma_rw ** 2, grid.flat_variance)
    w = np.broadcast_to(weights, table.shape)
    return MixturePrior(w, m, v)


def moment_match(post) -> GaussianBelief:
    """Gaussian closest in KL(post || q): same mean and variance as ``post``.

    A :class:`GaussianBelief` is already in the family and comes back unchanged.
    """
    if isinstance(post, GaussianBelief):
        return GaussianBelief(post.mean, post.variance)
    return posterior_moments(post)
