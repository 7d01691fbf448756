"""Direct-formula reference implementations, written with plain loops.

These deliberately avoid the package's shift matrix, sliding windows and
vectorized reductions so that agreement is evidence of correctness.
"""
import math

import numpy as np


def shifted(samples, peak, d, beta=1.0):
    """s_d(t) = s(t - d + peak) ** beta, zero outside the sampled range."""
    n = len(samples)
    out = [0.0] * n
    for t in range(n):
        j = t - d + peak
        if 0 <= j < n and samples[j] > 0:
            out[t] = samples[j] ** beta
    return out


def normalize_log(lw):
    finite = [x for x in lw if x != -math.inf]
    top = max(finite)
    total = math.fsum(math.exp(x - top) for x in finite)
    return [math.exp(x - top) / total if x != -math.inf else 0.0 for x in lw]


def gauss_logpdf(x, m, v):
    return -0.5 * (x - m) ** 2 / v - 0.5 * math.log(2 * math.pi * v)


def pb_posterior(z, samples, peak, beta, depths, log_prior=None):
    lw = []
    for i, d in enumerate(depths):
        s = shifted(samples, peak, d, beta)
        ll = (beta + 1) / beta * math.fsum(zt * st for zt, st in zip(z, s))
        lw.append(ll + (0.0 if log_prior is None else log_prior[i]))
    return normalize_log(lw)


def bf_loglik(z, samples, peak, d):
    s = shifted(samples, peak, d)
    total = 0.0
    for zt, st in zip(z, s):
        if zt == 0:
            continue
        if st == 0:
            return -math.inf
        total += zt * math.log(st)
    return total


def oracle_loglik(z, samples, peak, d, r, b):
    """Poisson log-likelihood without the log z! term."""
    s = shifted(samples, peak, d)
    return math.fsum(zt * math.log(r * st + b) - (r * st + b) for zt, st in zip(z, s))


def mixture_logpdf(x, weights, means, variances):
    return math.log(math.fsum(w * math.exp(gauss_logpdf(x, m, v)) for w, m, v in zip(weights, means, variances)))


def msl_loglik(zs, irfs, beta, d):
    """log of ((beta+1)/beta) * prod_l (1/K_l) sum_t z_l(t) s_l,d(t)**beta."""
    total = math.log((beta + 1) / beta)
    for z, (samples, peak) in zip(zs, irfs):
        k = sum(z)
        if k == 0:
            continue
        xc = math.fsum(zt * st for zt, st in zip(z, shifted(samples, peak, d, beta)))
        if xc == 0:
            return -math.inf
        total += math.log(xc) - math.log(k)
    return total


def h0_evidence_quad(z, mean_b):
    """log of int prod_t Poisson(z_t; b) Exp(b; mean_b) db by adaptive quadrature."""
    from scipy import integrate

    n_t = len(z)
    k = sum(z)
    log_fact = sum(math.lgamma(zt + 1) for zt in z)

    def f(b):
        if b <= 0:
            return 0.0
        return math.exp(k * math.log(b) - n_t * b - log_fact - b / mean_b - math.log(mean_b))

    val, _ = integrate.quad(f, 0, math.inf, epsabs=0, epsrel=1e-13, limit=500)
    return math.log(val)
