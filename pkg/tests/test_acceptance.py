"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a one-line verdict; the lines are printed at the end of
the pytest run (see ``conftest.pytest_terminal_summary``) and by running this
file directly: ``python tests/test_acceptance.py``.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import toy_irf
from splidar.adf import moment_match, neighbor_weights, predict_prior
from splidar.core import DepthGrid, GaussianBelief, SceneConfig
from splidar.detector import DetectionPriors, log_evidence_h0, log_evidence_h1, presence_from_evidence
from splidar.estimators import (
    DiscretePosterior,
    bf_log_lik,
    log_prior_on_grid,
    oracle_log_lik,
    pseudo_posterior,
)
from splidar.msl import MslObservation, MslSweepSpec, common_grid, msl_pseudo_log_lik, msl_sweep
from splidar.pipeline import MemorySink, Reconstructor, run_sequence
from splidar.sim import SweepSpec, cell_rng, generate_histograms, make_gaussian_irf, make_scene_video, sweep

FIXTURES = Path(__file__).parent / "fixtures"
VERDICTS: list[str] = []


def verdict(name: str, ok: bool, detail: str) -> None:
    VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _p(rows, est, beta=""):
    (row,) = [r for r in rows if r["estimator"] == est and r["beta"] == beta]
    return float(row["p_d"])


# 1 ---------------------------------------------------------------------------

def test_c1_flat_likelihood_identity():
    t0 = time.perf_counter()
    irf = make_gaussian_irf(28.0, 600, 1500)
    g = DepthGrid.for_irf(irf)
    worst = 0.0
    for prior in (None, GaussianBelief(600.0, 2500.0), GaussianBelief(300.0, 40.0)):
        ref = oracles.normalize_log(list(log_prior_on_grid(prior, g)))
        for beta in (0.1, 0.5, 1.0):
            post = pseudo_posterior(np.zeros(1500), irf, beta, prior, g)
            worst = max(worst, float(np.max(np.abs(post.probs - ref))))
    dt = time.perf_counter() - t0
    verdict("C1 flat-likelihood identity", worst < 1e-12 and dt < 1.0,
            f"max |post - prior| = {worst:.2e} (< 1e-12), {dt:.2f} s (< 1 s)")


# 2 ---------------------------------------------------------------------------

def test_c2_matched_filter_equivalence():
    t0 = time.perf_counter()
    irf = make_gaussian_irf(28.0, 600, 1500)
    g = DepthGrid.for_irf(irf)
    rng = np.random.default_rng(2)
    lags = g.values.astype(int) - irf.peak_bin + 1499
    agree = 0
    for _ in range(100):
        d = int(rng.integers(g.d_min, g.d_max + 1))
        z = generate_histograms(irf, [d], rng.uniform(5, 200), rng.uniform(0.001, 0.1), rng, g)[0].astype(float)
        xc = np.correlate(z, irf.samples, "full")[lags]
        post = pseudo_posterior(z, irf, 1.0, None, g)
        agree += int(g.d_min + np.argmax(xc) == post.mode)
    dt = time.perf_counter() - t0
    verdict("C2 matched-filter equivalence", agree == 100 and dt < 5.0, f"{agree}/100 argmax agree, {dt:.2f} s (< 5 s)")


# 3 ---------------------------------------------------------------------------

def test_c3_oracle_equivalence():
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(50):
        n_t = int(rng.integers(12, 33))
        irf = toy_irf(n_bins=n_t, peak=int(rng.integers(4, n_t - 4)), width=5, seed=i)
        g = DepthGrid.for_irf(irf)
        s, pk, depths = list(irf.samples), irf.peak_bin, g.values.astype(int)
        r, b, beta = rng.uniform(1, 30), rng.uniform(0.05, 1.0), rng.choice([0.3, 0.5, 0.7, 1.0])
        z = generate_histograms(irf, [int(rng.choice(depths))], r, b, rng, g)[0]
        lp = [oracles.gauss_logpdf(d, g.midpoint, 30.0) for d in depths]
        prior = GaussianBelief(g.midpoint, 30.0)

        pb = pseudo_posterior(z, irf, beta, prior, g).probs
        worst = max(worst, np.max(np.abs(pb - oracles.pb_posterior(list(z), s, pk, beta, depths, lp))))

        ref = [oracles.oracle_loglik(list(z), s, pk, d, r, b) + lp[j] for j, d in enumerate(depths)]
        orc = DiscretePosterior.from_log_weights(g, oracle_log_lik(z, irf, r, b, g) + np.array(lp)).probs
        worst = max(worst, np.max(np.abs(orc - oracles.normalize_log(ref))))

        # BF needs every photon inside the shifted support; use a background-free draw.
        zf = generate_histograms(irf, [int(rng.choice(depths))], r, 0.0, rng, g)[0]
        if zf.sum() == 0:
            zf[pk] = 1
        ref = [oracles.bf_loglik(list(zf), s, pk, d) + lp[j] for j, d in enumerate(depths)]
        bf = DiscretePosterior.from_log_weights(g, bf_log_lik(zf, irf, g) + np.array(lp)).probs
        worst = max(worst, np.max(np.abs(bf - oracles.normalize_log(ref))))
    verdict("C3 oracle equivalence", worst < 1e-12, f"max |posterior diff| over 50x(PB, BF, Oracle) = {worst:.2e}")


# 4 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep_rows():
    spec = SweepSpec(sbr_values=[100.0, 1e-3, 2.0, 1e-2], msc_values=[1000.0, 100.0, 35.0],
                     n_mc=200, estimators=["oracle", "bf", "pb:0.5", "pb:0.7"])
    t0 = time.perf_counter()
    rows = sweep(spec)
    return rows, time.perf_counter() - t0


def _cell(rows, sbr, msc):
    return [r for r in rows if float(r["sbr"]) == sbr and float(r["msc"]) == msc]


@pytest.mark.slow
def test_c4a_oracle_easy_regime(sweep_rows):
    rows, dt = sweep_rows
    p = _p(_cell(rows, 100.0, 1000.0), "oracle")
    verdict("C4a oracle SBR=100 MSC=1000", p >= 0.85 and dt < 600, f"p_d = {p:.3f} (>= 0.85); sweep {dt:.1f} s")


@pytest.mark.slow
def test_c4b_bf_low_sbr(sweep_rows):
    p = _p(_cell(sweep_rows[0], 1e-3, 100.0), "bf")
    verdict("C4b BF SBR=1e-3 MSC=100", p <= 0.50, f"p_d = {p:.3f} (<= 0.50)")


@pytest.mark.slow
def test_c4c_beta_tradeoff(sweep_rows):
    cell = _cell(sweep_rows[0], 2.0, 35.0)
    p5, p7 = _p(cell, "pb", "0.5"), _p(cell, "pb", "0.7")
    verdict("C4c PB beta trade-off SBR=2 MSC=35", p5 >= 0.80 and p7 <= p5 - 0.10,
            f"p_d(0.5) = {p5:.3f} (>= 0.80), p_d(0.7) = {p7:.3f} (needs <= {p5 - 0.10:.3f})")


@pytest.mark.slow
def test_c4d_ordering(sweep_rows):
    cell = _cell(sweep_rows[0], 1e-2, 1000.0)
    po, pb, bf = _p(cell, "oracle"), _p(cell, "pb", "0.5"), _p(cell, "bf")
    verdict("C4d ordering SBR=1e-2 MSC=1000", po >= pb >= bf - 0.05,
            f"oracle {po:.3f} >= PB0.5 {pb:.3f} >= BF {bf:.3f} - 0.05")


# 5 ---------------------------------------------------------------------------

def test_c5_adf_moment_matching():
    rng = np.random.default_rng(5)
    worst_idem = 0.0
    for _ in range(20):
        g = DepthGrid(0, int(rng.integers(10, 300)))
        post = DiscretePosterior.from_log_weights(g, rng.normal(0, 3, g.size))
        once = moment_match(post)
        twice = moment_match(once)
        worst_idem = max(worst_idem, abs(twice.mean - once.mean), abs(twice.variance - once.variance))
    g = DepthGrid(0, 1500)
    var = predict_prior([(GaussianBelief(600.0, 25.0), True)], math.sqrt(3.0), g, 1.0).variances[0]
    worst_mix = 0.0
    for _ in range(20):
        M = int(rng.choice([1, 5, 9]))
        nu0 = 1.0 if M == 1 else float(rng.uniform(0, 1))
        nb = [(GaussianBelief(float(rng.uniform(0, 1500)), float(rng.uniform(1, 5000))), bool(rng.random() < 0.7))
              for _ in range(M)]
        sig = float(rng.uniform(0.1, 5))
        prior = predict_prior(nb, sig, g, nu0)
        w = neighbor_weights(M, nu0)
        comps = [(b.mean, b.variance + sig ** 2) if det else (750.0, 1500 ** 2 / 12) for b, det in nb]
        dens = prior.density(g)
        for d in rng.integers(0, 1501, 10):
            ref = math.fsum(wi * math.exp(oracles.gauss_logpdf(float(d), m, v)) for wi, (m, v) in zip(w, comps))
            worst_mix = max(worst_mix, abs(dens[d] - ref) / max(ref, 1e-300))
    ok = worst_idem <= 1e-12 and var == 28.0 and worst_mix <= 1e-12
    verdict("C5 ADF moment matching", ok,
            f"idempotence {worst_idem:.1e}, M=1 variance {float(var)!r} (== 28), mixture rel. err {worst_mix:.1e}")


# 6 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_c6_detection_monte_carlo():
    t0 = time.perf_counter()
    irf = make_gaussian_irf(4.0, 20, 153)
    g = DepthGrid.for_irf(irf)
    rng = cell_rng(6)
    b = 0.23
    out = {}
    for r in (0.0, 55.0):
        truth = rng.integers(g.d_min, g.d_max + 1, 200)
        z = generate_histograms(irf, truth, r, b, rng, g)
        post = pseudo_posterior(z, irf, 0.5, None, g)
        mu_b = np.maximum(z.sum(axis=1) / 153, 1e-6)
        pri = DetectionPriors.from_mean(1.0, 55.0)
        m1 = log_evidence_h1(z, irf, g, post.probs, mu_b, pri.reflectivity_shape, pri.reflectivity_scale)
        out[r] = presence_from_evidence(m1, log_evidence_h0(z, mu_b), 0.5)
    absent, present = np.mean(out[0.0] < 0.5), np.mean(out[55.0] > 0.5)
    dt = time.perf_counter() - t0
    verdict("C6 detection Monte Carlo", absent >= 0.85 and present >= 0.85 and dt < 120,
            f"r=0: pi<0.5 in {absent:.3f}; r=55: pi>0.5 in {present:.3f} (both >= 0.85); {dt:.1f} s")


# 7 ---------------------------------------------------------------------------

def _ramp_run():
    n_bins, msc, sbr = 300, 50.0, 1.0
    irf = make_gaussian_irf(4.0, 20, n_bins)
    rec = Reconstructor(SceneConfig(rows=16, cols=16, n_bins=n_bins), irf)
    truths = []

    def frames():
        for f, t in make_scene_video("ramp", 16, 16, 200, irf, rec.grid, msc, msc / (sbr * n_bins), cell_rng(7)):
            truths.append(t.depth.ravel())
            yield f

    sink = MemorySink()
    run_sequence(frames(), rec, sink)
    return sink.results, truths


@pytest.mark.slow
def test_c7_end_to_end_tracking():
    results, truths = _ramp_run()
    rmse = []
    for r, t in zip(results[50:], truths[50:]):
        d = r.detected
        rmse.append(math.sqrt(np.mean((r.depth[d] - t[d]) ** 2)) if d.any() else math.inf)
    sd = np.array([np.nanmean(np.sqrt(r.variance)) for r in results])
    early, late = sd[:5].mean(), sd[150:].mean()
    cv = sd[100:].std() / sd[100:].mean()
    again, _ = _ramp_run()
    same = all(np.array_equal(a.depth, b.depth, equal_nan=True) and np.array_equal(a.variance, b.variance, equal_nan=True)
               and np.array_equal(a.presence, b.presence) for a, b in zip(results, again))
    ok = max(rmse) < 28 and early > late and cv < 0.25 and same
    verdict("C7 end-to-end ramp tracking", ok,
            f"max RMSE after burn-in {max(rmse):.3f} (< 28), mean std frames 0-4 {early:.4f} > 150-199 {late:.4f}, "
            f"CV(100-199) {cv:.3f} (< 0.25), bit-identical rerun {same}")


# 8 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_c8_multiband():
    rng = np.random.default_rng(8)
    irf = make_gaussian_irf(6.0, 30, 128)
    g = DepthGrid.for_irf(irf)
    agree = 0
    for _ in range(100):
        z = generate_histograms(irf, [int(rng.integers(g.d_min, g.d_max + 1))], 20.0, 0.05, rng, g)[0]
        if z.sum() == 0:
            z[30] = 1
        ll = msl_pseudo_log_lik(MslObservation(z[None, :], [irf]), 0.7, g)
        agree += int(np.argmax(ll) == np.argmax(pseudo_posterior(z, irf, 0.7, None, g).probs))

    irfs = [toy_irf(n_bins=16, peak=6, seed=s) for s in range(4)]
    tg = common_grid(irfs)
    worst = 0.0
    for _ in range(50):
        zs = rng.poisson(0.5, (4, 16)).astype(float)
        zs[:, 7] += 1
        beta = float(rng.choice([0.3, 0.7, 1.0]))
        ll = msl_pseudo_log_lik(MslObservation(zs, irfs), beta, tg)
        ref = [oracles.msl_loglik(zs.tolist(), [(list(f.samples), f.peak_bin) for f in irfs], beta, d)
               for d in tg.values.astype(int)]
        fin = np.isfinite(ref)
        assert np.array_equal(np.isfinite(ll), fin)
        worst = max(worst, float(np.max(np.abs(ll[fin] - np.array(ref)[fin]))))

    cell = json.loads((FIXTURES / "msl_pilot.json").read_text())
    spec = MslSweepSpec(base=SweepSpec(sbr_values=[cell["sbr"]], msc_values=[cell["msc"]], n_mc=200, seed=0),
                        n_bands=cell["n_bands"], betas=[cell["beta"]])
    rows = msl_sweep(spec)
    pb, bf = _p(rows, "pb", "0.7"), _p(rows, "bf")
    ok = agree == 100 and worst <= 1e-12 and pb >= 0.85 and bf <= 0.5
    verdict("C8 multi-band", ok,
            f"L=1 argmax {agree}/100, L=4 brute-force {worst:.1e}, pilot cell SBR={cell['sbr']:g} MSC={cell['msc']:g}: "
            f"PB0.7 {pb:.3f} (>= 0.85), BF {bf:.3f} (<= 0.5)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
