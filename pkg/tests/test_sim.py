import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splidar.core import DepthGrid
from splidar.sim import (
    SWEEP_COLUMNS,
    EstimatorSpec,
    SweepSpec,
    cell_rng,
    draw_truth_depths,
    generate_histograms,
    generate_pixel_histogram,
    make_emg_irf,
    make_irf,
    make_scene_video,
    p_d,
    rows_to_csv,
    sbr_params,
    scene_depths,
    sweep,
    sweep_cell,
)


def test_sbr_params():
    r, b = sbr_params(55.0, 1.6, 153)
    assert r == 55.0 and r / (b * 153) == pytest.approx(1.6)
    with pytest.raises(ValueError):
        sbr_params(10.0, 0.0, 100)


def test_histogram_moments(gauss153, grid153):
    rng = np.random.default_rng(0)
    z = generate_histograms(gauss153, np.full(2000, 70), 40.0, 0.1, rng, grid153)
    assert z.sum(axis=1).mean() == pytest.approx(40 + 0.1 * 153, rel=0.02)
    with pytest.raises(ValueError, match="grid"):
        generate_histograms(gauss153, [0], 1.0, 0.1, rng, grid153)


def test_single_pixel_generator(gauss153):
    h = generate_pixel_histogram(gauss153, 60, 100.0, 0.0, np.random.default_rng(1))
    assert np.all(h.counts[np.abs(np.arange(153) - 60) > 30] == 0)
    with pytest.raises(ValueError):
        generate_pixel_histogram(gauss153, 60, -1.0, 0.0, np.random.default_rng(1))


@pytest.mark.parametrize("est,truth,eta,expected", [
    ([0.0, 10.0, np.nan], [0, 0, 0], 5.0, 1 / 3),
    ([4.9], [0], 5.0, 1.0),
    ([5.0], [0], 5.0, 0.0),
])
def test_p_d(est, truth, eta, expected):
    assert p_d(est, truth, eta) == pytest.approx(expected)


def test_p_d_errors():
    with pytest.raises(ValueError):
        p_d([], [], 1.0)
    with pytest.raises(ValueError):
        p_d([1.0], [1.0, 2.0], 1.0)


@pytest.mark.parametrize("text,name,beta", [("oracle", "oracle", None), ("PB:0.7", "pb", 0.7), ("pb", "pb", 0.5)])
def test_estimator_spec_parse(text, name, beta):
    e = EstimatorSpec.parse(text)
    assert (e.name, e.beta) == (name, beta)


@pytest.mark.parametrize("text", ["mle", "pb:-1", "bf:2"])
def test_estimator_spec_rejects(text):
    with pytest.raises(ValueError):
        EstimatorSpec.parse(text)


def test_sweep_spec_defaults_and_validation():
    s = SweepSpec()
    assert len(s.sbr_values) == 13 and s.sbr_values[0] == pytest.approx(1e-4)
    assert s.n_mc == 200 and s.eta == 28 and s.n_bins == 1500
    assert [str(e) for e in s.estimators] == ["oracle", "bf", "hsm", "pb:0.1", "pb:0.3", "pb:0.5", "pb:0.7", "pb:1"]
    for bad in (dict(sbr_values=[0.0]), dict(n_mc=0), dict(eta=0), dict(estimators=[])):
        with pytest.raises(ValueError):
            SweepSpec(**bad)


def test_truth_depths_on_grid():
    g = DepthGrid(550, 650)
    d = draw_truth_depths(np.random.default_rng(0), 500, 600, 2500, g)
    assert d.size == 500 and d.min() >= 550 and d.max() <= 650


def test_cell_rng_streams_are_independent():
    a = cell_rng(0, 1, 2).random(4)
    assert np.array_equal(a, cell_rng(0, 1, 2).random(4))
    assert not np.array_equal(a, cell_rng(0, 2, 1).random(4))
    assert not np.array_equal(a, cell_rng(1, 1, 2).random(4))


def _small_spec(**kw):
    base = dict(sbr_values=[1.0, 100.0], msc_values=[50.0], n_mc=20,
                estimators=["oracle", "bf", "hsm", "pb:0.5"])
    base.update(kw)
    return SweepSpec(**base)


def test_sweep_rows_and_csv():
    spec = _small_spec()
    rows = sweep(spec)
    assert len(rows) == 2 * 1 * 4
    text = rows_to_csv(rows)
    back = list(csv.DictReader(io.StringIO(text)))
    assert list(back[0]) == SWEEP_COLUMNS
    assert all(0 <= float(r["p_d"]) <= 1 for r in back)


def test_sweep_cell_is_order_free():
    spec = _small_spec()
    rows = sweep(spec)
    assert sweep_cell(spec, 1, 0) == rows[4:8]
    assert sweep(spec, threads=3) == rows


def test_sweep_deterministic_and_seed_sensitive():
    spec = _small_spec(sbr_values=[0.05], estimators=["hsm", "pb:0.5"])
    assert rows_to_csv(sweep(spec)) == rows_to_csv(sweep(spec))
    assert rows_to_csv(sweep(spec)) != rows_to_csv(sweep(_small_spec(sbr_values=[0.05], estimators=["hsm", "pb:0.5"],
                                                                  seed=1)))


def test_make_irf_dispatch():
    assert make_irf("gaussian").n_bins == 1500
    with pytest.raises(ValueError):
        make_irf("square")
    with pytest.raises(ValueError, match="tail"):
        make_emg_irf(4.0, 20, 153, tail_bins=40.0)


@pytest.mark.parametrize("scenario", ["static", "ramp", "ball"])
def test_scene_depths_on_grid(scenario, grid153):
    for n in (0, 17, 59):
        d = scene_depths(scenario, 12, 16, n, grid153)
        assert d.shape == (12, 16)
        finite = d[np.isfinite(d)]
        assert finite.size and np.all(finite == np.round(finite))
        assert finite.min() >= grid153.d_min and finite.max() <= grid153.d_max


def test_ball_moves_and_slabs_stay():
    g = DepthGrid(12, 140)
    a, b = scene_depths("ball", 32, 32, 0, g), scene_depths("ball", 32, 32, 15, g)
    assert not np.array_equal(np.isnan(a), np.isnan(b))
    np.testing.assert_array_equal(a[:, :3], b[:, :3])
    with pytest.raises(ValueError):
        scene_depths("cube", 4, 4, 0, g)


def test_ramp_advances_one_bin_per_frame(grid153):
    a, b = scene_depths("ramp", 4, 6, 3, grid153), scene_depths("ramp", 4, 6, 4, grid153)
    assert np.all(b - a == 1)


def test_scene_video_shapes_and_determinism(gauss153, grid153):
    def run():
        return list(make_scene_video("ball", 8, 10, 3, gauss153, grid153, 55.0, 0.2, cell_rng(4)))

    a, b = run(), run()
    assert a[0][0].shape == (8, 10, 153)
    for (fa, ta), (fb, tb) in zip(a, b):
        np.testing.assert_array_equal(fa, fb)
        assert np.array_equal(ta.depth, tb.depth, equal_nan=True)


def test_scene_video_rejects_off_grid(gauss153, grid153):
    with pytest.raises(ValueError, match="leaves the grid"):
        list(make_scene_video("ramp", 2, 2, 200, gauss153, grid153, 10.0, 0.1, cell_rng(0)))


@given(st.floats(1e-3, 1e3), st.floats(1, 1e3))
def test_sbr_definition_roundtrip(sbr, msc):
    r, b = sbr_params(msc, sbr, 1500)
    assert math.isclose(r / (b * 1500), sbr, rel_tol=1e-12)
