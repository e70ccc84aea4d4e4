"""Channel model: path loss values, draw statistics, determinism, text round trip."""

import io

import numpy as np
import pytest
from scipy import stats

from cachebeam import (CellModel, SystemConfig, amplitude_gain, dump_channel,
                       dumps_channel, load_channel, loads_channel, path_loss_db,
                       sample_channel, trial_rng)

BIG = SystemConfig(num_files=200, num_users=200, cache_size=1, num_antennas=50)


# ------------------------------------------------------------------ path loss

def test_path_loss_reference_points():
    model = CellModel()
    assert path_loss_db(1.0, model) == pytest.approx(148.1)
    assert path_loss_db(0.1, model) == pytest.approx(110.5)
    assert path_loss_db(0.5, model) == pytest.approx(136.78, abs=0.01)


def test_path_loss_rejects_nonpositive_distance():
    model = CellModel()
    with pytest.raises(ValueError):
        path_loss_db(0.0, model)
    with pytest.raises(ValueError):
        path_loss_db(np.array([0.5, -1.0]), model)


def test_amplitude_gain_conventions():
    model = CellModel()
    assert amplitude_gain(1.0, model) == pytest.approx(10.0 ** (-14.81))
    model20 = CellModel(pathloss_amplitude_exponent=20.0)
    assert amplitude_gain(1.0, model20) == pytest.approx(10.0 ** (-148.1 / 20.0))


def test_pinned_distance_gain_applied_to_every_entry():
    # all users at exactly 1 km: every |h| entry is gain * |fading|
    model = CellModel(radius_km=1.0, min_distance_km=1.0 - 1e-12)
    cfg = SystemConfig(num_files=5, num_users=5, cache_size=1, num_antennas=3)
    chan = sample_channel(cfg, model, trial_rng(0, 0))
    assert np.allclose(chan.distances_km, 1.0)
    assert np.allclose(chan.gains, 10.0 ** (-14.81))
    assert np.allclose(chan.h, chan.gains[:, None] * chan.fading())


def test_cell_model_validation():
    with pytest.raises(ValueError):
        CellModel(radius_km=0.5, min_distance_km=0.5)
    with pytest.raises(ValueError):
        CellModel(min_distance_km=-0.1)
    with pytest.raises(ValueError):
        CellModel(pathloss_amplitude_exponent=0.0)
    assert CellModel().noise_power_w == pytest.approx(10.0 ** (-13.4))


# ---------------------------------------------------------------- determinism

def test_same_seed_same_realization():
    cfg = SystemConfig(num_files=4, num_users=4, cache_size=1, num_antennas=3)
    model = CellModel()
    a = sample_channel(cfg, model, trial_rng(42, 3))
    b = sample_channel(cfg, model, trial_rng(42, 3))
    assert np.array_equal(a.distances_km, b.distances_km)
    assert np.array_equal(a.h, b.h)
    c = sample_channel(cfg, model, trial_rng(42, 4))
    assert not np.array_equal(a.h, c.h)


def test_integer_seed_accepted():
    cfg = SystemConfig(num_files=4, num_users=4, cache_size=1)
    model = CellModel()
    a = sample_channel(cfg, model, 5)
    b = sample_channel(cfg, model, trial_rng(5, 0))
    assert np.array_equal(a.h, b.h)


# ------------------------------------------------------------------ statistics

def test_fading_mean_square_is_unit_power():
    # 200*50 = 10^4 entries per draw, 10 draws = 10^5 samples
    model = CellModel()
    samples = []
    for trial in range(10):
        chan = sample_channel(BIG, model, trial_rng(1, trial))
        samples.append(np.abs(chan.fading()) ** 2)
    mean = float(np.mean(samples))
    assert abs(mean - 1.0) < 0.02


def test_real_imag_variance_matches():
    model = CellModel()
    re, im = [], []
    for trial in range(10):
        fading = sample_channel(BIG, model, trial_rng(2, trial)).fading()
        re.append(fading.real)
        im.append(fading.imag)
    var_re = float(np.var(np.concatenate([v.ravel() for v in re])))
    var_im = float(np.var(np.concatenate([v.ravel() for v in im])))
    assert var_re == pytest.approx(0.5, rel=0.05)
    assert var_im == pytest.approx(0.5, rel=0.05)
    assert var_re == pytest.approx(var_im, rel=0.05)


def test_radial_distribution_uniform_in_area():
    model = CellModel()
    cfg = SystemConfig(num_files=100, num_users=100, cache_size=1)
    dists = np.concatenate([
        sample_channel(cfg, model, trial_rng(3, i)).distances_km for i in range(100)
    ])  # 10^4 samples
    assert dists.min() >= model.min_distance_km
    assert dists.max() <= model.radius_km
    lo2, hi2 = model.min_distance_km ** 2, model.radius_km ** 2

    def cdf(r):
        return np.clip((np.asarray(r) ** 2 - lo2) / (hi2 - lo2), 0.0, 1.0)

    result = stats.kstest(dists, cdf)
    assert result.pvalue > 1e-3


def test_disjoint_streams_uncorrelated():
    model = CellModel()
    a = sample_channel(BIG, model, trial_rng(10, 0)).fading().real.ravel()
    b = sample_channel(BIG, model, trial_rng(11, 0)).fading().real.ravel()
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.05


# ------------------------------------------------------------- dump / load

def test_dump_load_round_trip_exact():
    cfg = SystemConfig(num_files=5, num_users=5, cache_size=1, num_antennas=4)
    model = CellModel()
    chan = sample_channel(cfg, model, trial_rng(7, 0))
    text = dumps_channel(chan)
    back = loads_channel(text, model)
    assert np.array_equal(back.distances_km, chan.distances_km)
    assert np.array_equal(back.h, chan.h)
    assert np.array_equal(back.gains, chan.gains)
    # and the module-level file helpers agree with the string helpers
    buf = io.StringIO()
    dump_channel(chan, buf)
    assert buf.getvalue() == text
    assert np.array_equal(load_channel(io.StringIO(text), model).h, chan.h)


def test_dump_load_via_path(tmp_path):
    cfg = SystemConfig(num_files=3, num_users=3, cache_size=1, num_antennas=2)
    chan = sample_channel(cfg, CellModel(), trial_rng(8, 0))
    path = str(tmp_path / "chan.txt")
    dump_channel(chan, path)
    back = load_channel(path)
    assert np.array_equal(back.h, chan.h)


def test_load_rejects_malformed_input():
    with pytest.raises(ValueError):
        loads_channel("not a header\n")
    with pytest.raises(ValueError):
        loads_channel("2 2\n0.5\n")  # distance count mismatch
    with pytest.raises(ValueError):
        loads_channel("1 2\n0.5\n(1+2j)\n")  # row entry count mismatch
