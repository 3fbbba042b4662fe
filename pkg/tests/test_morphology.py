import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvi_engine.morphology import (FEATURE_NAMES, FREQ_NAMES, MORPH_NAMES, NONLINEAR_NAMES, BeatSegment, FeatureError,
                                   FeatureVector, dfa_alpha, extract_features, freq_features, morph_features,
                                   mutual_info_rank, mutual_information, nonlinear_features, permutation_entropy,
                                   read_feature_csv, sample_entropy, segment_beats, write_feature_csv)
from nvi_engine.signal_core import PeakList, TimeSeries, detect_peaks
from nvi_engine.synth import beat_train, synth_ppg


def ppg_record(seed=3, dur=30.0, noise=0.01):
    beats = beat_train(dur, 900.0, 20.0, seed=seed)
    ts = TimeSeries(125, synth_ppg(beats, noise_sd=noise, seed=seed))
    return ts, detect_peaks(ts, 0.33, 0.5)


def tone(freqs, fs=125.0, dur=60.0):
    t = np.arange(int(fs * dur)) / fs
    return TimeSeries(fs, sum(np.sin(2 * np.pi * f * t) for f in freqs))


def beat(shape):
    return BeatSegment(np.asarray(shape, dtype=float), 100.0, int(np.argmax(shape)))


def test_registry_sizes():
    assert (len(MORPH_NAMES), len(FREQ_NAMES), len(NONLINEAR_NAMES)) == (14, 7, 3)
    assert len(set(FEATURE_NAMES)) == 24


# --- beats ------------------------------------------------------------------------

def test_segment_counts():
    fs = 100.0
    x = np.zeros(1100)
    for k in range(10):
        x[50 + 100 * k] = 1.0
    x = np.convolve(x, np.hanning(41), mode="same")
    ts = TimeSeries(fs, x)
    pk = detect_peaks(ts, 0.5)
    assert len(pk) == 10
    assert len(segment_beats(ts, pk)) == 8
    with pytest.raises(FeatureError):
        segment_beats(ts, PeakList.from_indices(pk.indices[:2], ts))


def test_symmetric_triangle():
    v = morph_features([beat(np.r_[np.arange(51), np.arange(49, -1, -1)])])
    assert v["morph_rise_time_s"] == v["morph_fall_time_s"] == 0.5
    assert v["morph_rise_fall_ratio"] == 1.0
    assert abs(v["morph_skewness"]) < 1e-12
    assert v["morph_augmentation_index"] == 0.0 and v["morph_notch_ratio"] == 0.0


def test_fast_rise_slow_fall():
    v = morph_features([beat(np.r_[np.linspace(0, 1, 11), np.linspace(1, 0, 61)[1:]])])
    assert v["morph_rise_time_s"] < v["morph_fall_time_s"]
    assert v["morph_skewness"] > 0


def test_dicrotic_wave_detected():
    t = np.arange(100) / 100.0
    y = np.exp(-0.5 * ((t - 0.2) / 0.06) ** 2) + 0.4 * np.exp(-0.5 * ((t - 0.55) / 0.07) ** 2)
    v = morph_features([beat(y)])
    assert 0.3 < v["morph_augmentation_index"] < 0.5
    assert 0 < v["morph_notch_ratio"] < v["morph_augmentation_index"]


def test_record_morphology_bounds():
    ts, pk = ppg_record()
    v = morph_features(segment_beats(ts, pk))
    assert 0.7 < v["morph_beat_duration_s"] < 1.1
    assert v["morph_beat_interval_cv"] < 0.1
    assert 0 < v["morph_perfusion_index"] < 0.1
    assert 0 < v["morph_augmentation_index"] < 1


# --- spectrum ----------------------------------------------------------------------

def test_pure_tone():
    v = freq_features(tone([1.2]))
    assert abs(v["freq_dominant_hz"] - 1.2) < 0.1
    assert v["freq_spectral_entropy"] < 0.2
    assert v["freq_power_ratio_cardiac"] > 0.99


def test_white_noise_entropy():
    x = np.random.default_rng(0).normal(size=7500)
    assert freq_features(TimeSeries(125, x))["freq_spectral_entropy"] > 0.9


def test_two_tone_centroid():
    v = freq_features(tone([1.0, 2.0]))
    assert abs(v["freq_spectral_centroid_hz"] - 1.5) < 0.05
    assert abs(v["freq_spectral_spread_hz"] - 0.5) < 0.05


def test_flat_spectrum_is_missing():
    v = freq_features(TimeSeries(125, np.full(500, 3.0)))
    assert set(v.missing()) == set(FREQ_NAMES)


# --- nonlinear ----------------------------------------------------------------------

def test_permutation_entropy_monotone_series():
    assert permutation_entropy(np.arange(100.0)) == 0.0


def test_permutation_entropy_noise_near_one():
    assert permutation_entropy(np.random.default_rng(1).normal(size=5000)) > 0.99


def test_sample_entropy_constant():
    assert sample_entropy(np.full(300, 2.0)) == 0.0


def test_sample_entropy_regular_below_noise():
    rng = np.random.default_rng(2)
    reg = np.sin(np.arange(1000) * 0.2)
    assert sample_entropy(reg) < sample_entropy(rng.normal(size=1000))


def test_dfa_white_noise():
    alphas = [dfa_alpha(np.random.default_rng(s).normal(size=4000)) for s in range(20)]
    assert abs(np.mean(alphas) - 0.5) < 0.1


def test_dfa_random_walk():
    assert abs(dfa_alpha(np.cumsum(np.random.default_rng(4).normal(size=4000))) - 1.5) < 0.15


def test_nonlinear_needs_samples():
    with pytest.raises(FeatureError):
        nonlinear_features(TimeSeries(125, np.arange(100.0)))


# --- full vector -----------------------------------------------------------------

@given(st.floats(0.1, 50.0))
def test_shape_features_amplitude_invariant(k):
    ts, pk = ppg_record(seed=5, dur=20.0, noise=0.0)
    a = extract_features(ts, pk)
    b = extract_features(ts.with_samples(ts.samples * k), pk)
    for name in FEATURE_NAMES:
        if name in ("morph_pulse_area", "morph_amplitude"):
            assert b[name] == pytest.approx(k * a[name], rel=1e-9)
        else:
            assert b[name] == pytest.approx(a[name], rel=1e-6, abs=1e-9), name


def test_extract_deterministic_and_meta():
    ts, pk = ppg_record()
    a = extract_features(ts, pk, meta={"age": 41})
    b = extract_features(ts, pk, meta={"age": 41})
    assert a == b and a["meta_age"] == 41.0
    assert set(FEATURE_NAMES) <= set(a)
    assert 0 <= a["nl_permutation_entropy"] <= 1 and 0 <= a["freq_spectral_entropy"] <= 1


def test_merge_rejects_duplicates():
    with pytest.raises(FeatureError):
        FeatureVector(a=1.0).merged({"a": 2.0})


# --- mutual information --------------------------------------------------------------

def test_mi_ranking():
    rng = np.random.default_rng(0)
    y = np.r_[np.zeros(50, int), np.ones(50, int)]
    X = np.c_[y.astype(float), rng.normal(size=100), rng.permutation(y).astype(float)]
    X[:, 2] = np.tile([0.0, 1.0], 50)  # balanced within each class: MI exactly 0
    ranked = mutual_info_rank(X, y, k=3, names=["copy", "noise", "alt"])
    assert ranked[0][0] == "copy" and ranked[0][1] == pytest.approx(math.log(2), abs=1e-12)
    assert ranked[-1][0] == "alt" and ranked[-1][1] == pytest.approx(0.0, abs=1e-12)
    assert [n for n, _ in mutual_info_rank(X, y, k=1, names=["copy", "noise", "alt"])] == ["copy"]


@given(st.lists(st.floats(-100, 100), min_size=10, max_size=60), st.randoms())
def test_mi_bounds(vals, rnd):
    y = np.array([i % 2 for i in range(len(vals))])
    rnd.shuffle(y)
    mi = mutual_information(np.array(vals), y)
    assert -1e-12 <= mi <= math.log(2) + 1e-12


def test_mi_rank_validation():
    X = np.zeros((6, 2))
    with pytest.raises(FeatureError):
        mutual_info_rank(X, [0, 0, 0, 0, 0, 0], 1)
    with pytest.raises(FeatureError):
        mutual_info_rank(X, [0, 1, 0, 1, 0, 1], 3)


# --- csv --------------------------------------------------------------------------

def test_feature_csv_round_trip(tmp_path):
    ts, pk = ppg_record()
    fv = extract_features(ts, pk, meta={"age": 50})
    fv2 = FeatureVector(fv)
    fv2["morph_notch_ratio"] = math.nan
    p = tmp_path / "f.csv"
    write_feature_csv(p, [("r2", fv2), ("r1", fv)])
    ids, names, M = read_feature_csv(p)
    assert ids == ["r1", "r2"] and names[:24] == list(FEATURE_NAMES) and names[-1] == "meta_age"
    assert np.array_equal(M[0], np.array([fv[n] for n in names]))
    assert math.isnan(M[1, names.index("morph_notch_ratio")])
