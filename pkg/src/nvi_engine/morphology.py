"""
Per-recording PPG feature vector and mutual-information ranking.

The registry holds 14 morphology, 7 frequency-domain and 3 nonlinear
features (24 signal features). Together with pass-through ``meta_*``
covariates this makes up the feature matrix written by
:func:`write_feature_csv`.

Only part of the morphology set is named in the literature this package
follows; ``morph_pulse_width_s``, ``morph_amplitude``,
``morph_rise_fall_ratio``, ``morph_area_ratio``, ``morph_beat_interval_cv``
and ``morph_beat_duration_s`` complete the registry and are a
reconstruction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks, welch
from scipy.spatial import cKDTree

from .signal_core import PeakList, TimeSeries, beat_troughs

MORPH_NAMES = (
    "morph_perfusion_index",
    "morph_rise_time_s",
    "morph_fall_time_s",
    "morph_pulse_width_s",
    "morph_pulse_area",
    "morph_augmentation_index",
    "morph_notch_ratio",
    "morph_skewness",
    "morph_kurtosis",
    "morph_amplitude",
    "morph_rise_fall_ratio",
    "morph_area_ratio",
    "morph_beat_interval_cv",
    "morph_beat_duration_s",
)
FREQ_NAMES = (
    "freq_dominant_hz",
    "freq_spectral_entropy",
    "freq_spectral_centroid_hz",
    "freq_spectral_spread_hz",
    "freq_spectral_rolloff_hz",
    "freq_power_ratio_cardiac",
    "freq_power_ratio_high",
)
NONLINEAR_NAMES = (
    "nl_sample_entropy",
    "nl_dfa_alpha",
    "nl_permutation_entropy",
)
FEATURE_NAMES = MORPH_NAMES + FREQ_NAMES + NONLINEAR_NAMES

CARDIAC_BAND = (0.5, 3.0)
HIGH_BAND = (3.0, 12.0)
ROLLOFF_FRACTION = 0.85
WELCH_SEGMENT_S = 16.0
SECONDARY_PEAK_REL_PROMINENCE = 0.01


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class BeatSegment:
    samples: np.ndarray
    fs: float
    peak_index: int

    @property
    def duration_s(self) -> float:
        return (self.samples.size - 1) / self.fs


class FeatureVector(dict):
    """Mapping of feature name to value; ``nan`` marks a missing value."""

    def missing(self):
        return [k for k, v in self.items() if not np.isfinite(v)]

    def merged(self, *others) -> "FeatureVector":
        out = FeatureVector(self)
        for o in others:
            dup = set(out) & set(o)
            if dup:
                raise FeatureError(f"duplicate feature names: {sorted(dup)}")
            out.update(o)
        return out


# --------------------------------------------------------------------------
# beats and morphology
# --------------------------------------------------------------------------

def segment_beats(ppg: TimeSeries, peaks: PeakList) -> list:
    """Trough-to-trough beats; partial beats at either end are dropped."""
    if len(peaks) < 3:
        raise FeatureError(f"beat segmentation needs at least 3 peaks, got {len(peaks)}")
    x = ppg.samples
    troughs = beat_troughs(x, peaks.indices)
    beats = []
    for a, b in zip(troughs[:-1], troughs[1:]):
        seg = x[a:b + 1].copy()
        beats.append(BeatSegment(seg, ppg.fs, int(np.argmax(seg))))
    return beats


def _time_moments(y: np.ndarray):
    """Skewness and excess kurtosis of the beat shape read as a density over time."""
    w = y - y.min()
    total = w.sum()
    if total <= 0:
        return math.nan, math.nan
    t = np.arange(y.size, dtype=float)
    p = w / total
    mu = p @ t
    var = p @ (t - mu) ** 2
    if var <= 0:
        return math.nan, math.nan
    skew = p @ (t - mu) ** 3 / var ** 1.5
    kurt = p @ (t - mu) ** 4 / var ** 2 - 3.0
    return float(skew), float(kurt)


def _beat_values(beat: BeatSegment) -> dict:
    y = beat.samples - beat.samples.min()
    fs = beat.fs
    pk = beat.peak_index
    amp = float(y[pk])
    rise = pk / fs
    fall = (y.size - 1 - pk) / fs
    area = float(np.trapezoid(y, dx=1.0 / fs))
    area_sys = float(np.trapezoid(y[:pk + 1], dx=1.0 / fs))
    area_dia = area - area_sys

    above = np.flatnonzero(y >= 0.5 * amp) if amp > 0 else np.array([pk])
    width = (above[-1] - above[0]) / fs

    aug = notch = 0.0
    if amp > 0 and y.size - pk > 3:
        tail = y[pk:]
        sec, _ = find_peaks(tail, prominence=SECONDARY_PEAK_REL_PROMINENCE * amp)
        if sec.size:
            s = sec[np.argmax(tail[sec])]
            aug = float(tail[s] / amp)
            notch = float(tail[:s + 1].min() / amp)

    skew, kurt = _time_moments(beat.samples)
    mean_level = float(beat.samples.mean())
    return {
        "morph_perfusion_index": amp / mean_level if mean_level > 0 else math.nan,
        "morph_rise_time_s": rise,
        "morph_fall_time_s": fall,
        "morph_pulse_width_s": width,
        "morph_pulse_area": area,
        "morph_augmentation_index": aug,
        "morph_notch_ratio": notch,
        "morph_skewness": skew,
        "morph_kurtosis": kurt,
        "morph_amplitude": amp,
        "morph_rise_fall_ratio": rise / fall if fall > 0 else math.nan,
        "morph_area_ratio": area_sys / area_dia if area_dia > 0 else math.nan,
        "morph_beat_duration_s": beat.duration_s,
    }


def morph_features(beats) -> FeatureVector:
    """Median of the per-beat morphology values over all beats."""
    if len(beats) < 1:
        raise FeatureError("need at least one beat")
    rows = [_beat_values(b) for b in beats]
    out = FeatureVector()
    for name in MORPH_NAMES:
        if name == "morph_beat_interval_cv":
            d = np.array([b.duration_s for b in beats])
            out[name] = float(d.std(ddof=0) / d.mean()) if d.mean() > 0 else math.nan
            continue
        vals = np.array([r[name] for r in rows], dtype=float)
        vals = vals[np.isfinite(vals)]
        out[name] = float(np.median(vals)) if vals.size else math.nan
    return out


# --------------------------------------------------------------------------
# frequency domain
# --------------------------------------------------------------------------

def freq_features(ppg: TimeSeries) -> FeatureVector:
    """Spectral descriptors of the mean-removed signal (Welch PSD)."""
    if ppg.duration < 2.0:
        raise FeatureError(f"need at least 2 s of signal, got {ppg.duration:.2f} s")
    x = ppg.samples - ppg.samples.mean()
    nperseg = min(x.size, int(WELCH_SEGMENT_S * ppg.fs))
    f, pxx = welch(x, fs=ppg.fs, window="hann", nperseg=nperseg, detrend=False)
    total = pxx.sum()
    out = FeatureVector.fromkeys(FREQ_NAMES, math.nan)
    if not total > 0 or not np.isfinite(total):
        return out
    p = pxx / total
    nz = p[p > 0]
    centroid = float(p @ f)
    cum = np.cumsum(p)
    out.update({
        "freq_dominant_hz": float(f[np.argmax(pxx)]),
        "freq_spectral_entropy": float(-(nz * np.log(nz)).sum() / np.log(p.size)),
        "freq_spectral_centroid_hz": centroid,
        "freq_spectral_spread_hz": float(np.sqrt(p @ (f - centroid) ** 2)),
        "freq_spectral_rolloff_hz": float(f[np.searchsorted(cum, ROLLOFF_FRACTION)]),
        "freq_power_ratio_cardiac": float(p[(f >= CARDIAC_BAND[0]) & (f < CARDIAC_BAND[1])].sum()),
        "freq_power_ratio_high": float(p[(f >= HIGH_BAND[0]) & (f < HIGH_BAND[1])].sum()),
    })
    return out


# --------------------------------------------------------------------------
# nonlinear
# --------------------------------------------------------------------------

def _count_matches(emb: np.ndarray, r: float) -> int:
    """Number of template pairs i < j whose Chebyshev distance is <= r."""
    tree = cKDTree(emb)
    return (int(tree.count_neighbors(tree, r, p=np.inf)) - emb.shape[0]) // 2


def sample_entropy(x, m: int = 2, r_factor: float = 0.2) -> float:
    """SampEn(m, r) with r = r_factor * SD; a constant series gives 0."""
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0:
        return 0.0
    r = r_factor * sd
    n = x.size
    # both template lengths use the same n - m starting points
    emb_m = np.lib.stride_tricks.sliding_window_view(x, m)[: n - m]
    emb_m1 = np.lib.stride_tricks.sliding_window_view(x, m + 1)
    b = _count_matches(emb_m, r)
    a = _count_matches(emb_m1, r)
    if a == 0 or b == 0:
        return math.nan
    return float(-np.log(a / b))


def dfa_alpha(x, min_box: int = 4, n_boxes: int = 20) -> float:
    """Detrended fluctuation analysis scaling exponent.

    Box sizes are log-spaced between ``min_box`` and N/4; each box of the
    integrated profile is detrended linearly and alpha is the slope of
    log F(n) against log n.
    """
    x = np.asarray(x, dtype=float)
    if x.std() == 0:
        return math.nan
    n = x.size
    y = np.cumsum(x - x.mean())
    sizes = np.unique(np.floor(np.logspace(np.log10(min_box), np.log10(n // 4), n_boxes)).astype(int))
    sizes = sizes[sizes >= min_box]
    fluct = []
    for s in sizes:
        k = n // s
        seg = y[: k * s].reshape(k, s)
        t = np.arange(s, dtype=float)
        t -= t.mean()
        # least-squares line per row, closed form
        slope = (seg @ t) / (t @ t)
        resid = seg - seg.mean(axis=1, keepdims=True) - slope[:, None] * t[None, :]
        fluct.append(np.sqrt(np.mean(resid ** 2)))
    fluct = np.asarray(fluct)
    ok = fluct > 0
    return float(np.polyfit(np.log(sizes[ok]), np.log(fluct[ok]), 1)[0])


def permutation_entropy(x, order: int = 3, lag: int = 1) -> float:
    """Normalized permutation entropy in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if x.std() == 0:
        return math.nan
    emb = np.lib.stride_tricks.sliding_window_view(x, (order - 1) * lag + 1)[:, ::lag]
    # stable argsort makes ties deterministic
    patterns = np.argsort(emb, axis=1, kind="stable")
    codes = patterns @ (order ** np.arange(order))
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum() / math.log(math.factorial(order)))


def nonlinear_features(ppg: TimeSeries) -> FeatureVector:
    x = ppg.samples
    if x.size < 200:
        raise FeatureError(f"need at least 200 samples, got {x.size}")
    return FeatureVector({
        "nl_sample_entropy": sample_entropy(x),
        "nl_dfa_alpha": dfa_alpha(x),
        "nl_permutation_entropy": permutation_entropy(x),
    })


def extract_features(ppg: TimeSeries, peaks: PeakList, meta=None) -> FeatureVector:
    """Full registry for one recording plus optional ``meta_*`` pass-through values."""
    fv = morph_features(segment_beats(ppg, peaks))
    fv = fv.merged(freq_features(ppg), nonlinear_features(ppg))
    if meta:
        fv = fv.merged({k if k.startswith("meta_") else f"meta_{k}": float(v) for k, v in meta.items()})
    return fv


# --------------------------------------------------------------------------
# mutual information
# --------------------------------------------------------------------------

def equal_frequency_codes(x: np.ndarray, bins: int) -> np.ndarray:
    """Quantile bin codes; ties share a bin and NaN gets its own code (-1)."""
    x = np.asarray(x, dtype=float)
    codes = np.full(x.size, -1, dtype=np.int64)
    ok = np.isfinite(x)
    if ok.any():
        edges = np.unique(np.quantile(x[ok], np.linspace(0, 1, bins + 1)[1:-1]))
        codes[ok] = np.searchsorted(edges, x[ok], side="right")
    return codes


def mutual_information(x, labels, bins: int | None = None) -> float:
    """Plug-in MI (nats) between a binned feature and a binary label."""
    y = np.asarray(labels).astype(np.int64)
    n = y.size
    if bins is None:
        bins = min(10, math.ceil(math.sqrt(n)))
    cx = equal_frequency_codes(x, bins)
    _, cx = np.unique(cx, return_inverse=True)
    joint = np.zeros((cx.max() + 1, 2))
    np.add.at(joint, (cx, y), 1.0)
    joint /= n
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / (px @ py)[nz])).sum())


def mutual_info_rank(features, labels, k: int, names=None):
    """Top-``k`` feature names by MI with the label.

    Ties in MI are broken by name, so the ranking is deterministic.

    Returns
    -------
    list of (name, mi) tuples, highest MI first.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise FeatureError("features must be an (n_samples, n_features) matrix matching labels")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size != 2 or not set(classes.tolist()) <= {0, 1}:
        raise FeatureError("labels must be binary 0/1 with both classes present")
    if counts.min() < 2:
        raise FeatureError("need at least 2 samples per class")
    if not 1 <= k <= X.shape[1]:
        raise FeatureError(f"k={k} out of range 1..{X.shape[1]}")
    names = list(names) if names is not None else [f"f{i}" for i in range(X.shape[1])]
    mi = [(n, mutual_information(X[:, j], y)) for j, n in enumerate(names)]
    # round away float noise so equal-MI features fall back to name order
    mi.sort(key=lambda t: (-round(t[1], 12), t[0]))
    return mi[:k]


# --------------------------------------------------------------------------
# feature matrix CSV
# --------------------------------------------------------------------------

def write_feature_csv(path, rows, names=None):
    """``rows`` is an iterable of (record_id, FeatureVector); missing values are empty cells."""
    rows = sorted(rows, key=lambda r: str(r[0]))
    if names is None:
        extra = sorted({k for _, fv in rows for k in fv if k not in FEATURE_NAMES})
        names = list(FEATURE_NAMES) + extra
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", *names])
        for rid, fv in rows:
            vals = [fv.get(n, math.nan) for n in names]
            w.writerow([rid, *("" if not np.isfinite(v) else repr(float(v)) for v in vals)])


def read_feature_csv(path):
    """Inverse of :func:`write_feature_csv`: returns (record_ids, names, matrix)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        ids, data = [], []
        for row in r:
            ids.append(row[0])
            data.append([float(v) if v != "" else math.nan for v in row[1:]])
    return ids, header[1:], np.array(data, dtype=float).reshape(len(ids), len(header) - 1)
