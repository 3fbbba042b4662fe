"""
Waveform container, filtering, resampling, pulse-peak detection,
inter-beat interval extraction and perfusion index.

All functions are pure: inputs are never modified and every result is a
fresh object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, find_peaks, sosfiltfilt

IBI_MIN_MS = 300.0
IBI_MAX_MS = 2000.0
IBI_JUMP_REL = 0.20
IBI_JUMP_ABS_MS = 200.0

BANDPASS_ORDER = 4


class SignalError(ValueError):
    """Raised for invalid waveform data or filter parameters."""


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled single-channel waveform.

    Parameters
    ----------
    fs : float
        Sampling rate in Hz.
    samples : array_like
        Sample values; must be finite.
    t0 : float
        Time of the first sample in seconds.
    label, units : str
        Channel name and free-text unit string.
    """

    fs: float
    samples: np.ndarray
    t0: float = 0.0
    label: str = "ppg"
    units: str = ""

    def __post_init__(self):
        if not self.fs > 0:
            raise SignalError(f"sampling rate must be > 0, got {self.fs}")
        x = np.array(self.samples, dtype=float).ravel()
        if x.size < 1:
            raise SignalError("time series needs at least one sample")
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise SignalError(f"non-finite sample at index {bad[0]}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) / self.fs

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.fs

    def with_samples(self, samples, fs=None) -> "TimeSeries":
        return TimeSeries(self.fs if fs is None else fs, samples, self.t0, self.label, self.units)


@dataclass(frozen=True)
class PeakList:
    indices: np.ndarray
    times: np.ndarray

    def __len__(self):
        return self.indices.size

    @classmethod
    def from_indices(cls, indices, ts: TimeSeries) -> "PeakList":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[-1] >= len(ts) or idx[0] < 0):
            raise SignalError("peak indices must be strictly increasing and inside the series")
        return cls(idx, ts.t0 + idx / ts.fs)


@dataclass(frozen=True)
class IbiSeries:
    """Inter-beat intervals in ms with the onset time (s) of each interval."""

    intervals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    onset_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rejected_count: int = 0

    def __len__(self):
        return self.intervals.size

    @property
    def duration_s(self) -> float:
        """Time covered by the retained intervals."""
        if self.intervals.size == 0:
            return 0.0
        return float(self.onset_times[-1] - self.onset_times[0] + self.intervals[-1] / 1000.0)

    @classmethod
    def from_intervals(cls, intervals_ms, t0=0.0) -> "IbiSeries":
        """Build a gap-free series from raw intervals (no artifact gating)."""
        iv = np.asarray(intervals_ms, dtype=float)
        onsets = t0 + np.concatenate(([0.0], np.cumsum(iv[:-1]) / 1000.0)) if iv.size else np.zeros(0)
        return cls(iv, onsets, 0)


def resample(ts: TimeSeries, target_fs: float) -> TimeSeries:
    """Linearly interpolate ``ts`` onto a uniform grid at ``target_fs``.

    The output grid starts at ``ts.t0`` and covers the input duration to
    within one output sample period. Equal rates return the samples
    unchanged.
    """
    if not target_fs > 0:
        raise SignalError(f"target_fs must be > 0, got {target_fs}")
    if target_fs == ts.fs:
        return ts.with_samples(ts.samples.copy())
    n_out = int(np.floor(ts.duration * target_fs + 1e-9)) + 1
    t_in = np.arange(len(ts)) / ts.fs
    t_out = np.arange(n_out) / target_fs
    return ts.with_samples(np.interp(t_out, t_in, ts.samples), fs=target_fs)


def bandpass(ts: TimeSeries, lo: float, hi: float, order: int = BANDPASS_ORDER) -> TimeSeries:
    """Zero-phase Butterworth band-pass (forward-backward second-order sections)."""
    nyq = ts.fs / 2.0
    if not 0 < lo < hi:
        raise SignalError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if hi >= nyq:
        raise SignalError(f"hi={hi} Hz must be below Nyquist ({nyq} Hz)")
    if len(ts) < 3 * order:
        raise SignalError(f"series of {len(ts)} samples is shorter than {3 * order} (3x filter order)")
    sos = butter(order, [lo, hi], btype="bandpass", fs=ts.fs, output="sos")
    padlen = min(3 * (2 * len(sos) + 1), len(ts) - 1)
    return ts.with_samples(sosfiltfilt(sos, ts.samples, padlen=padlen))


def detect_peaks(ts: TimeSeries, min_distance_s: float = 0.33, min_prominence: float = 0.0) -> PeakList:
    """Local maxima with prominence >= ``min_prominence`` at least
    ``min_distance_s`` apart; on conflict the taller peak is kept."""
    if not min_distance_s > 0:
        raise SignalError("min_distance_s must be > 0")
    distance = max(1, int(np.ceil(min_distance_s * ts.fs - 1e-9)))
    idx, _ = find_peaks(ts.samples, distance=distance, prominence=min_prominence)
    return PeakList.from_indices(idx, ts)


def peaks_to_ibi(peaks: PeakList) -> IbiSeries:
    """Successive peak intervals with a physiologic artifact gate.

    An interval is rejected when it lies outside [300, 2000] ms, or when it
    differs from the previous retained interval by more than 20 % *and*
    more than 200 ms.
    """
    if len(peaks) < 2:
        return IbiSeries()
    raw = np.diff(peaks.times) * 1000.0
    keep, onsets = [], []
    rejected = 0
    prev = None
    for i, iv in enumerate(raw):
        ok = IBI_MIN_MS <= iv <= IBI_MAX_MS
        if ok and prev is not None:
            jump = abs(iv - prev)
            ok = not (jump > IBI_JUMP_REL * prev and jump > IBI_JUMP_ABS_MS)
        if ok:
            keep.append(iv)
            onsets.append(peaks.times[i])
            prev = iv
        else:
            rejected += 1
    return IbiSeries(np.asarray(keep, dtype=float), np.asarray(onsets, dtype=float), rejected)


def beat_troughs(x: np.ndarray, peak_idx: np.ndarray) -> np.ndarray:
    """Index of the minimum between each pair of consecutive peaks."""
    return np.array([a + int(np.argmin(x[a:b + 1])) for a, b in zip(peak_idx[:-1], peak_idx[1:])],
                    dtype=np.int64)


def perfusion_index(ts: TimeSeries, peaks: PeakList) -> float:
    """AC/DC ratio: mean per-beat peak-to-trough amplitude over the series mean."""
    if len(peaks) < 2:
        raise SignalError("perfusion index needs at least 2 peaks")
    dc = float(np.mean(ts.samples))
    if dc <= 0:
        raise SignalError(f"PPG baseline must be positive, got DC={dc:.6g}")
    x = ts.samples
    troughs = beat_troughs(x, peaks.indices)
    ac = float(np.mean(x[peaks.indices[1:]] - x[troughs]))
    return max(ac, 0.0) / dc
