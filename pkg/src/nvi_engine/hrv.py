"""Time- and frequency-domain HRV / PRV metrics from an :class:`IbiSeries`."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import welch

from .signal_core import IbiSeries, TimeSeries, bandpass, detect_peaks, peaks_to_ibi

LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.40)
TACHO_FS = 4.0
WELCH_SEGMENT_S = 120.0

MIN_TIME_DOMAIN_S = 30.0
MIN_SPECTRAL_S = 120.0
MIN_PRV_S = 60.0

PPG_BAND = (0.5, 12.0)
PEAK_MIN_DISTANCE_S = 0.33
PEAK_REL_PROMINENCE = 0.3


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class HrvMetrics:
    rmssd: float
    sdnn: float
    lf_power: float
    hf_power: float
    lf_hf: float
    n_intervals: int
    duration_s: float
    valid: bool
    spectral_valid: bool
    hf_zero: bool = False
    rejected_count: int = 0

    def to_dict(self) -> dict:
        """Serialize with unit-suffixed field names."""
        d = asdict(self)
        return {
            "rmssd_ms": d["rmssd"],
            "sdnn_ms": d["sdnn"],
            "lf_power_ms2": d["lf_power"],
            "hf_power_ms2": d["hf_power"],
            "lf_hf": None if np.isinf(d["lf_hf"]) else d["lf_hf"],
            "n_intervals": d["n_intervals"],
            "duration_s": d["duration_s"],
            "valid": d["valid"],
            "spectral_valid": d["spectral_valid"],
            "hf_zero": d["hf_zero"],
            "rejected_count": d["rejected_count"],
        }


def _intervals(ibi) -> np.ndarray:
    iv = ibi.intervals if isinstance(ibi, IbiSeries) else np.asarray(ibi, dtype=float)
    if iv.size < 2:
        raise InsufficientDataError(f"need at least 2 intervals, got {iv.size}")
    return iv


def rmssd(ibi) -> float:
    """Root mean square of successive interval differences (ms)."""
    d = np.diff(_intervals(ibi))
    return float(np.sqrt(np.mean(d * d)))


def sdnn(ibi) -> float:
    """Sample standard deviation (n - 1) of the intervals (ms)."""
    return float(np.std(_intervals(ibi), ddof=1))


def tachogram(ibi: IbiSeries, fs: float = TACHO_FS) -> np.ndarray:
    """Intervals linearly interpolated onto a uniform grid, mean removed."""
    iv = _intervals(ibi)
    t = ibi.onset_times + iv / 1000.0
    grid = np.arange(t[0], t[-1] + 1e-12, 1.0 / fs)
    y = np.interp(grid, t, iv)
    return y - y.mean()


def band_powers(y: np.ndarray, fs: float = TACHO_FS):
    """LF and HF power (ms^2) of a uniformly sampled tachogram (Welch, Hann, 120 s segments)."""
    y = np.asarray(y, dtype=float)
    nperseg = min(y.size, int(WELCH_SEGMENT_S * fs))
    f, pxx = welch(y, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
                   detrend=False, scaling="density")
    df = f[1] - f[0]
    lf = float(pxx[(f >= LF_BAND[0]) & (f < LF_BAND[1])].sum() * df)
    hf = float(pxx[(f >= HF_BAND[0]) & (f < HF_BAND[1])].sum() * df)
    return lf, hf


def lf_hf(ibi: IbiSeries):
    """LF power, HF power (ms^2) and their ratio.

    Returns
    -------
    lf_power, hf_power, ratio, hf_zero
        ``ratio`` is ``inf`` when HF power vanishes; ``hf_zero`` flags that case.
    """
    lf, hf = band_powers(tachogram(ibi))
    # float residue of a constant tachogram sits many decades below any real HF power
    if hf <= 1e-12:
        warnings.warn("HF power is zero; LF/HF ratio reported as +inf", RuntimeWarning, stacklevel=2)
        return lf, 0.0, float("inf"), True
    return lf, hf, lf / hf, False


def hrv_metrics(ibi: IbiSeries) -> HrvMetrics:
    """All metrics for one interval series; validity flags follow the
    30 s (time-domain) and 120 s (spectral) coverage rules."""
    dur = ibi.duration_s
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lf, hf, ratio, hf_zero = lf_hf(ibi)
    return HrvMetrics(
        rmssd=rmssd(ibi), sdnn=sdnn(ibi), lf_power=lf, hf_power=hf, lf_hf=ratio,
        n_intervals=len(ibi), duration_s=dur,
        valid=dur >= MIN_TIME_DOMAIN_S, spectral_valid=dur >= MIN_SPECTRAL_S,
        hf_zero=hf_zero, rejected_count=ibi.rejected_count,
    )


def ppg_to_ibi(ppg: TimeSeries) -> IbiSeries:
    """Band-pass, detect pulse peaks and gate the resulting intervals."""
    filt = bandpass(ppg, *PPG_BAND)
    x = filt.samples
    prominence = PEAK_REL_PROMINENCE * (np.percentile(x, 95) - np.percentile(x, 5))
    peaks = detect_peaks(filt, PEAK_MIN_DISTANCE_S, prominence)
    return peaks_to_ibi(peaks)


def prv_from_ppg(ppg: TimeSeries) -> HrvMetrics:
    """Pulse-rate variability from a raw PPG of at least 60 s."""
    if ppg.duration < MIN_PRV_S:
        raise InsufficientDataError(f"PPG covers {ppg.duration:.1f} s; at least {MIN_PRV_S:.0f} s required")
    return hrv_metrics(ppg_to_ibi(ppg))
