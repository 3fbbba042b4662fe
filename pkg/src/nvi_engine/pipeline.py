"""Raw PPG in, PRV metrics + perfusion index + feature registry out."""

from __future__ import annotations

import math

import numpy as np

from .hrv import (MIN_TIME_DOMAIN_S, PEAK_MIN_DISTANCE_S, PEAK_REL_PROMINENCE, PPG_BAND,
                  InsufficientDataError, hrv_metrics)
from .morphology import FeatureError, extract_features
from .signal_core import SignalError, TimeSeries, bandpass, detect_peaks, peaks_to_ibi, perfusion_index, resample

PIPELINE_FS = 125.0


def ppg_peaks(ppg: TimeSeries):
    """Pulse peaks located on the band-passed signal (indices valid for ``ppg``)."""
    filt = bandpass(ppg, *PPG_BAND)
    x = filt.samples
    prominence = PEAK_REL_PROMINENCE * (np.percentile(x, 95) - np.percentile(x, 5))
    return detect_peaks(filt, PEAK_MIN_DISTANCE_S, prominence)


def _nan_hrv(duration_s: float, reason: str) -> dict:
    keys = ("rmssd_ms", "sdnn_ms", "lf_power_ms2", "hf_power_ms2", "lf_hf")
    d = {k: None for k in keys}
    d.update(n_intervals=0, duration_s=duration_s, valid=False, spectral_valid=False,
             hf_zero=False, rejected_count=0, reason=reason)
    return d


def analyze_ppg(ppg: TimeSeries, meta=None) -> dict:
    """Run band-pass, peak detection, IBI gating, PRV, PI and feature extraction.

    The recording is resampled to 125 Hz first. Short or feature-poor
    recordings still return a document; the ``valid`` flags and ``None``
    values say what could not be computed.
    """
    if ppg.fs != PIPELINE_FS:
        ppg = resample(ppg, PIPELINE_FS)
    peaks = ppg_peaks(ppg)
    ibi = peaks_to_ibi(peaks)
    try:
        hrv = hrv_metrics(ibi).to_dict()
        if ppg.duration < MIN_TIME_DOMAIN_S:
            hrv["valid"] = False
    except InsufficientDataError as e:
        hrv = _nan_hrv(ibi.duration_s, str(e))
    try:
        pi = perfusion_index(ppg, peaks)
    except SignalError:
        pi = math.nan
    try:
        features = dict(extract_features(ppg, peaks, meta))
    except FeatureError as e:
        features = {"error": str(e)}
    return {
        "fs": ppg.fs,
        "duration_s": ppg.duration,
        "n_peaks": len(peaks),
        "hrv": hrv,
        "perfusion_index": pi,
        "features": features,
    }
