"""
From a raw pulse waveform to PRV and features
=============================================
"""

import numpy as np

from nvi_engine import hrv, morphology, signal_core, synth

# one minute of synthetic fingertip PPG at 125 Hz, about 67 beats
beats = synth.beat_train(60, mean_ibi_ms=900, jitter_ms=20, seed=7)
x = synth.synth_ppg(beats, fs=125.0, noise_sd=0.02, seed=7)
ppg = signal_core.TimeSeries(125.0, x)

# band-pass, then peaks, then inter-beat intervals
filt = signal_core.bandpass(ppg, 0.5, 8.0)
ibi = hrv.ppg_to_ibi(ppg)
m = hrv.hrv_metrics(ibi)
print("RMSSD %.1f ms (generator %.1f ms), SDNN %.1f ms" % (m.rmssd, beats.rmssd_ms, m.sdnn))
print("valid:", m.valid, " spectral (needs 120 s):", m.spectral_valid)

# the full registry: beat shape, spectrum and complexity
peaks = signal_core.detect_peaks(filt, min_prominence=0.3 * np.ptp(filt.samples))
fv = morphology.extract_features(ppg, peaks)
for k in ("morph_pulse_width_s", "morph_augmentation_index", "freq_spectral_entropy", "nl_sample_entropy", "nl_dfa_alpha"):
    if k in fv:
        print("%-20s %.4f" % (k, fv[k]))
print(len(fv), "features")
