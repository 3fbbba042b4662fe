"""
Scoring a handful of readings
=============================

Four modalities feed the composite: SpO2, RMSSD, perfusion index and the
left/right phase difference. Missing ones drop out and the rest are
reweighted.
"""

from nvi_engine.nvi import ModalityInputs, composite, effective_weights

# a resting reading
r = composite(ModalityInputs(spo2_pct=98, rmssd_ms=50, pi=0.15, phase_left_deg=0, phase_right_deg=5))
print("resting:", round(r.score, 2), r.tier.value)

# same subject, desaturating with a large phase lag
r = composite(ModalityInputs(spo2_pct=90, rmssd_ms=20, pi=0.05, phase_left_deg=0, phase_right_deg=60))
print("perturbed:", round(r.score, 2), r.tier.value)

# no phase channel: three weights renormalised to sum to one
r = composite(ModalityInputs(spo2_pct=95, rmssd_ms=40, pi=0.10))
print("degraded:", round(r.score, 2), r.tier.value)
print("weights:", [round(w, 3) for w in effective_weights([True, True, True, False])])
