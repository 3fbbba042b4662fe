"""
Perturbation sweep and recovery
===============================

A perturbation starts 30 s into a 60 s window. The lowest 1 Hz score after
onset falls roughly linearly with intensity.
"""

from nvi_engine import synth

print("baseline %.2f" % synth.baseline_score())
for r in synth.mc_perturbation(runs_per_intensity=20, seed=0):
    print("intensity %.2f  min score %.1f +- %.1f" % (r.intensity, r.mean_min_nvi, r.sd_min_nvi))

# recovery back toward baseline with a 60 s time constant
t, y = synth.recovery_curve(45.0, 80.0, tau_s=60.0)
for s in (0, 60, 120, 300):
    print("t=%3d s  %.1f" % (s, y[s]))
