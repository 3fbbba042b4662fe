"""
Group comparison, agreement and ROC
===================================
"""

import numpy as np

from nvi_engine import stats

rng = np.random.default_rng(0)

# RMSSD in two groups
control = rng.normal(45, 10, 40)
case = rng.normal(35, 10, 30)
g = stats.mann_whitney(case, control)
print("U=%.1f p=%.4f (%s) d=%.2f %s" % (g.u_statistic, g.p_value, g.method, g.cohens_d,
                                        stats.significance_marker(g.p_value)))

# small samples use the exact distribution
print("exact p:", stats.mw_exact_p([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]))

# two devices measuring the same thing
truth = rng.normal(40, 12, 50)
device = truth + rng.normal(1.0, 2.0, 50)
a = stats.bland_altman(device, truth)
print("bias %.2f, limits [%.2f, %.2f], r=%.3f" % (a.bias, a.loa_low, a.loa_high, a.pearson_r))

# discrimination with a bootstrap interval and the Youden operating point
labels = np.r_[np.ones(60), np.zeros(60)]
scores = np.r_[rng.normal(1, 1, 60), rng.normal(0, 1, 60)]
rep = stats.evaluate(scores, labels, iters=1000, seed=0)
print("AUC %.3f [%.3f, %.3f]  sens %.2f spec %.2f" % (rep.auc, rep.auc_ci_low, rep.auc_ci_high, rep.sens, rep.spec))
