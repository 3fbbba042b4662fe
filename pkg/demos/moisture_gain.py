"""
Humidity-dependent sensor gain
==============================
"""

from nvi_engine import biosense

for rh in (10, 20, 35, 50, 65, 80, 95):
    print("RH %3d%%  sigma %.2e S/m  gain %.2f" % (rh, biosense.conductivity(rh), biosense.amplification(rh, 1.0)))

# a sharper transition around 50 % RH
m = biosense.ConductivityModel(shape="log-logistic")
print("log-logistic at 50%%: gain %.2f" % m.gain(50))
