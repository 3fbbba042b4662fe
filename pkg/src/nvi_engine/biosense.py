"""
Parametric hydration-activated conductivity curve and the AC gain it implies.

Only the two anchors are fixed (dry and hydrated conductivity). The curve
between them is either straight in log10(sigma) ("log-linear", default) or
a normalised logistic in log10(sigma) ("log-logistic"). Both are stand-ins
for an unpublished simulated curve; ``g_max`` is a theoretical ceiling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

SHAPES = ("log-linear", "log-logistic")


class BiosenseDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ConductivityModel:
    rh_dry: float = 20.0
    rh_wet: float = 80.0
    sigma_dry: float = 1e-8
    sigma_wet: float = 1e-4
    shape: str = "log-linear"
    g_max: float = 3.0
    logistic_mid: float = 50.0
    logistic_width: float = 6.0

    def __post_init__(self):
        if not 0 < self.sigma_dry < self.sigma_wet:
            raise BiosenseDomainError("need 0 < sigma_dry < sigma_wet")
        if not self.rh_dry < self.rh_wet:
            raise BiosenseDomainError("need rh_dry < rh_wet")
        if self.shape not in SHAPES:
            raise BiosenseDomainError(f"shape must be one of {SHAPES}")
        if self.g_max < 1:
            raise BiosenseDomainError("g_max must be >= 1")

    def _fraction(self, rh: float) -> float:
        """Position between the anchors in log10(sigma), in [0, 1]."""
        if rh <= self.rh_dry:
            return 0.0
        if rh >= self.rh_wet:
            return 1.0
        if self.shape == "log-linear":
            return (rh - self.rh_dry) / (self.rh_wet - self.rh_dry)
        g = lambda v: 1.0 / (1.0 + math.exp(-(v - self.logistic_mid) / self.logistic_width))
        lo, hi = g(self.rh_dry), g(self.rh_wet)
        return (g(rh) - lo) / (hi - lo)

    def conductivity(self, rh_pct: float) -> float:
        """Conductivity in S/m; exactly the anchor values outside [rh_dry, rh_wet]."""
        _check_rh(rh_pct)
        frac = self._fraction(rh_pct)
        if frac == 0.0:
            return self.sigma_dry
        if frac == 1.0:
            return self.sigma_wet
        lo, hi = math.log10(self.sigma_dry), math.log10(self.sigma_wet)
        return 10.0 ** (lo + (hi - lo) * frac)

    def gain(self, rh_pct: float) -> float:
        _check_rh(rh_pct)
        frac = self._fraction(rh_pct)
        if frac == 0.0:
            return 1.0
        if frac == 1.0:
            return self.g_max
        lo, hi = math.log10(self.sigma_dry), math.log10(self.sigma_wet)
        return 1.0 + (self.g_max - 1.0) * (math.log10(self.conductivity(rh_pct)) - lo) / (hi - lo)

    def amplification(self, rh_pct: float, base_ac: float) -> float:
        if base_ac < 0:
            raise BiosenseDomainError("base_ac must be >= 0")
        return self.gain(rh_pct) * base_ac

    def curve(self, n: int = 101):
        rh = np.linspace(0.0, 100.0, n)
        return rh, np.array([self.conductivity(v) for v in rh]), np.array([self.gain(v) for v in rh])


def _check_rh(rh_pct: float):
    if not 0.0 <= rh_pct <= 100.0:
        raise BiosenseDomainError(f"relative humidity must be in [0, 100] %, got {rh_pct}")


_DEFAULT = ConductivityModel()


def conductivity(rh_pct: float, model: ConductivityModel = _DEFAULT) -> float:
    return model.conductivity(rh_pct)


def amplification(rh_pct: float, base_ac: float, model: ConductivityModel = _DEFAULT) -> float:
    return model.amplification(rh_pct, base_ac)


def write_curve_csv(path, model: ConductivityModel = _DEFAULT, n: int = 101):
    rh, sigma, gain = model.curve(n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rh_pct", "sigma_s_per_m", "gain"])
        for row in zip(rh, sigma, gain):
            w.writerow([repr(float(v)) for v in row])
