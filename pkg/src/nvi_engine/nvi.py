"""
Composite neurovascular instability (NVI) score.

Four modality sub-scores in [0, 1] are fused with fixed base weights;
absent modalities hand their weight to the present ones in proportion to
the present weights. The result is scaled to [0, 100] and mapped to a
three-tier risk level.

The scoring path (:func:`fused_score`) works on plain floats with ``nan``
marking an absent modality. It keeps no state and builds no containers,
so a warmed-up loop over it does not grow the heap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

MODALITIES = ("spo2", "hrv", "perfusion", "phase")
BASE_WEIGHTS = (0.30, 0.25, 0.20, 0.25)

SPO2_FLOOR = 85.0
SPO2_SPAN = 15.0
RMSSD_CENTER = 40.0
RMSSD_SCALE = 25.0
PI_FULL = 0.20

NORMAL_MIN = 80.0
ALERT1_MIN = 60.0

_W_SPO2, _W_HRV, _W_PERF, _W_PHASE = BASE_WEIGHTS


class NviDomainError(ValueError):
    """Input outside the domain of a scoring function."""


class NoDataError(ValueError):
    """No modality available to score."""


class Tier(str, Enum):
    NORMAL = "Normal"
    ALERT1 = "Alert1"
    ALERT2 = "Alert2"


def _clip01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def score_spo2(spo2_pct: float) -> float:
    if not 0.0 <= spo2_pct <= 100.0:
        raise NviDomainError(f"SpO2 must be in [0, 100] %, got {spo2_pct}")
    return _clip01((spo2_pct - SPO2_FLOOR) / SPO2_SPAN)


def score_hrv(rmssd_ms: float) -> float:
    if not rmssd_ms >= 0.0:
        raise NviDomainError(f"RMSSD must be >= 0 ms, got {rmssd_ms}")
    z = (rmssd_ms - RMSSD_CENTER) / RMSSD_SCALE
    return 1.0 / (1.0 + math.exp(-z))


def score_perf(pi: float) -> float:
    if not pi >= 0.0:
        raise NviDomainError(f"perfusion index must be >= 0, got {pi}")
    return _clip01(pi / PI_FULL)


def phase_difference_deg(phase_left_deg: float, phase_right_deg: float) -> float:
    """Absolute angular difference wrapped into [0, 180] degrees."""
    d = math.fmod(abs(phase_left_deg - phase_right_deg), 360.0)
    return 360.0 - d if d > 180.0 else d


def score_phase(phase_left_deg, phase_right_deg) -> float:
    if phase_left_deg is None or phase_right_deg is None:
        raise NviDomainError("phase inputs must be given as a left/right pair")
    if not (math.isfinite(phase_left_deg) and math.isfinite(phase_right_deg)):
        raise NviDomainError("phase inputs must be finite")
    return 1.0 - phase_difference_deg(phase_left_deg, phase_right_deg) / 180.0


def tier(score: float) -> Tier:
    if not 0.0 <= score <= 100.0:
        raise NviDomainError(f"NVI score must be in [0, 100], got {score}")
    if score >= NORMAL_MIN:
        return Tier.NORMAL
    if score >= ALERT1_MIN:
        return Tier.ALERT1
    return Tier.ALERT2


def fuse(s_spo2: float, s_hrv: float, s_perf: float, s_phase: float) -> float:
    """Weighted sum of sub-scores (``nan`` = absent), scaled to [0, 100].

    Returns ``nan`` when every sub-score is absent.
    """
    num = 0.0
    den = 0.0
    if s_spo2 == s_spo2:
        num += _W_SPO2 * s_spo2
        den += _W_SPO2
    if s_hrv == s_hrv:
        num += _W_HRV * s_hrv
        den += _W_HRV
    if s_perf == s_perf:
        num += _W_PERF * s_perf
        den += _W_PERF
    if s_phase == s_phase:
        num += _W_PHASE * s_phase
        den += _W_PHASE
    if den == 0.0:
        return math.nan
    score = 100.0 * (num / den)
    return 0.0 if score < 0.0 else (100.0 if score > 100.0 else score)


def fused_score(spo2_pct: float, rmssd_ms: float, pi: float,
                phase_left_deg: float, phase_right_deg: float) -> float:
    """Composite score from raw modality values; ``nan`` marks an absent input.

    This is the allocation-free scoring path used by the latency bench and
    by :func:`composite`. Inputs are assumed validated.
    """
    s1 = math.nan
    if spo2_pct == spo2_pct:
        s1 = (spo2_pct - SPO2_FLOOR) / SPO2_SPAN
        s1 = 0.0 if s1 < 0.0 else (1.0 if s1 > 1.0 else s1)
    s2 = math.nan
    if rmssd_ms == rmssd_ms:
        s2 = 1.0 / (1.0 + math.exp(-(rmssd_ms - RMSSD_CENTER) / RMSSD_SCALE))
    s3 = math.nan
    if pi == pi:
        s3 = pi / PI_FULL
        s3 = 0.0 if s3 < 0.0 else (1.0 if s3 > 1.0 else s3)
    s4 = math.nan
    if phase_left_deg == phase_left_deg and phase_right_deg == phase_right_deg:
        d = math.fmod(abs(phase_left_deg - phase_right_deg), 360.0)
        if d > 180.0:
            d = 360.0 - d
        s4 = 1.0 - d / 180.0
    return fuse(s1, s2, s3, s4)


@dataclass(frozen=True)
class ModalityInputs:
    spo2_pct: float | None = None
    rmssd_ms: float | None = None
    pi: float | None = None
    phase_left_deg: float | None = None
    phase_right_deg: float | None = None

    def __post_init__(self):
        for name in ("spo2_pct", "rmssd_ms", "pi", "phase_left_deg", "phase_right_deg"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise NviDomainError(f"{name} must be finite when present, got {v}")
        if self.spo2_pct is not None and not 0.0 <= self.spo2_pct <= 100.0:
            raise NviDomainError(f"SpO2 must be in [0, 100] %, got {self.spo2_pct}")
        if self.rmssd_ms is not None and self.rmssd_ms < 0.0:
            raise NviDomainError(f"RMSSD must be >= 0 ms, got {self.rmssd_ms}")
        if self.pi is not None and self.pi < 0.0:
            raise NviDomainError(f"perfusion index must be >= 0, got {self.pi}")
        if (self.phase_left_deg is None) != (self.phase_right_deg is None):
            raise NviDomainError("phase inputs must be given as a left/right pair")

    def as_floats(self):
        """Values in :func:`fused_score` argument order, ``nan`` for absent."""
        return tuple(math.nan if v is None else float(v) for v in
                     (self.spo2_pct, self.rmssd_ms, self.pi, self.phase_left_deg, self.phase_right_deg))


@dataclass(frozen=True)
class NviResult:
    score: float
    tier: Tier
    modality_scores: tuple
    effective_weights: tuple

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "tier": self.tier.value,
            "modality_scores": dict(zip(MODALITIES, self.modality_scores)),
            "effective_weights": dict(zip(MODALITIES, self.effective_weights)),
        }


def effective_weights(present) -> tuple:
    """Base weights renormalised over the present modalities (0 for absent)."""
    total = sum(w for w, p in zip(BASE_WEIGHTS, present) if p)
    if total == 0:
        raise NoDataError("no modality present")
    return tuple(w / total if p else 0.0 for w, p in zip(BASE_WEIGHTS, present))


def modality_scores(inputs: ModalityInputs) -> tuple:
    return (
        None if inputs.spo2_pct is None else score_spo2(inputs.spo2_pct),
        None if inputs.rmssd_ms is None else score_hrv(inputs.rmssd_ms),
        None if inputs.pi is None else score_perf(inputs.pi),
        None if inputs.phase_left_deg is None else score_phase(inputs.phase_left_deg, inputs.phase_right_deg),
    )


def composite(inputs: ModalityInputs) -> NviResult:
    """Score one set of modality measurements.

    Raises
    ------
    NoDataError
        If every modality is absent.
    """
    subs = modality_scores(inputs)
    weights = effective_weights([s is not None for s in subs])
    score = fuse(*(math.nan if s is None else s for s in subs))
    return NviResult(score, tier(score), subs, weights)


def composite_from_scores(s_spo2=None, s_hrv=None, s_perf=None, s_phase=None) -> NviResult:
    """Composite from sub-scores already in [0, 1] (``None`` = absent)."""
    subs = (s_spo2, s_hrv, s_perf, s_phase)
    for name, s in zip(MODALITIES, subs):
        if s is not None and not 0.0 <= s <= 1.0:
            raise NviDomainError(f"{name} sub-score must be in [0, 1], got {s}")
    weights = effective_weights([s is not None for s in subs])
    score = fuse(*(math.nan if s is None else s for s in subs))
    return NviResult(score, tier(score), subs, weights)


def fused_score_array(spo2_pct, rmssd_ms, pi, phase_delta_deg):
    """Vectorised :func:`fused_score` for fully present channels.

    ``phase_delta_deg`` is the left-right phase difference. Agrees with the
    scalar path to floating-point rounding.
    """
    s1 = np.clip((np.asarray(spo2_pct, dtype=float) - SPO2_FLOOR) / SPO2_SPAN, 0.0, 1.0)
    s2 = 1.0 / (1.0 + np.exp(-(np.asarray(rmssd_ms, dtype=float) - RMSSD_CENTER) / RMSSD_SCALE))
    s3 = np.clip(np.asarray(pi, dtype=float) / PI_FULL, 0.0, 1.0)
    d = np.fmod(np.abs(np.asarray(phase_delta_deg, dtype=float)), 360.0)
    d = np.where(d > 180.0, 360.0 - d, d)
    s4 = 1.0 - d / 180.0
    num = _W_SPO2 * s1 + _W_HRV * s2 + _W_PERF * s3 + _W_PHASE * s4
    den = _W_SPO2 + _W_HRV + _W_PERF + _W_PHASE
    return np.clip(100.0 * (num / den), 0.0, 100.0)
