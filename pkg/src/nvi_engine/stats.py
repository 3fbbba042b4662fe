"""
Validation statistics: group tests, effect sizes, agreement analysis,
ROC machinery with bootstrap confidence intervals, Youden thresholds and
stratified cross-validation folds.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

EXACT_MAX_N = 12
BOOTSTRAP_ITERS = 1000


class StatsError(ValueError):
    pass


def _as_float(a, name="values") -> np.ndarray:
    x = np.asarray(a, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise StatsError(f"{name} contain non-finite entries")
    return x


def _binary_labels(labels) -> np.ndarray:
    y = np.asarray(labels).ravel()
    if not set(np.unique(y).tolist()) <= {0, 1, True, False}:
        raise StatsError("labels must be binary 0/1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise StatsError("both classes must be present")
    return y


# --------------------------------------------------------------------------
# group comparison
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupComparison:
    u_statistic: float
    p_value: float
    method: str
    cohens_d: float
    n1: int
    n2: int
    mean1: float
    mean2: float
    sd1: float
    sd2: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def cohens_d(a, b) -> float:
    """Mean difference (a - b) over the pooled sample SD."""
    a, b = _as_float(a), _as_float(b)
    dof = a.size + b.size - 2
    if dof <= 0:
        return math.nan
    ss = (a.size - 1) * (a.var(ddof=1) if a.size > 1 else 0.0) + (b.size - 1) * (b.var(ddof=1) if b.size > 1 else 0.0)
    pooled = math.sqrt(ss / dof)
    return (a.mean() - b.mean()) / pooled if pooled > 0 else math.nan


def _u_from_ranks(ranks: np.ndarray, n1: int) -> float:
    return float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)


def mw_exact_p(a, b) -> float:
    """Two-sided permutation p-value of U by full enumeration of labelings.

    Midranks make the enumeration exact under ties as well.
    """
    a, b = _as_float(a), _as_float(b)
    n1, n = a.size, a.size + b.size
    ranks = sps.rankdata(np.concatenate([a, b]))
    mu = n1 * (n - n1) / 2.0
    dev_obs = abs(_u_from_ranks(ranks, n1) - mu)
    combos = np.array(list(itertools.combinations(range(n), n1)), dtype=np.int64)
    u = ranks[combos].sum(axis=1) - n1 * (n1 + 1) / 2.0
    return float(np.mean(np.abs(u - mu) >= dev_obs - 1e-9))


def mw_normal_p(a, b) -> float:
    """Two-sided normal approximation with tie and continuity corrections."""
    a, b = _as_float(a), _as_float(b)
    n1, n2 = a.size, b.size
    n = n1 + n2
    x = np.concatenate([a, b])
    ranks = sps.rankdata(x)
    u = _u_from_ranks(ranks, n1)
    mu = n1 * n2 / 2.0
    _, t = np.unique(x, return_counts=True)
    tie = float((t ** 3 - t).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return 1.0
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    return float(min(1.0, 2.0 * sps.norm.sf(z)))


def mann_whitney(a, b) -> GroupComparison:
    """Two-sided Mann-Whitney U test of ``a`` against ``b``.

    Uses exact enumeration when ``len(a) + len(b) <= 12``, otherwise the
    normal approximation. ``u_statistic`` is U for ``a``.
    """
    a, b = _as_float(a, "a"), _as_float(b, "b")
    if a.size < 1 or b.size < 1:
        raise StatsError("both groups need at least one value")
    x = np.concatenate([a, b])
    u = _u_from_ranks(sps.rankdata(x), a.size)
    degenerate = bool(np.all(x == x[0]))
    exact = a.size + b.size <= EXACT_MAX_N
    if degenerate:
        p = 1.0
    else:
        p = mw_exact_p(a, b) if exact else mw_normal_p(a, b)
    sd = lambda v: float(v.std(ddof=1)) if v.size > 1 else math.nan
    return GroupComparison(
        u_statistic=u, p_value=p, method="exact" if exact else "normal-approx",
        cohens_d=cohens_d(a, b), n1=a.size, n2=b.size,
        mean1=float(a.mean()), mean2=float(b.mean()), sd1=sd(a), sd2=sd(b),
        degenerate=degenerate,
    )


def significance_marker(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


GROUP_TABLE_HEADER = ("feature", "group1_mean_sd", "group2_mean_sd", "n", "p", "significance", "effect_d")


def group_table_rows(rows) -> list:
    """Format ``(feature, GroupComparison)`` pairs as table cells in header order."""
    out = []
    for name, g in rows:
        out.append([
            name,
            f"{g.mean1:.2f} ± {g.sd1:.2f}",
            f"{g.mean2:.2f} ± {g.sd2:.2f}",
            f"{g.n1}/{g.n2}",
            f"{g.p_value:.3f}",
            significance_marker(g.p_value),
            "" if not math.isfinite(g.cohens_d) else f"{g.cohens_d:.2f}",
        ])
    return out


def write_group_table(path, rows):
    """``rows`` is an iterable of (feature, GroupComparison); one line per feature."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GROUP_TABLE_HEADER)
        w.writerows(group_table_rows(rows))


# --------------------------------------------------------------------------
# agreement
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AgreementReport:
    pearson_r: float
    bias: float
    loa_low: float
    loa_high: float
    n: int
    sd_diff: float = 0.0
    pearson_p: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)


def pearson(x, y):
    """Product-moment correlation and its two-sided t-test p-value."""
    x, y = _as_float(x, "x"), _as_float(y, "y")
    if x.size != y.size:
        raise StatsError("x and y must have equal length")
    if x.size < 3:
        raise StatsError("need at least 3 pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise StatsError("correlation undefined for zero-variance input")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    dof = x.size - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt(dof / (1.0 - r * r))
    return r, float(2.0 * sps.t.sf(abs(t), dof))


def bland_altman(a, b) -> AgreementReport:
    a, b = _as_float(a, "a"), _as_float(b, "b")
    if a.size != b.size:
        raise StatsError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise StatsError("need at least 2 pairs")
    d = a - b
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    try:
        r, p = pearson(a, b)
    except StatsError:
        r, p = math.nan, math.nan
    return AgreementReport(r, bias, bias - 1.96 * sd, bias + 1.96 * sd, a.size, sd, p)


# --------------------------------------------------------------------------
# ROC
# --------------------------------------------------------------------------

def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via midrank sums."""
    s = _as_float(scores, "scores")
    y = _binary_labels(labels)
    ranks = sps.rankdata(s)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def bootstrap_auc_ci(scores, labels, iters: int = BOOTSTRAP_ITERS, seed: int = 0, level: float = 0.95):
    """Percentile bootstrap CI of the AUC.

    Each iteration resamples positives and negatives separately, so every
    resample holds both classes. Iteration ``i`` draws from its own stream
    ``SeedSequence(seed, spawn_key=(i,))``.
    """
    s = _as_float(scores, "scores")
    y = _binary_labels(labels)
    pos, neg = s[y == 1], s[y == 0]
    aucs = np.empty(iters)
    lab = np.r_[np.ones(pos.size, dtype=np.int64), np.zeros(neg.size, dtype=np.int64)]
    for i in range(iters):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
        bs = np.concatenate([pos[rng.integers(0, pos.size, pos.size)], neg[rng.integers(0, neg.size, neg.size)]])
        aucs[i] = roc_auc(bs, lab)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(aucs, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


@dataclass(frozen=True)
class ThresholdMetrics:
    threshold: float
    sens: float
    spec: float
    ppv: float
    npv: float

    @property
    def youden_j(self) -> float:
        return self.sens + self.spec - 1.0


def confusion_at(scores, labels, threshold: float) -> ThresholdMetrics:
    """Rates with predicted positive meaning ``score >= threshold``."""
    s = _as_float(scores)
    y = np.asarray(labels).astype(np.int64)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    div = lambda a, b: a / b if b else math.nan
    return ThresholdMetrics(float(threshold), div(tp, tp + fn), div(tn, tn + fp), div(tp, tp + fp), div(tn, tn + fn))


def youden_threshold(scores, labels) -> ThresholdMetrics:
    """Threshold maximising sens + spec - 1 over midpoints of adjacent distinct scores.

    Equal J values resolve to the lower threshold (higher sensitivity).
    """
    s = _as_float(scores)
    y = _binary_labels(labels)
    u = np.unique(s)
    cands = (u[:-1] + u[1:]) / 2.0 if u.size > 1 else u
    best = None
    for thr in cands:  # ascending, so strict '>' keeps the lowest threshold on ties
        m = confusion_at(s, y, thr)
        if best is None or m.youden_j > best.youden_j + 1e-12:
            best = m
    return best


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold id per item.

    Items are shuffled within each class, classes are laid end to end in
    label order and folds are dealt round-robin along that sequence.
    """
    y = np.asarray(labels).ravel()
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < k:
        raise StatsError(f"every class needs at least k={k} members; smallest has {counts.min()}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    seq = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in classes])
    folds = np.empty(y.size, dtype=np.int64)
    folds[seq] = np.arange(y.size) % k
    return folds


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

@dataclass
class EvalReport:
    auc: float
    auc_ci_low: float
    auc_ci_high: float
    sens: float
    spec: float
    ppv: float
    npv: float
    youden_threshold: float
    fold_aucs: list = field(default_factory=list)
    n: int = 0
    bootstrap_iters: int = BOOTSTRAP_ITERS

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}

    def table_row(self, name: str) -> str:
        return (f"{name:<18} {self.auc:.3f} [{self.auc_ci_low:.3f}-{self.auc_ci_high:.3f}]  "
                f"sens {self.sens:.3f}  spec {self.spec:.3f}  PPV {self.ppv:.3f}  NPV {self.npv:.3f}")


def evaluate(scores, labels, iters: int = BOOTSTRAP_ITERS, seed: int = 0, folds=None) -> EvalReport:
    """AUC with bootstrap CI and confusion metrics at the Youden threshold.

    ``folds`` (optional fold id per item) adds per-fold AUCs.
    """
    s = _as_float(scores)
    y = _binary_labels(labels)
    auc = roc_auc(s, y)
    lo, hi = bootstrap_auc_ci(s, y, iters, seed)
    # percentile intervals can miss the point estimate on tiny samples
    lo, hi = min(lo, auc), max(hi, auc)
    m = youden_threshold(s, y)
    fold_aucs = []
    if folds is not None:
        folds = np.asarray(folds)
        for f in np.unique(folds):
            sel = folds == f
            fold_aucs.append(roc_auc(s[sel], y[sel]) if np.unique(y[sel]).size == 2 else math.nan)
    return EvalReport(auc, lo, hi, m.sens, m.spec, m.ppv, m.npv, m.threshold, fold_aucs, int(s.size), iters)
