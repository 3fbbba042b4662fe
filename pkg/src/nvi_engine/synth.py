"""
Synthetic multimodal trajectories, labeled datasets and perturbation dynamics.

Channel order is ``(spo2_pct, rmssd_ms, pi, phase_delta_deg)``. A stable
trajectory holds each channel at its baseline; an NVI trajectory relaxes
after the perturbation onset toward a perturbed setpoint through a
first-order lag. Both carry slow Ornstein-Uhlenbeck drift plus white
measurement noise.

Random streams
--------------
Every draw comes from a PCG64 generator seeded with
``SeedSequence(seed, spawn_key=(window, stream))``, where ``stream`` is the
channel index 0-3 or :data:`META_STREAM` for per-window metadata. A window
therefore depends only on ``(seed, window index)``; serial and parallel
generation agree bit for bit.

The setpoints, lags and noise levels are calibration choices, not
measured physiology.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .nvi import fused_score_array

CHANNELS = ("spo2_pct", "rmssd_ms", "pi", "phase_delta_deg")
BASELINE = (98.0, 50.0, 0.15, 5.0)
PERTURBED = (90.0, 20.0, 0.05, 60.0)
CHANNEL_BOUNDS = ((0.0, 100.0), (0.0, None), (0.0, None), (0.0, 180.0))

STABLE, NVI = 0, 1
CLASS_NAMES = ("stable", "NVI")
META_STREAM = 7

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class TrajectoryConfig:
    """Generator settings.

    ``noise_sd`` is the per-channel standard deviation of the slow drift;
    white measurement noise adds ``white_ratio * noise_sd`` on top.
    NVI windows in a dataset draw their intensity uniformly from
    ``intensity_range``.
    """

    duration_s: float = 60.0
    fs: float = 100.0
    perturb_onset_s: float = 30.0
    intensity: float = 1.0
    noise_sd: tuple = (1.2, 9.0, 0.0225, 4.5)
    drift_tau_s: float = 10.0
    white_ratio: float = 0.5
    onset_tau_s: float = 5.0
    intensity_range: tuple = (0.0, 0.5)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.perturb_onset_s <= self.duration_s:
            raise ValueError("perturb_onset_s must lie in [0, duration_s]")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("intensity must be in [0, 1]")
        lo, hi = self.intensity_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("intensity_range must be a sub-interval of [0, 1]")
        if len(self.noise_sd) != 4 or min(self.noise_sd) < 0:
            raise ValueError("noise_sd needs four non-negative values")
        object.__setattr__(self, "noise_sd", tuple(float(v) for v in self.noise_sd))
        object.__setattr__(self, "intensity_range", (float(lo), float(hi)))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fs))

    def scaled_noise(self, factor: float) -> "TrajectoryConfig":
        return replace(self, noise_sd=tuple(factor * v for v in self.noise_sd))


@dataclass
class LabeledWindow:
    channels: np.ndarray
    label: int
    nvi_target: float
    intensity: float = 0.0

    @property
    def label_name(self) -> str:
        return CLASS_NAMES[self.label]


def _rng(seed: int, window: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(window, stream))))


def _ar1(rng: np.random.Generator, n: int, sd: float, dt: float, tau: float) -> np.ndarray:
    """Stationary AR(1) sampling of an Ornstein-Uhlenbeck process with SD ``sd``."""
    eps = rng.standard_normal(n + 1)
    if sd == 0:
        return np.zeros(n)
    a = np.exp(-dt / tau)
    b = sd * np.sqrt(1.0 - a * a)
    drive = np.concatenate(([sd * eps[0]], b * eps[1:n]))
    return lfilter([1.0], [1.0, -a], drive)


def _onset_profile(cfg: TrajectoryConfig) -> np.ndarray:
    """0 before onset, then 1 - exp(-(t - onset)/tau)."""
    t = np.arange(cfg.n_samples) / cfg.fs
    lag = np.clip(t - cfg.perturb_onset_s, 0.0, None)
    return np.where(t >= cfg.perturb_onset_s, 1.0 - np.exp(-lag / cfg.onset_tau_s), 0.0)


def gen_trajectory(cfg: TrajectoryConfig, cls=NVI, window: int = 0, intensity: float | None = None) -> np.ndarray:
    """Four-channel trajectory of shape ``(4, n_samples)``.

    ``cls`` is ``0``/``"stable"`` or ``1``/``"NVI"``. ``intensity`` overrides
    ``cfg.intensity`` for the NVI class.
    """
    if isinstance(cls, str):
        cls = CLASS_NAMES.index(cls)
    n = cfg.n_samples
    dt = 1.0 / cfg.fs
    level = cfg.intensity if intensity is None else intensity
    profile = _onset_profile(cfg) * (level if cls == NVI else 0.0)
    out = np.empty((4, n))
    for c in range(4):
        rng = _rng(cfg.seed, window, c)
        sd = cfg.noise_sd[c]
        drift = _ar1(rng, n, sd, dt, cfg.drift_tau_s)
        white = cfg.white_ratio * sd * rng.standard_normal(n)
        target = BASELINE[c] + (PERTURBED[c] - BASELINE[c]) * profile
        lo, hi = CHANNEL_BOUNDS[c]
        out[c] = np.clip(target + drift + white, lo, hi)
    return out


def nvi_trace(channels: np.ndarray, fs: float, block_s: float = 1.0) -> np.ndarray:
    """Composite score on consecutive ``block_s`` block means (a 1 Hz readout by default)."""
    step = max(1, int(round(block_s * fs)))
    k = channels.shape[1] // step
    means = channels[:, : k * step].reshape(4, k, step).mean(axis=2)
    return fused_score_array(*means)


def window_target(channels: np.ndarray) -> float:
    """Composite score of the whole-window channel means."""
    return float(fused_score_array(*channels.mean(axis=1)))


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------

def split_sizes(n: int, fractions=SPLIT_FRACTIONS):
    """Floor each of the train/val fractions; the remainder goes to test."""
    n_train = int(np.floor(fractions[0] * n + 1e-9))
    n_val = int(np.floor(fractions[1] * n + 1e-9))
    return n_train, n_val, n - n_train - n_val


def stratified_order(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffle within each class, then interleave classes by fractional rank."""
    keys = np.empty(labels.size)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        keys[idx] = (np.arange(idx.size) + 0.5) / idx.size
    return np.lexsort((labels, keys))


@dataclass
class Dataset:
    windows: list
    splits: dict
    cfg: TrajectoryConfig
    seed: int
    class_balance: float = 0.5
    meta: dict = field(default_factory=dict)

    def arrays(self, split: str | None = None):
        """``(X, labels, targets)`` with X of shape (n, 4, T)."""
        idx = self.splits[split] if split else np.arange(len(self.windows))
        X = np.stack([self.windows[i].channels for i in idx])
        y = np.array([self.windows[i].label for i in idx], dtype=np.int64)
        t = np.array([self.windows[i].nvi_target for i in idx])
        return X, y, t

    def model_arrays(self, split: str | None = None):
        """Like :meth:`arrays` but with X as (n, T, 4), the model input layout."""
        X, y, t = self.arrays(split)
        return np.ascontiguousarray(X.transpose(0, 2, 1)), y, t

    def composite_scores(self, split: str | None = None) -> np.ndarray:
        idx = self.splits[split] if split else np.arange(len(self.windows))
        return np.array([self.windows[i].nvi_target for i in idx])

    # ------------------------------------------------------------------
    def manifest(self) -> dict:
        return {
            "n": len(self.windows),
            "fs": self.cfg.fs,
            "duration_s": self.cfg.duration_s,
            "seed": self.seed,
            "class_balance": self.class_balance,
            "noise_sd": list(self.cfg.noise_sd),
            "split_indices": {k: [int(i) for i in v] for k, v in self.splits.items()},
            "config": _cfg_dict(self.cfg),
            "labels": [int(w.label) for w in self.windows],
            "nvi_targets": [float(w.nvi_target) for w in self.windows],
            "intensities": [float(w.intensity) for w in self.windows],
            "channels": list(CHANNELS),
            "window_file": "windows.npy",
        }

    def save(self, directory) -> Path:
        """Write ``manifest.json`` and a float64 ``windows.npy`` of shape (n, 4, T)."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        np.save(d / "windows.npy", np.stack([w.channels for w in self.windows]), allow_pickle=False)
        (d / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory) -> "Dataset":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        data = np.load(d / man["window_file"], allow_pickle=False)
        c = dict(man["config"])
        c["noise_sd"] = tuple(c["noise_sd"])
        c["intensity_range"] = tuple(c["intensity_range"])
        cfg = TrajectoryConfig(**c)
        windows = [LabeledWindow(data[i], lab, tgt, inten) for i, (lab, tgt, inten) in
                   enumerate(zip(man["labels"], man["nvi_targets"], man["intensities"]))]
        splits = {k: np.asarray(v, dtype=np.int64) for k, v in man["split_indices"].items()}
        return cls(windows, splits, cfg, man["seed"], man["class_balance"])

    def export_csv(self, directory, indices=None):
        """One CSV per window: header ``t_s`` plus the four channel names."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        idx = range(len(self.windows)) if indices is None else indices
        t = np.arange(self.cfg.n_samples) / self.cfg.fs
        for i in idx:
            w = self.windows[i]
            arr = np.column_stack([t, w.channels.T])
            np.savetxt(d / f"window_{i:05d}_{w.label_name}.csv", arr, delimiter=",",
                       header="t_s," + ",".join(CHANNELS), comments="", fmt="%.10g")


def _cfg_dict(cfg: TrajectoryConfig) -> dict:
    d = asdict(cfg)
    d["noise_sd"] = list(cfg.noise_sd)
    d["intensity_range"] = list(cfg.intensity_range)
    return d


def make_window(i: int, label: int, cfg: TrajectoryConfig, seed: int) -> LabeledWindow:
    wcfg = replace(cfg, seed=seed)
    intensity = 0.0
    if label == NVI:
        lo, hi = cfg.intensity_range
        intensity = float(_rng(seed, i, META_STREAM).uniform(lo, hi))
    ch = gen_trajectory(wcfg, label, window=i, intensity=intensity)
    return LabeledWindow(ch, label, window_target(ch), intensity)


def gen_dataset(n: int, class_balance: float = 0.5, cfg: TrajectoryConfig | None = None,
                seed: int = 0) -> Dataset:
    """Labeled windows with a stratified 70/15/15 split.

    Class sizes are ``round(n * class_balance)`` NVI windows and the rest
    stable. Split sizes follow :func:`split_sizes`.
    """
    if n < 10:
        raise ValueError("gen_dataset needs n >= 10")
    cfg = cfg or TrajectoryConfig()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2 ** 31,))))
    n_pos = int(round(n * class_balance))
    labels = np.array([NVI] * n_pos + [STABLE] * (n - n_pos))
    labels = labels[rng.permutation(n)]
    windows = [make_window(i, int(labels[i]), cfg, seed) for i in range(n)]
    order = stratified_order(labels, rng)
    n_train, n_val, _ = split_sizes(n)
    splits = {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train:n_train + n_val]),
        "test": np.sort(order[n_train + n_val:]),
    }
    return Dataset(windows, splits, cfg, seed, class_balance)


# --------------------------------------------------------------------------
# perturbation dynamics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class McResult:
    intensity: float
    mean_min_nvi: float
    sd_min_nvi: float
    runs: int


def baseline_score() -> float:
    return float(fused_score_array(*BASELINE))


def mc_perturbation(intensities=(0.0, 0.25, 0.5, 0.75, 1.0), runs_per_intensity: int = 100,
                    seed: int = 0, cfg: TrajectoryConfig | None = None) -> list:
    """Minimum post-onset composite (1 Hz readout) per run, summarised per intensity."""
    cfg = cfg or TrajectoryConfig()
    out = []
    onset_block = int(np.ceil(cfg.perturb_onset_s))
    for j, level in enumerate(intensities):
        if not 0.0 <= level <= 1.0:
            raise ValueError(f"intensity {level} outside [0, 1]")
        mins = np.empty(runs_per_intensity)
        for r in range(runs_per_intensity):
            wcfg = replace(cfg, seed=seed)
            ch = gen_trajectory(wcfg, NVI, window=j * runs_per_intensity + r, intensity=level)
            mins[r] = nvi_trace(ch, cfg.fs)[onset_block:].min()
        out.append(McResult(float(level), float(mins.mean()), float(mins.std(ddof=1)), runs_per_intensity))
    return out


def recovery_curve(nvi_floor: float, nvi_base: float, tau_s: float = 60.0, duration_s: float = 300.0,
                   fs: float = 1.0):
    """Exponential return from ``nvi_floor`` toward ``nvi_base``.

    Returns
    -------
    t, nvi : ndarray
    """
    if not tau_s > 0:
        raise ValueError("tau_s must be > 0")
    if not nvi_floor < nvi_base:
        raise ValueError("nvi_floor must be below nvi_base")
    t = np.arange(int(np.floor(duration_s * fs + 1e-9)) + 1) / fs
    # floor + gap * (1 - e^(-t/tau)) is exact at t = 0; the clip guards the last ulp
    return t, np.minimum(nvi_floor - (nvi_base - nvi_floor) * np.expm1(-t / tau_s), nvi_base)



# --------------------------------------------------------------------------
# beat-level PPG / ECG waveforms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BeatTrain:
    """Heartbeat (R-peak) times in seconds with the generator's own IBIs."""

    times: np.ndarray
    duration_s: float

    @property
    def intervals_ms(self) -> np.ndarray:
        return np.diff(self.times) * 1000.0

    @property
    def rmssd_ms(self) -> float:
        d = np.diff(self.intervals_ms)
        return float(np.sqrt(np.mean(d * d)))


def beat_train(duration_s: float = 60.0, mean_ibi_ms: float = 1000.0, jitter_ms: float = 20.0,
               seed: int = 0, start_s: float = 0.5) -> BeatTrain:
    """Regular beat grid with Gaussian jitter (SD ``jitter_ms``) on each beat time."""
    rng = _rng(seed, 0, META_STREAM + 1)
    grid = np.arange(start_s, duration_s, mean_ibi_ms / 1000.0)
    t = grid + rng.normal(0.0, jitter_ms / 1000.0, grid.size)
    t = np.sort(t[(t > 0) & (t < duration_s)])
    return BeatTrain(t, duration_s)


def synth_ppg(beats: BeatTrain, fs: float = 125.0, dc: float = 100.0, amplitude: float = 2.0,
              ptt_s: float = 0.25, noise_sd: float = 0.0, seed: int = 0, dicrotic: float = 0.35) -> np.ndarray:
    """Pulse train: a systolic and a smaller diastolic Gaussian wave per beat on a DC level."""
    t = np.arange(int(round(beats.duration_s * fs))) / fs
    x = np.full(t.size, dc, dtype=float)
    for tb in beats.times + ptt_s:
        lo, hi = np.searchsorted(t, [tb - 0.6, tb + 1.0])
        tt = t[lo:hi] - tb
        x[lo:hi] += amplitude * (np.exp(-0.5 * (tt / 0.09) ** 2) + dicrotic * np.exp(-0.5 * ((tt - 0.32) / 0.11) ** 2))
    if noise_sd > 0:
        x += noise_sd * _rng(seed, 0, META_STREAM + 2).standard_normal(t.size)
    return x


def synth_ecg(beats: BeatTrain, fs: float = 125.0, noise_sd: float = 0.0, seed: int = 0) -> np.ndarray:
    """Minimal ECG-like trace: a narrow R wave and a broad T wave per beat."""
    t = np.arange(int(round(beats.duration_s * fs))) / fs
    x = np.zeros(t.size)
    for tb in beats.times:
        lo, hi = np.searchsorted(t, [tb - 0.2, tb + 0.6])
        tt = t[lo:hi] - tb
        x[lo:hi] += np.exp(-0.5 * (tt / 0.012) ** 2) + 0.25 * np.exp(-0.5 * ((tt - 0.3) / 0.06) ** 2)
    if noise_sd > 0:
        x += noise_sd * _rng(seed, 0, META_STREAM + 3).standard_normal(t.size)
    return x


@dataclass(frozen=True)
class Subject:
    beats: BeatTrain
    ppg: np.ndarray
    ecg: np.ndarray
    fs: float


def cohort(n_subjects: int = 50, duration_s: float = 120.0, fs: float = 125.0, seed: int = 0) -> list:
    """Co-generated ECG + PPG recordings with subject-specific heart rate and variability."""
    out = []
    for i in range(n_subjects):
        rng = _rng(seed, i, META_STREAM)
        ibi = rng.uniform(700.0, 1100.0)
        jitter = rng.uniform(5.0, 45.0)
        beats = beat_train(duration_s, ibi, jitter, seed=seed * 100003 + i)
        ppg = synth_ppg(beats, fs, dc=rng.uniform(80, 120), amplitude=rng.uniform(1.5, 4.0),
                        noise_sd=0.02, seed=seed * 100003 + i)
        ecg = synth_ecg(beats, fs, noise_sd=0.01, seed=seed * 100003 + i)
        out.append(Subject(beats, ppg, ecg, fs))
    return out
