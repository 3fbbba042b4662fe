"""AdamW, cosine schedule and the early-stopping training loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..stats import roc_auc
from .transformer import ModelConfig, TransformerLite, combined_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-2
    t_max: int = 100
    eta_min: float = 1e-5
    patience: int = 25
    loss_mix: tuple = (0.7, 0.3)
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0
    pos_weight: float | None = None  # None: n_neg / n_pos of the training split
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if abs(sum(self.loss_mix) - 1.0) > 1e-12:
            raise ValueError("loss_mix weights must sum to 1")
        if self.pos_weight is not None and not self.pos_weight > 0:
            raise ValueError("pos_weight must be > 0")
        object.__setattr__(self, "loss_mix", tuple(self.loss_mix))
        object.__setattr__(self, "betas", tuple(self.betas))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_mix"] = list(self.loss_mix)
        d["betas"] = list(self.betas)
        return d


def cosine_lr(epoch: float, lr: float = 1e-3, t_max: int = 100, eta_min: float = 1e-5) -> float:
    """eta_min + (lr - eta_min) * (1 + cos(pi * epoch / t_max)) / 2."""
    return eta_min + 0.5 * (lr - eta_min) * (1.0 + math.cos(math.pi * epoch / t_max))


class AdamW:
    """Adam with decoupled weight decay, applied to every parameter."""

    def __init__(self, params: dict, weight_decay=1e-2, betas=(0.9, 0.999), eps=1e-8):
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float):
        """Update ``params`` in place."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.b1 ** t
        c2 = 1.0 - self.b2 ** t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p *= 1.0 - lr * self.weight_decay
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"step": self.step_count, "m": self.m, "v": self.v}

    def load_state(self, state: dict):
        self.step_count = int(state["step"])
        for k in self.m:
            self.m[k] = np.array(state["m"][k], dtype=float)
            self.v[k] = np.array(state["v"][k], dtype=float)


def adamw_step(params, grads, state: AdamW, lr_t: float):
    state.step(params, grads, lr_t)
    return params


@dataclass
class TrainResult:
    model: TransformerLite
    optimizer: AdamW
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_auc: float = -math.inf
    stopped_early: bool = False
    rng_state: dict | None = None
    train_cfg: TrainConfig | None = None

    def history_jsonl(self) -> str:
        return "".join(json.dumps(h, sort_keys=True) + "\n" for h in self.history)


def channel_stats(X: np.ndarray):
    """Per-channel mean and SD over ``(n, T, C)``."""
    flat = X.reshape(-1, X.shape[-1])
    sd = flat.std(axis=0)
    return flat.mean(axis=0), np.where(sd > 0, sd, 1.0)


def instability_score(logit) -> np.ndarray:
    """Higher means more likely NVI."""
    return -np.asarray(logit)


def predict(model: TransformerLite, X: np.ndarray, batch_size: int = 256):
    """Eval-mode ``(nvi_pred, logit)`` for raw windows ``(n, T, C)``."""
    preds, logits = [], []
    for s in range(0, X.shape[0], batch_size):
        p, l = model.forward(X[s:s + batch_size], "eval")
        preds.append(p)
        logits.append(l)
    return np.concatenate(preds), np.concatenate(logits)


def train(train_data, val_data, model_cfg: ModelConfig = ModelConfig(), train_cfg: TrainConfig = TrainConfig(),
          callback=None) -> TrainResult:
    """Fit a :class:`TransformerLite` with early stopping on validation AUC.

    ``train_data`` and ``val_data`` are ``(X, labels, nvi_targets)`` with X of
    shape ``(n, T, C)`` and labels 1 = NVI. The model returned holds the
    parameters of the best validation epoch.
    """
    Xtr, ytr, ttr = train_data
    Xva, yva, tva = val_data
    if len(ytr) == 0 or len(yva) == 0:
        raise ValueError("train and validation splits must be non-empty")
    ytr = np.asarray(ytr)
    n_pos = int((ytr == 1).sum())
    n_neg = int((ytr == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("training split needs both classes")
    pos_weight = train_cfg.pos_weight or n_neg / n_pos

    mean, sd = channel_stats(np.asarray(Xtr))
    model = TransformerLite(model_cfg, mean, sd)
    tok_tr = model.patchify(Xtr)
    tok_va = model.patchify(Xva)
    params = model.state_dict()
    opt = AdamW(params, train_cfg.weight_decay, train_cfg.betas, train_cfg.eps)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(train_cfg.seed)))

    result = TrainResult(model, opt, train_cfg=train_cfg)
    best_state = {k: v.copy() for k, v in params.items()}
    since_best = 0
    for epoch in range(train_cfg.max_epochs):
        lr = cosine_lr(min(epoch, train_cfg.t_max), train_cfg.lr, train_cfg.t_max, train_cfg.eta_min)
        order = rng.permutation(len(ytr))
        total, count = 0.0, 0
        for s in range(0, order.size, train_cfg.batch_size):
            idx = order[s:s + train_cfg.batch_size]
            model.zero_grad()
            pred, logit = model.forward_tokens(tok_tr[idx], "train")
            loss, dlogit = combined_loss(pred, logit, ttr[idx], ytr[idx], pos_weight, train_cfg.loss_mix)
            model.backward(dlogit)
            opt.step(params, model.gradients(), lr)
            total += loss * idx.size
            count += idx.size
        _, val_logit = model.forward_tokens(tok_va, "eval")
        val_auc = roc_auc(instability_score(val_logit), yva)
        rec = {"epoch": epoch, "train_loss": total / count, "val_auc": val_auc, "lr": lr}
        result.history.append(rec)
        log.info("epoch %d loss %.5f val_auc %.4f lr %.2e", epoch, rec["train_loss"], val_auc, lr)
        if callback:
            callback(rec)
        if val_auc > result.best_val_auc:
            result.best_val_auc = val_auc
            result.best_epoch = epoch
            best_state = {k: v.copy() for k, v in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best > train_cfg.patience:
                result.stopped_early = True
                break
    model.load_state_dict(best_state)
    result.rng_state = rng.bit_generator.state
    return result
