"""Central finite-difference check of the hand-written backward pass."""

from __future__ import annotations

import numpy as np

from .transformer import ModelConfig, TransformerLite, combined_loss

TINY = ModelConfig(d_model=8, heads=2, layers=1, ffn_dim=16, dropout=0.0, seq_len=4, patch=1, head_dim=4, seed=0)


def _loss(model, tokens, targets, labels, pos_weight, mix, record=False):
    pred, logit = model.forward_tokens(tokens, "eval", record=record)
    return combined_loss(pred, logit, targets, labels, pos_weight, mix)


def gradient_check(model: TransformerLite | None = None, tokens=None, targets=None, labels=None,
                   eps: float = 1e-3, pos_weight: float = 1.5, mix=(0.7, 0.3), seed: int = 0) -> dict:
    """Max relative error per parameter tensor between backprop and central differences.

    The relative error of one entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    Dropout is off (eval mode), so the loss is a deterministic function of
    the parameters.
    """
    rng = np.random.default_rng(seed)
    model = model or TransformerLite(TINY)
    cfg = model.cfg
    b = 6
    if tokens is None:
        tokens = rng.normal(size=(b, cfg.seq_len, cfg.in_channels))
    if labels is None:
        labels = np.arange(tokens.shape[0]) % 2
    if targets is None:
        targets = rng.uniform(20, 95, tokens.shape[0])

    model.zero_grad()
    _, dlogit = _loss(model, tokens, targets, labels, pos_weight, mix, record=True)
    model.backward(dlogit)
    analytic = {k: v.copy() for k, v in model.gradients().items()}

    errors = {}
    for name, p in model.state_dict().items():
        num = np.empty_like(p)
        flat, nflat = p.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = _loss(model, tokens, targets, labels, pos_weight, mix)[0]
            flat[i] = keep - eps
            down = _loss(model, tokens, targets, labels, pos_weight, mix)[0]
            flat[i] = keep
            nflat[i] = (up - down) / (2 * eps)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-8)
        errors[name] = float(np.max(np.abs(a - num) / denom))
    return errors
