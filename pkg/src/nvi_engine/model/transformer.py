"""
Transformer-lite classifier.

Input windows are ``(batch, seq_len * patch, in_channels)``. Each patch of
``patch`` samples is averaged into one token, projected to ``d_model``,
layer-normalised and given a learned positional embedding. A stack of
pre-norm encoder layers follows, then a final LayerNorm, mean pooling over
tokens and a small MLP head that emits one logit per window.

The logit is a *stability* logit: ``nvi_pred = 100 * sigmoid(logit)`` and
the probability of instability is ``sigmoid(-logit)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import GELU, Dropout, EncoderLayer, GraphError, Layer, LayerNorm, Linear

LOGIT_CAP = 30.0


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 4
    d_model: int = 128
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 256
    dropout: float = 0.15
    seq_len: int = 60
    patch: int = 100
    head_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.patch < 1 or self.seq_len < 1:
            raise ValueError("seq_len and patch must be >= 1")

    @property
    def window_len(self) -> int:
        return self.seq_len * self.patch

    def to_dict(self) -> dict:
        return asdict(self)


def param_count(cfg: ModelConfig) -> int:
    """Closed-form number of trainable scalars.

    input projection + input LayerNorm + positional table
    + layers * (2 LayerNorms + 4 attention projections + 2 FFN linears)
    + final LayerNorm (only when layers > 0) + head.
    """
    d, f, c = cfg.d_model, cfg.ffn_dim, cfg.in_channels
    proj = c * d + d + 2 * d
    pos = cfg.seq_len * d
    per_layer = 2 * (2 * d) + 4 * (d * d + d) + (d * f + f) + (f * d + d)
    final_norm = 2 * d if cfg.layers > 0 else 0
    head = d * cfg.head_dim + cfg.head_dim + cfg.head_dim + 1
    return proj + pos + cfg.layers * per_layer + final_norm + head


class _Embedding(Layer):
    def __init__(self, n, d, rng):
        super().__init__()
        self.params["weight"] = rng.normal(0.0, 0.02, (n, d))
        self.zero_grad()

    def forward(self, x, record=False):
        if record:
            self._cache = True
        return x + self.params["weight"]

    def backward(self, dout):
        self._pop_cache()
        self.grads["weight"] += dout.sum(axis=0)
        return dout


class TransformerLite(Layer):
    def __init__(self, cfg: ModelConfig = ModelConfig(), input_mean=None, input_std=None):
        super().__init__()
        self.cfg = cfg
        ss = np.random.SeedSequence(cfg.seed)
        init_ss, drop_ss = ss.spawn(2)
        rng = np.random.Generator(np.random.PCG64(init_ss))
        self.dropout_rng = np.random.Generator(np.random.PCG64(drop_ss))
        d = cfg.d_model
        self.input_mean = np.zeros(cfg.in_channels) if input_mean is None else np.asarray(input_mean, float)
        self.input_std = np.ones(cfg.in_channels) if input_std is None else np.asarray(input_std, float)
        self.proj = Linear(cfg.in_channels, d, rng)
        self.proj_norm = LayerNorm(d)
        self.pos = _Embedding(cfg.seq_len, d, rng)
        self.blocks = [EncoderLayer(d, cfg.heads, cfg.ffn_dim, cfg.dropout, rng, self.dropout_rng)
                       for _ in range(cfg.layers)]
        self.final_norm = LayerNorm(d) if cfg.layers > 0 else None
        self.head1 = Linear(d, cfg.head_dim, rng)
        self.head_act = GELU()
        self.head_drop = Dropout(cfg.dropout, self.dropout_rng)
        self.head2 = Linear(cfg.head_dim, 1, rng)
        self._recorded = False

    def children(self):
        ch = {"proj": self.proj, "proj_norm": self.proj_norm, "pos": self.pos}
        ch.update({f"blocks.{i}": b for i, b in enumerate(self.blocks)})
        if self.final_norm is not None:
            ch["final_norm"] = self.final_norm
        ch.update({"head1": self.head1, "head2": self.head2})
        return ch

    # ------------------------------------------------------------------
    def state_dict(self) -> dict:
        return {name: layer.params[k] for name, layer, k in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = {name: (layer, k) for name, layer, k in self.named_parameters()}
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, (layer, k) in own.items():
            arr = np.asarray(state[name], dtype=float)
            if arr.shape != layer.params[k].shape:
                raise ShapeError(f"{name}: expected {layer.params[k].shape}, got {arr.shape}")
            layer.params[k] = arr.copy()

    def gradients(self) -> dict:
        return {name: layer.grads[k] for name, layer, k in self.named_parameters()}

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.state_dict().values()))

    # ------------------------------------------------------------------
    def patchify(self, x) -> np.ndarray:
        """Normalise channels and average each patch: (B, L*P, C) -> (B, L, C)."""
        x = np.asarray(x, dtype=float)
        cfg = self.cfg
        expected = (cfg.window_len, cfg.in_channels)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ShapeError(f"expected input (batch, {expected[0]}, {expected[1]}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite values")
        x = (x - self.input_mean) / self.input_std
        return x.reshape(x.shape[0], cfg.seq_len, cfg.patch, cfg.in_channels).mean(axis=2)

    def forward_tokens(self, tokens, mode: str = "eval", record: bool | None = None):
        """Forward from patch-averaged tokens ``(B, seq_len, in_channels)``."""
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        train = mode == "train"
        record = train if record is None else record
        h = self.proj_norm.forward(self.proj.forward(tokens, record), record)
        h = self.pos.forward(h, record)
        for blk in self.blocks:
            h = blk.forward(h, record, train)
        if self.final_norm is not None:
            h = self.final_norm.forward(h, record)
        self._pool_len = h.shape[1]
        pooled = h.mean(axis=1)
        z = self.head_act.forward(self.head1.forward(pooled, record), record)
        z = self.head_drop.forward(z, record, train)
        logit = self.head2.forward(z, record)[:, 0]
        self._recorded = record
        return 100.0 / (1.0 + np.exp(-logit)), logit

    def forward(self, x, mode: str = "eval", record: bool | None = None):
        """Return ``(nvi_pred, logit)``, each of shape (batch,)."""
        return self.forward_tokens(self.patchify(x), mode, record)

    def backward(self, dlogit):
        """Backpropagate d(loss)/d(logit); parameter gradients accumulate in place."""
        if not self._recorded:
            raise GraphError("backward requires a forward pass recorded in train mode")
        self._recorded = False
        dz = self.head2.backward(np.asarray(dlogit, dtype=float)[:, None])
        dz = self.head_act.backward(self.head_drop.backward(dz))
        dpool = self.head1.backward(dz)
        dh = np.repeat(dpool[:, None, :] / self._pool_len, self._pool_len, axis=1)
        if self.final_norm is not None:
            dh = self.final_norm.backward(dh)
        for blk in reversed(self.blocks):
            dh = blk.backward(dh)
        dh = self.pos.backward(dh)
        return self.proj.backward(self.proj_norm.backward(dh))

    def attention_maps(self):
        return [blk.attn.last_attention for blk in self.blocks]


def _softplus(x):
    return np.logaddexp(0.0, x)


def combined_loss(nvi_pred, logit, nvi_target, label, pos_weight: float = 1.0, mix=(0.7, 0.3)):
    """``mix[0] * MSE(pred/100, target/100) + mix[1] * weighted BCE``.

    The BCE term scores the instability probability ``sigmoid(-logit)``
    against ``label`` (1 = NVI) with the positive class weighted by
    ``pos_weight``; the logit is capped at +-30 inside the BCE.

    Returns
    -------
    loss : float
    dlogit : ndarray
        Gradient of the loss with respect to ``logit`` (``nvi_pred`` is
        treated as ``100 * sigmoid(logit)``).
    """
    pred = np.asarray(nvi_pred, dtype=float) / 100.0
    logit = np.asarray(logit, dtype=float)
    tgt = np.asarray(nvi_target, dtype=float) / 100.0
    y = np.asarray(label, dtype=float)
    for name, v in (("nvi_pred", pred), ("logit", logit), ("nvi_target", tgt)):
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} contains non-finite values")
    if not pos_weight > 0:
        raise ValueError("pos_weight must be > 0")
    n = pred.size
    w_mse, w_bce = mix
    mse = np.mean((pred - tgt) ** 2)
    z = np.clip(-logit, -LOGIT_CAP, LOGIT_CAP)
    bce_i = pos_weight * y * _softplus(-z) + (1.0 - y) * _softplus(z)
    bce = np.mean(bce_i)
    sig_z = 1.0 / (1.0 + np.exp(-z))
    dz = (-pos_weight * y * (1.0 - sig_z) + (1.0 - y) * sig_z) / n
    inside = np.abs(logit) < LOGIT_CAP
    d_bce = np.where(inside, -dz, 0.0)
    d_mse = 2.0 * (pred - tgt) / n * pred * (1.0 - pred)
    return float(w_mse * mse + w_bce * bce), w_mse * d_mse + w_bce * d_bce
