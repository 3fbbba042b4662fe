"""
Layers with explicit forward/backward passes.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` on ``backward``.
Arrays are float64 and batch-first.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class GraphError(RuntimeError):
    """Backward requested without a recorded forward pass."""


class Layer:
    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def children(self):
        return {}

    def named_parameters(self, prefix=""):
        """Yield ``(qualified_name, owning_layer, key)`` for every parameter."""
        for k in self.params:
            yield prefix + k, self, k
        for name, child in self.children().items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)
        for child in self.children().values():
            child.zero_grad()

    def _pop_cache(self):
        if self._cache is None:
            raise GraphError(f"{type(self).__name__}.backward called without a recorded forward pass")
        c, self._cache = self._cache, None
        return c


class Linear(Layer):
    def __init__(self, d_in, d_out, rng):
        super().__init__()
        bound = 1.0 / math.sqrt(d_in)
        self.params["weight"] = rng.uniform(-bound, bound, (d_in, d_out))
        self.params["bias"] = np.zeros(d_out)
        self.zero_grad()

    def forward(self, x, record=False):
        if record:
            self._cache = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dout):
        x = self._pop_cache()
        d_in = x.shape[-1]
        self.grads["weight"] += x.reshape(-1, d_in).T @ dout.reshape(-1, dout.shape[-1])
        self.grads["bias"] += dout.reshape(-1, dout.shape[-1]).sum(axis=0)
        return dout @ self.params["weight"].T


class LayerNorm(Layer):
    def __init__(self, d, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.params["weight"] = np.ones(d)
        self.params["bias"] = np.zeros(d)
        self.zero_grad()

    def forward(self, x, record=False):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + self.eps)
        xhat = xc * inv
        if record:
            self._cache = (xhat, inv)
        return xhat * self.params["weight"] + self.params["bias"]

    def backward(self, dout):
        xhat, inv = self._pop_cache()
        d = xhat.shape[-1]
        self.grads["weight"] += (dout * xhat).reshape(-1, d).sum(axis=0)
        self.grads["bias"] += dout.reshape(-1, d).sum(axis=0)
        g = dout * self.params["weight"]
        return inv * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).mean(axis=-1, keepdims=True))


class GELU(Layer):
    """Exact (erf) GELU."""

    def forward(self, x, record=False):
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        if record:
            self._cache = (x, cdf)
        return x * cdf

    def backward(self, dout):
        x, cdf = self._pop_cache()
        return dout * (cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x))


class Dropout(Layer):
    def __init__(self, p, rng):
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x, record=False, train=False):
        if not train or self.p == 0.0:
            if record:
                self._cache = 1.0
            return x
        mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        if record:
            self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._pop_cache()


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class MultiHeadAttention(Layer):
    def __init__(self, d_model, heads, rng):
        super().__init__()
        if d_model % heads:
            raise ValueError("d_model must be divisible by heads")
        self.h = heads
        self.dh = d_model // heads
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.o = Linear(d_model, d_model, rng)
        self.last_attention = None

    def children(self):
        return {"q": self.q, "k": self.k, "v": self.v, "o": self.o}

    def _split(self, t):
        b, n, _ = t.shape
        return t.reshape(b, n, self.h, self.dh).transpose(0, 2, 1, 3)

    def forward(self, x, record=False):
        b, n, d = x.shape
        q = self._split(self.q.forward(x, record))
        k = self._split(self.k.forward(x, record))
        v = self._split(self.v.forward(x, record))
        scale = 1.0 / math.sqrt(self.dh)
        att = softmax(q @ k.transpose(0, 1, 3, 2) * scale)
        self.last_attention = att
        ctx = (att @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
        if record:
            self._cache = (q, k, v, att, scale)
        return self.o.forward(ctx, record)

    def backward(self, dout):
        q, k, v, att, scale = self._pop_cache()
        b, h, n, dh = q.shape
        dctx = self.o.backward(dout)
        dctx = dctx.reshape(b, n, h, dh).transpose(0, 2, 1, 3)
        datt = dctx @ v.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ dctx
        ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        merge = lambda t: t.transpose(0, 2, 1, 3).reshape(b, n, h * dh)
        return self.q.backward(merge(dq)) + self.k.backward(merge(dk)) + self.v.backward(merge(dv))


class EncoderLayer(Layer):
    """Pre-norm encoder block: x + attn(norm(x)), then x + ffn(norm(x))."""

    def __init__(self, d_model, heads, ffn_dim, dropout, rng, drop_rng):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, heads, rng)
        self.drop1 = Dropout(dropout, drop_rng)
        self.norm2 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, ffn_dim, rng)
        self.act = GELU()
        self.drop_ff = Dropout(dropout, drop_rng)
        self.ff2 = Linear(ffn_dim, d_model, rng)
        self.drop2 = Dropout(dropout, drop_rng)

    def children(self):
        return {"norm1": self.norm1, "attn": self.attn, "norm2": self.norm2, "ff1": self.ff1, "ff2": self.ff2}

    def forward(self, x, record=False, train=False):
        a = self.attn.forward(self.norm1.forward(x, record), record)
        x = x + self.drop1.forward(a, record, train)
        f = self.ff1.forward(self.norm2.forward(x, record), record)
        f = self.drop_ff.forward(self.act.forward(f, record), record, train)
        f = self.ff2.forward(f, record)
        return x + self.drop2.forward(f, record, train)

    def backward(self, dout):
        df = self.ff2.backward(self.drop2.backward(dout))
        df = self.act.backward(self.drop_ff.backward(df))
        dx = dout + self.norm2.backward(self.ff1.backward(df))
        da = self.attn.backward(self.drop1.backward(dx))
        return dx + self.norm1.backward(da)
