"""
Checkpoint container.

Layout (all integers little-endian)::

    magic    8 bytes   b"NVICKPT\\0"
    version  uint32
    hlen     uint64    length of the JSON header in bytes
    header   hlen bytes UTF-8 JSON
    payload  concatenated float64 tensors, row-major

The header holds the model/train configs, epoch, best validation AUC, RNG
state, input normalisation and a tensor index of
``{"name", "shape", "offset"}`` entries (offset in bytes into the payload).
Optimizer moments are stored as tensors named ``adam.m.<param>`` and
``adam.v.<param>``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .train import AdamW, TrainConfig
from .transformer import ModelConfig, TransformerLite

MAGIC = b"NVICKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_cfg: ModelConfig
    params: dict
    input_mean: np.ndarray
    input_std: np.ndarray
    optimizer: dict | None = None
    epoch: int = -1
    best_val_auc: float = float("nan")
    rng_state: dict | None = None
    train_cfg: dict = field(default_factory=dict)

    @classmethod
    def from_training(cls, result) -> "Checkpoint":
        m = result.model
        return cls(m.cfg, {k: v.copy() for k, v in m.state_dict().items()}, m.input_mean.copy(),
                   m.input_std.copy(), result.optimizer.state(), result.best_epoch, result.best_val_auc,
                   result.rng_state, result.train_cfg.to_dict() if result.train_cfg else {})

    def build_model(self) -> TransformerLite:
        model = TransformerLite(self.model_cfg, self.input_mean, self.input_std)
        model.load_state_dict(self.params)
        return model

    def build_optimizer(self) -> AdamW:
        opt = AdamW(self.params, **_adam_kwargs(self.train_cfg))
        if self.optimizer:
            opt.load_state(self.optimizer)
        return opt

    # ------------------------------------------------------------------
    def _tensors(self):
        yield from self.params.items()
        yield "input.mean", self.input_mean
        yield "input.std", self.input_std
        if self.optimizer:
            for k, v in self.optimizer["m"].items():
                yield f"adam.m.{k}", v
            for k, v in self.optimizer["v"].items():
                yield f"adam.v.{k}", v

    def save(self, path):
        index, chunks, offset = [], [], 0
        for name, arr in self._tensors():
            a = np.ascontiguousarray(arr, dtype="<f8")
            index.append({"name": name, "shape": list(a.shape), "offset": offset})
            chunks.append(a.tobytes())
            offset += a.nbytes
        header = {
            "format_version": VERSION,
            "model_config": self.model_cfg.to_dict(),
            "train_config": self.train_cfg,
            "epoch": self.epoch,
            "best_val_auc": self.best_val_auc,
            "rng_state": self.rng_state,
            "optimizer_step": self.optimizer["step"] if self.optimizer else None,
            "tensors": index,
        }
        hb = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", VERSION, len(hb)))
            fh.write(hb)
            for c in chunks:
                fh.write(c)
        return Path(path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        raw = Path(path).read_bytes()
        if raw[:8] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack_from("<IQ", raw, 8)
        if version > VERSION:
            raise CheckpointError(f"{path}: format version {version} is newer than supported {VERSION}")
        start = 8 + 12
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
        payload = memoryview(raw)[start + hlen:]
        tensors = {}
        for t in header["tensors"]:
            n = int(np.prod(t["shape"])) if t["shape"] else 1
            arr = np.frombuffer(payload, dtype="<f8", count=n, offset=t["offset"])
            tensors[t["name"]] = arr.reshape(t["shape"]).astype(float)
        params = {k: v for k, v in tensors.items() if not k.startswith(("adam.", "input."))}
        opt = None
        if header.get("optimizer_step") is not None:
            opt = {
                "step": header["optimizer_step"],
                "m": {k[len("adam.m."):]: v for k, v in tensors.items() if k.startswith("adam.m.")},
                "v": {k[len("adam.v."):]: v for k, v in tensors.items() if k.startswith("adam.v.")},
            }
        return cls(ModelConfig(**header["model_config"]), params, tensors["input.mean"], tensors["input.std"],
                   opt, header["epoch"], header["best_val_auc"], header["rng_state"], header["train_config"])


def _adam_kwargs(train_cfg: dict) -> dict:
    tc = TrainConfig(**{**train_cfg, "loss_mix": tuple(train_cfg.get("loss_mix", (0.7, 0.3))),
                        "betas": tuple(train_cfg.get("betas", (0.9, 0.999)))}) if train_cfg else TrainConfig()
    return {"weight_decay": tc.weight_decay, "betas": tc.betas, "eps": tc.eps}
