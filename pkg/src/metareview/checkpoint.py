"""Versioned ``.npz`` checkpoints: named parameter arrays, Adam moments and JSON metadata."""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .assembly import Vocab
from .errors import ConfigMismatch, CorruptCheckpoint
from .model import Model, ModelConfig
from .training import Adam, TrainConfig

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    step: int
    model: Model
    optimizer: Optional[Adam]
    train_config: Optional[TrainConfig]
    vocab: Optional[Vocab]
    metrics: dict = field(default_factory=dict)
    config_hash: str = ""


def save_checkpoint(path, model: Model, step: int = 0, optimizer: Adam | None = None,
                    train_config: TrainConfig | None = None, vocab: Vocab | None = None,
                    metrics: dict | None = None) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "step": step,
        "model_config": model.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "config_hash": train_config.digest() if train_config else "",
        "metrics": metrics or {},
        "vocab": vocab.itos if vocab is not None else None,
        "optimizer_t": optimizer.t if optimizer else None,
    }
    arrays = {f"param/{k}": t.data for k, t in model.params.items()}
    if optimizer is not None:
        arrays.update({f"adam_m/{k}": v for k, v in optimizer.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in optimizer.v.items()})
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, expected: ModelConfig | None = None) -> Checkpoint:
    """Load a checkpoint; ``expected`` guards against silently loading a different architecture."""
    try:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
        meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
        config = ModelConfig(**meta["model_config"])
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: {type(exc).__name__}: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported format version {meta.get('format_version')}")
    if expected is not None and expected != config:
        diff = {k: (v, getattr(config, k)) for k, v in expected.to_dict().items() if getattr(config, k) != v}
        raise ConfigMismatch(f"checkpoint config differs (expected, found): {diff}")
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    model = Model(config, params=params)
    reference = Model(config, seed=0, aux_heads=model.aux_heads)
    for name, t in reference.params.items():
        if name not in model.params or model.params[name].shape != t.shape:
            raise ConfigMismatch(f"parameter {name} missing or mis-shaped for {config}")
    optimizer = None
    if meta.get("optimizer_t") is not None:
        optimizer = Adam(model.params)
        optimizer.t = meta["optimizer_t"]
        optimizer.m = {k[len("adam_m/"):]: v for k, v in arrays.items() if k.startswith("adam_m/")}
        optimizer.v = {k[len("adam_v/"):]: v for k, v in arrays.items() if k.startswith("adam_v/")}
    train_config = TrainConfig.from_dict(meta["train_config"]) if meta.get("train_config") else None
    vocab = Vocab(meta["vocab"]) if meta.get("vocab") else None
    return Checkpoint(meta["step"], model, optimizer, train_config, vocab, meta.get("metrics", {}),
                      meta.get("config_hash", ""))
