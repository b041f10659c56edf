"""Training loop for the pointer transformer (Adam + Noam schedule)."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensorcore as tc
from .corpus import FormattedPair, Vocab
from .model import ModelConfig, PointerTransformer, training_loss

log = logging.getLogger(__name__)


class UsageError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    accumulate: int = 1  # micro-batches per optimizer update
    noam_base: float = 0.35
    warmup: int = 100
    seed: int = 0

    @classmethod
    def full_scale(cls) -> "TrainConfig":
        # 1400 was a token-count batch in the original setup; here it is pairs
        return cls(epochs=40, batch_size=1400, accumulate=8, noam_base=0.35, warmup=4000)


@dataclass
class TrainResult:
    model: PointerTransformer
    epoch_losses: list[float]
    initial_loss: float
    updates: int


def mean_loss(model: PointerTransformer, pairs: Sequence[FormattedPair], batch_size: int = 64) -> float:
    total, count = 0.0, 0
    with tc.no_grad():
        for i in range(0, len(pairs), batch_size):
            chunk = pairs[i:i + batch_size]
            total += training_loss(chunk, model).item() * len(chunk)
            count += len(chunk)
    return total / max(count, 1)


def train(config: ModelConfig, pairs: Sequence[FormattedPair], vocab: Vocab, train_config: TrainConfig,
          on_epoch: Callable[[int, float], None] | None = None) -> TrainResult:
    if not pairs:
        raise UsageError("cannot train on an empty dataset")
    if len({p.format for p in pairs}) > 1:
        raise UsageError("training pairs must share one format")
    model = PointerTransformer(config, vocab, seed=train_config.seed)
    params = model.parameters()
    opt = tc.Adam(params)
    order_rng = np.random.default_rng([train_config.seed, 1])
    drop_rng = np.random.default_rng([train_config.seed, 2])
    initial = mean_loss(model, pairs)
    losses = []
    micro = 0
    for epoch in range(1, train_config.epochs + 1):
        order = order_rng.permutation(len(pairs))
        total, seen = 0.0, 0
        for start in range(0, len(pairs), train_config.batch_size):
            batch = [pairs[i] for i in order[start:start + train_config.batch_size]]
            loss = training_loss(batch, model, training=True, rng=drop_rng)
            # scale so accumulated gradients average over micro-batches
            tc.backward(tc.scale(loss, 1.0 / train_config.accumulate))
            total += loss.item() * len(batch)
            seen += len(batch)
            micro += 1
            if micro % train_config.accumulate == 0:
                lr = tc.noam_rate(opt.step_count + 1, train_config.warmup, train_config.noam_base, config.hidden)
                opt.step(lr)
                opt.zero_grad()
        if micro % train_config.accumulate:
            lr = tc.noam_rate(opt.step_count + 1, train_config.warmup, train_config.noam_base, config.hidden)
            opt.step(lr)
            opt.zero_grad()
            micro = 0
        losses.append(total / seen)
        log.info("epoch %d loss %.4f", epoch, losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
    return TrainResult(model, losses, initial, opt.step_count)


def save_model(directory, model: PointerTransformer, vocab: Vocab, fmt: str, train_config: TrainConfig,
               epochs: int) -> Path:
    meta = {
        "format": fmt,
        "model_config": model.config.to_json(),
        "train_config": asdict(train_config),
        "vocab_hash": vocab.hash(),
        "seed": train_config.seed,
        "epochs": epochs,
    }
    return tc.save_checkpoint(directory, model.state_dict(), meta)


def load_model(directory, vocab: Vocab) -> tuple[PointerTransformer, dict]:
    state, manifest = tc.load_checkpoint(directory)
    if manifest.get("vocab_hash") != vocab.hash():
        raise UsageError("vocabulary does not match the one the checkpoint was trained with")
    model = PointerTransformer(ModelConfig(**manifest["model_config"]), vocab, seed=manifest.get("seed", 0))
    model.load_state_dict(state)
    return model, manifest
