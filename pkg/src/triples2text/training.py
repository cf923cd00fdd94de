"""RMSProp training loop: batching, learning-rate schedule, validation
perplexity, checkpointing, and the JSON Lines training log.

Epochs are numbered from 0. The learning rate decays by ``decay_factor``
every ``decay_period`` of an epoch once the position in epochs reaches
``decay_start_epoch``; a decay instant falling exactly on an epoch
boundary applies after that epoch's boundary record is written, so the
logged boundary value at epoch e >= 3 under the defaults is exactly
0.002 * 0.8^(2*(e-3)), built by repeated multiplication.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import nn
from .decoder import LSTM
from .model import EncodedExample, ModelConfig, Seq2Seq
from .pipeline import AlignedExample
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 85
    max_timestep: int = 66
    learning_rate: float = 0.002
    decay_factor: float = 0.8
    decay_start_epoch: int = 3
    decay_period: Fraction = Fraction(1, 2)  # of an epoch
    epochs: int = 12
    seed: int = 0
    cell_kind: str = LSTM
    m: int = 650
    layers: int = 1
    e_max: int = 22
    l2: float = 1e-5
    clip_norm: float | None = 5.0
    rmsprop_rho: float = 0.95
    rmsprop_eps: float = 1e-8
    patience: int | None = 3  # epochs without validation improvement
    paper_literal_lstm: bool = False
    bucket_by_length: bool = False
    mode: str = "uri"
    bound_lower: int = 0
    bound_upper: int | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch normalisation)")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        self.decay_period = Fraction(self.decay_period)

    def model_config(self) -> ModelConfig:
        return ModelConfig(cell_kind=self.cell_kind, m=self.m, layers=self.layers,
                           e_max=self.e_max, mode=self.mode,
                           paper_literal_lstm=self.paper_literal_lstm,
                           bound_lower=self.bound_lower,
                           bound_upper=self.bound_upper)


@dataclass
class TrainResult:
    best_epoch: int
    best_validation_perplexity: float
    epochs_run: int
    final_cost: float
    checkpoint_path: str | None
    log_path: str | None
    boundary_lrs: list[float] = field(default_factory=list)


def sequence_loss(batch: Sequence[EncodedExample], model: Seq2Seq,
                  max_timestep: int | None = None) -> float:
    """Batch-averaged, time-summed negative log-likelihood (inference mode)."""
    cost, _, _ = model.batch_loss(None, batch, training=False, max_timestep=max_timestep)
    return float(cost.value[0, 0])


def make_batches(examples: Sequence[EncodedExample], batch_size: int,
                 rng: np.random.Generator | None = None,
                 bucket_by_length: bool = False) -> list[list[EncodedExample]]:
    """Cut the (shuffled) examples into batches; single leftover examples
    are dropped because batch normalisation needs two rows.

    bucket_by_length groups similar lengths to cut padding, but it makes
    batch statistics length-conditional, which skews the normalisation
    running averages on small homogeneous corpora; composition is random
    by default.
    """
    order = list(range(len(examples)))
    if rng is not None:
        rng.shuffle(order)
    if bucket_by_length:
        order.sort(key=lambda i: (len(examples[i].target), i))
    batches = []
    for i in range(0, len(order), batch_size):
        chunk = [examples[j] for j in order[i:i + batch_size]]
        if len(chunk) >= 2:
            batches.append(chunk)
        else:
            logger.warning("dropping a leftover batch of 1 example")
    return batches


def validation_perplexity(model: Seq2Seq, valid: Sequence[EncodedExample],
                          max_timestep: int | None = None) -> float:
    nll, count = model.corpus_nll(valid, max_timestep=max_timestep)
    if count == 0:
        raise ValueError("validation corpus has no scoreable tokens")
    return math.exp(nll / count)


def train(corpus: Sequence[AlignedExample], valid: Sequence[AlignedExample],
          cfg: TrainConfig, source_vocab: Vocabulary, target_vocab: Vocabulary,
          out_dir: str | None = None,
          model: Seq2Seq | None = None) -> tuple[Seq2Seq, TrainResult]:
    """Train a model (a fresh one unless given) on the aligned corpus.

    Writes ``train_log.jsonl``, ``checkpoint_best.bin`` and
    ``checkpoint_last.bin`` under out_dir when given. Raises
    TrainingDivergedError (naming epoch and batch) on a non-finite cost.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    if model is None:
        model = Seq2Seq(cfg.model_config(), source_vocab, target_vocab)
        model.init_parameters(cfg.seed)
    params = model.parameters()
    encoded = [model.encode_example(ex) for ex in corpus]
    encoded_valid = [model.encode_example(ex) for ex in valid]

    log_fh = None
    log_path = best_path = last_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "train_log.jsonl")
        best_path = os.path.join(out_dir, "checkpoint_best.bin")
        last_path = os.path.join(out_dir, "checkpoint_last.bin")
        log_fh = open(log_path, "w", encoding="utf-8")

    def log(record: dict) -> None:
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")

    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate
    next_decay = Fraction(cfg.decay_start_epoch)
    best_ppx = math.inf
    best_epoch = -1
    final_cost = math.nan
    boundary_lrs: list[float] = []
    epochs_run = 0

    try:
        for epoch in range(cfg.epochs):
            boundary_lrs.append(lr)
            batches = make_batches(encoded, cfg.batch_size, rng, cfg.bucket_by_length)
            rng.shuffle(batches)
            n_batches = len(batches)
            log({"type": "epoch_start", "epoch": epoch, "lr_boundary": lr,
                 "n_batches": n_batches})
            for b, batch in enumerate(batches):
                # apply every decay instant at or before this batch's start
                while next_decay <= Fraction(epoch) + Fraction(b, max(n_batches, 1)):
                    lr *= cfg.decay_factor
                    next_decay += cfg.decay_period
                tape = nn.Tape()
                nn.zero_grads(params)
                cost, _, _ = model.batch_loss(tape, batch, training=True,
                                              max_timestep=cfg.max_timestep)
                value = float(cost.value[0, 0])
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite training cost at epoch {epoch}, batch {b}")
                tape.backward(cost)
                nn.clip_gradients(params, cfg.clip_norm)
                nn.rmsprop_step(params, lr, cfg.rmsprop_rho, cfg.rmsprop_eps, cfg.l2)
                final_cost = value
                log({"type": "batch", "epoch": epoch, "batch": b,
                     "lr": lr, "cost": value})
            # instants strictly inside the epoch but after the last batch
            # started; one landing exactly on the boundary applies after the
            # next epoch's boundary record instead
            while next_decay < Fraction(epoch + 1):
                lr *= cfg.decay_factor
                next_decay += cfg.decay_period
            epochs_run = epoch + 1
            record = {"type": "epoch", "epoch": epoch, "final_cost": final_cost}
            if encoded_valid:
                ppx = validation_perplexity(model, encoded_valid, cfg.max_timestep)
                record["validation_perplexity"] = ppx
                if ppx < best_ppx:
                    best_ppx = ppx
                    best_epoch = epoch
                    if best_path is not None:
                        model.save(best_path)
                log(record)
                if cfg.patience is not None and epoch - best_epoch > cfg.patience:
                    log({"type": "early_stop", "epoch": epoch, "best_epoch": best_epoch})
                    logger.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                    break
            else:
                log(record)
        if last_path is not None:
            model.save(last_path)
            if best_path is not None and not os.path.exists(best_path):
                model.save(best_path)
    finally:
        if log_fh is not None:
            log_fh.close()

    return model, TrainResult(
        best_epoch=best_epoch,
        best_validation_perplexity=best_ppx,
        epochs_run=epochs_run,
        final_cost=final_cost,
        checkpoint_path=best_path,
        log_path=log_path,
        boundary_lrs=boundary_lrs,
    )


def boundary_lr_schedule(cfg: TrainConfig, epochs: int) -> list[float]:
    """Expected epoch-boundary learning rates, by repeated multiplication."""
    out = []
    lr = cfg.learning_rate
    next_decay = Fraction(cfg.decay_start_epoch)
    for epoch in range(epochs):
        out.append(lr)
        while next_decay < Fraction(epoch + 1):
            lr *= cfg.decay_factor
            next_decay += cfg.decay_period
        # an instant exactly on the boundary decays after the next record
    return out
