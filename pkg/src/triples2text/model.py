"""Full encoder-decoder assembly, example encoding, and checkpoints.

A Seq2Seq owns the triple encoder, the recurrent decoder and the two
dictionaries. Checkpoints use the versioned binary block container from
:mod:`triples2text.nn`; the header records the hyperparameters plus the
content hashes of both dictionaries, and loading refuses a checkpoint
whose hashes or cell kind disagree with what the caller supplies.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import nn
from .decoder import CELL_KINDS, Decoder, DecoderState, LSTM
from .encoder import TripleEncoder
from .pipeline import AlignedExample, CorpusStats, Triple
from .tokens import END, PAD, START
from .vocab import Vocabulary

Array = np.ndarray


class CheckpointMismatchError(ValueError):
    """Checkpoint disagrees with the supplied vocabularies or configuration."""


@dataclass
class ModelConfig:
    cell_kind: str = LSTM
    m: int = 650
    layers: int = 1
    e_max: int = 22
    mode: str = "uri"
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    use_batch_norm: bool = True
    paper_literal_lstm: bool = False  # sigmoid cell candidate instead of tanh
    bound_lower: int = 0
    bound_upper: int | None = None


@dataclass
class EncodedExample:
    triples: list[tuple[int, int, int]]
    target: list[int]  # <start> ... <end>, in target indices


class Seq2Seq:

    def __init__(self, config: ModelConfig, source_vocab: Vocabulary, target_vocab: Vocabulary):
        if config.cell_kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {config.cell_kind!r}")
        self.config = config
        self.source_vocab = source_vocab
        self.target_vocab = target_vocab
        self.encoder = TripleEncoder(len(source_vocab), config.m, config.e_max,
                                     config.bn_momentum, config.bn_eps,
                                     config.use_batch_norm)
        self.decoder = Decoder(len(target_vocab), config.m, config.layers,
                               config.cell_kind, pad_index=target_vocab.index[PAD],
                               literal_sigmoid_candidate=config.paper_literal_lstm)
        self.pad_index = target_vocab.index[PAD]
        self.start_index = target_vocab.index[START]
        self.end_index = target_vocab.index[END]

    def parameters(self) -> list[nn.Parameter]:
        return self.encoder.parameters() + self.decoder.parameters()

    def batch_norms(self) -> list[nn.BatchNorm]:
        return self.encoder.batch_norms()

    def init_parameters(self, seed: int, low: float = -0.001, high: float = 0.001) -> None:
        """Uniform initialisation of weights and biases; batch-norm scale/shift
        keep their 1/0 identity initialisation so early activations stay at
        unit scale."""
        bn_params = {id(p) for bn in self.batch_norms() for p in bn.parameters()}
        nn.init_uniform([p for p in self.parameters() if id(p) not in bn_params],
                        low, high, seed)

    # -- example encoding ---------------------------------------------

    def encode_example(self, example: AlignedExample) -> EncodedExample:
        """Map a pipeline example onto vocabulary indices.

        Triples whose predicate is out of the source dictionary are
        discarded here; subjects and objects resolve through the source
        fallback chain.
        """
        sv = self.source_vocab
        triples = []
        for t in example.triples:
            if t.predicate not in sv.index:
                continue  # rare predicate: triple marked for discard
            triples.append((sv.encode(t.subject), sv.index[t.predicate], sv.encode(t.object)))
        triples = triples[:self.config.e_max]
        target = [self.target_vocab.encode(tok.text) for tok in example.summary_tokens]
        return EncodedExample(triples=triples, target=target)

    def encode_triple_set(self, triples: Sequence[Triple]) -> list[tuple[int, int, int]]:
        sv = self.source_vocab
        out = []
        for t in triples:
            if t.predicate not in sv.index:
                continue
            out.append((sv.encode(t.subject), sv.index[t.predicate], sv.encode(t.object)))
        return out

    # -- forward passes -----------------------------------------------

    def batch_loss(self, tape: nn.Tape | None,
                   batch: Sequence[EncodedExample], training: bool,
                   max_timestep: int | None = None,
                   update_running: bool = True) -> tuple[nn.Node, float, int]:
        """Teacher-forced sequence cost over one padded batch.

        Returns (cost node, total negative log-likelihood, predicted token
        count). The cost is the per-example sum of token losses averaged
        over the batch; <start> is input only, <end> is predicted, padding
        is weighted out.
        """
        if not batch:
            raise ValueError("empty batch")
        h0 = self.encoder.encode_batch(tape, [ex.triples for ex in batch],
                                       training, update_running)
        state = self.decoder.initial_state(h0)
        steps = max(len(ex.target) for ex in batch) - 1
        if max_timestep is not None:
            steps = min(steps, max_timestep)
        b = len(batch)
        inputs = np.full((b, steps), self.pad_index, dtype=int)
        targets = np.full((b, steps), self.pad_index, dtype=int)
        weights = np.zeros((b, steps))
        for i, ex in enumerate(batch):
            seq = ex.target
            n = min(len(seq) - 1, steps)
            inputs[i, :n] = seq[:n]
            targets[i, :n] = seq[1:n + 1]
            weights[i, :n] = 1.0
        weights[targets == self.pad_index] = 0.0  # appended padding is never predicted
        total = None
        total_nll = 0.0
        for t in range(steps):
            state, top = self.decoder.step(tape, inputs[:, t], state)
            logits = self.decoder.logits(tape, top)
            nll, _ = nn.masked_softmax_nll(tape, logits, targets[:, t], weights[:, t],
                                           [self.pad_index])
            total_nll += float(nll.value.sum())
            total = nll if total is None else nn.add(tape, total, nll)
        cost = nn.scale_shift(tape, nn.sum_all(tape, total), 1.0 / b)
        return cost, total_nll, int(weights.sum())

    def corpus_nll(self, examples: Sequence[EncodedExample], batch_size: int = 32,
                   max_timestep: int | None = None) -> tuple[float, int]:
        """Inference-mode total negative log-likelihood and token count."""
        total, count = 0.0, 0
        for i in range(0, len(examples), batch_size):
            chunk = examples[i:i + batch_size]
            _, nll, n = self.batch_loss(None, chunk, training=False,
                                        max_timestep=max_timestep)
            total += nll
            count += n
        return total, count

    def init_generation(self, triples: Sequence[tuple[int, int, int]]) -> DecoderState:
        """Decoder state from one triple set (inference batch-norm path)."""
        h0 = self.encoder.encode_batch(None, [list(triples)], training=False)
        return self.decoder.initial_state(h0)

    # -- persistence ----------------------------------------------------

    def _header(self) -> dict:
        head = asdict(self.config)
        head["source_vocab_sha256"] = self.source_vocab.content_hash()
        head["target_vocab_sha256"] = self.target_vocab.content_hash()
        head["source_vocab_size"] = len(self.source_vocab)
        head["target_vocab_size"] = len(self.target_vocab)
        return head

    def save(self, path: str) -> None:
        blocks = [(p.name, p.value) for p in self.parameters()]
        for bn in self.batch_norms():
            blocks.extend(bn.state_blocks())
        nn.write_blocks(path, self._header(), blocks)

    @classmethod
    def load(cls, path: str, source_vocab: Vocabulary, target_vocab: Vocabulary,
             expect_cell: str | None = None) -> "Seq2Seq":
        header, blocks = nn.read_blocks(path)
        if header.get("source_vocab_sha256") != source_vocab.content_hash():
            raise CheckpointMismatchError(f"{path}: source vocabulary hash mismatch")
        if header.get("target_vocab_sha256") != target_vocab.content_hash():
            raise CheckpointMismatchError(f"{path}: target vocabulary hash mismatch")
        if expect_cell is not None and header["cell_kind"] != expect_cell:
            raise CheckpointMismatchError(
                f"{path}: checkpoint holds a {header['cell_kind']} decoder, not {expect_cell}")
        cfg_fields = {f for f in ModelConfig.__dataclass_fields__}
        config = ModelConfig(**{k: v for k, v in header.items() if k in cfg_fields})
        model = cls(config, source_vocab, target_vocab)
        for p in model.parameters():
            if p.name not in blocks:
                raise nn.BadCheckpointError(f"{path}: missing parameter block {p.name}")
            if blocks[p.name].shape != p.value.shape:
                raise nn.BadCheckpointError(
                    f"{path}: block {p.name} has shape {blocks[p.name].shape}, "
                    f"expected {p.value.shape}")
            p.value[...] = blocks[p.name]
        for bn in model.batch_norms():
            for name, arr in bn.state_blocks():
                if name not in blocks:
                    raise nn.BadCheckpointError(f"{path}: missing state block {name}")
                arr[...] = blocks[name]
        return model


def stats_bounds(stats: CorpusStats) -> tuple[int, int]:
    return stats.lower_bound(), stats.upper_bound()
