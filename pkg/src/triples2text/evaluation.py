"""Automatic evaluation: perplexity, corpus BLEU 1-4, ROUGE-L, the random
retrieval and 5-gram Kneser-Ney baselines, the BLEU-4 curve over triple
counts, and embedding nearest neighbours.

BLEU is corpus-level clipped n-gram precision with uniform weights and
the brevity penalty exp(min(0, 1 - r/c)); no smoothing. ROUGE-L is the
longest-common-subsequence F measure with beta = 1.2, averaged over
pairs. Both run on tokenized post-processed final text. Scores land in
[0, 100].
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .generation import Scorer, beam_search, postprocess
from .model import Seq2Seq
from .pipeline import AlignedExample
from .tokens import END, START

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# metrics


def perplexity(model: Seq2Seq, examples: Sequence[AlignedExample],
               max_timestep: int | None = None) -> float:
    """exp(total NLL of gold tokens / number of predicted tokens)."""
    if not examples:
        raise ValueError("empty corpus")
    encoded = [model.encode_example(ex) for ex in examples]
    nll, count = model.corpus_nll(encoded, max_timestep=max_timestep)
    if count == 0:
        raise ValueError("corpus has no scoreable tokens")
    return math.exp(nll / count)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
           n: int) -> float:
    """Corpus-level BLEU-n (single reference per candidate), in [0, 100]."""
    if not 1 <= n <= 4:
        raise ValueError(f"BLEU order must be in [1, 4], got {n}")
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    matched = [0] * n
    total = [0] * n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for k in range(1, n + 1):
            cc = _ngram_counts(cand, k)
            rc = _ngram_counts(ref, k)
            matched[k - 1] += sum(min(c, rc.get(g, 0)) for g, c in cc.items())
            total[k - 1] += max(len(cand) - k + 1, 0)
    if cand_len == 0:
        return 0.0
    if any(t == 0 or m == 0 for m, t in zip(matched, total)):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matched, total)) / n
    brevity = math.exp(min(0.0, 1.0 - ref_len / cand_len))
    return 100.0 * brevity * math.exp(log_precision)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
            beta: float = 1.2) -> float:
    """Mean LCS-based F measure over pairs, in [0, 100].

    Pairs with an empty reference are skipped (and counted in the log).
    """
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    scores = []
    skipped = 0
    for cand, ref in zip(candidates, references):
        if not ref:
            skipped += 1
            continue
        if not cand:
            scores.append(0.0)
            continue
        ell = _lcs_length(cand, ref)
        r = ell / len(ref)
        p = ell / len(cand)
        if r == 0.0 and p == 0.0:
            scores.append(0.0)
            continue
        scores.append((1 + beta * beta) * r * p / (r + beta * beta * p))
    if skipped:
        logger.warning("rouge_l: skipped %d pairs with empty references", skipped)
    if not scores:
        return 0.0
    return 100.0 * sum(scores) / len(scores)


@dataclass
class MetricReport:
    perplexity: float | None
    bleu: dict[int, float]
    rouge_l: float
    n_evaluated: int
    bleu4_by_triple_count: dict[int, tuple[float, int]] = field(default_factory=dict)
    stddev: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "perplexity": self.perplexity,
            "bleu": {str(k): v for k, v in sorted(self.bleu.items())},
            "rouge_l": self.rouge_l,
            "n_evaluated": self.n_evaluated,
            "bleu4_by_triple_count": {str(k): {"bleu4": v[0], "size": v[1]}
                                      for k, v in sorted(self.bleu4_by_triple_count.items())},
            "stddev": self.stddev,
        }, indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = []
        if self.perplexity is not None:
            rows.append(("Perplexity", f"{self.perplexity:.3f}"))
        for k in sorted(self.bleu):
            sd = self.stddev.get(f"bleu{k}")
            val = f"{self.bleu[k]:.3f}" + (f" (+/- {sd:.3f})" if sd is not None else "")
            rows.append((f"BLEU {k}", val))
        sd = self.stddev.get("rouge_l")
        rows.append(("ROUGE-L", f"{self.rouge_l:.3f}" + (f" (+/- {sd:.3f})" if sd is not None else "")))
        rows.append(("Examples", str(self.n_evaluated)))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {val}" for name, val in rows)

    def curve_csv(self) -> str:
        lines = ["triple_count,bleu4"]
        for k in sorted(self.bleu4_by_triple_count):
            lines.append(f"{k},{self.bleu4_by_triple_count[k][0]:.6f}")
        return "\n".join(lines) + "\n"


def score_pairs(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                perplexity_value: float | None = None) -> MetricReport:
    return MetricReport(
        perplexity=perplexity_value,
        bleu={k: bleu_n(candidates, references, k) for k in (1, 2, 3, 4)},
        rouge_l=rouge_l(candidates, references),
        n_evaluated=len(candidates),
    )


def bleu_by_triple_count(pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
                         triple_counts: Sequence[int]) -> dict[int, tuple[float, int]]:
    """Group candidate/reference pairs by input triple count; BLEU-4 and
    group size per occupied count."""
    if len(pairs) != len(triple_counts):
        raise ValueError("pair/count length mismatch")
    groups: dict[int, list[tuple[Sequence[str], Sequence[str]]]] = {}
    for pair, count in zip(pairs, triple_counts):
        groups.setdefault(count, []).append(pair)
    out = {}
    for count, members in sorted(groups.items()):
        cands = [m[0] for m in members]
        refs = [m[1] for m in members]
        out[count] = (bleu_n(cands, refs, 4), len(members))
    return out


# ---------------------------------------------------------------------------
# random-retrieval baseline


def reference_final(example: AlignedExample) -> list[str]:
    """The empirical summary as final-text tokens (numbers normalised);
    references keep their own written surfaces."""
    return list(example.reference_tokens)


def item_surface_for(example: AlignedExample, lexicon: Mapping[str, str]) -> str:
    from .generation import prettify_uri
    return lexicon.get(example.main_entity) or prettify_uri(example.main_entity)


def random_baseline(train_examples: Sequence[AlignedExample],
                    eval_examples: Sequence[AlignedExample],
                    lexicon: Mapping[str, str],
                    types: Mapping[str, str] | None = None,
                    samples: int = 10, seed: int = 0) -> MetricReport:
    """Answer every evaluation input with a uniformly sampled training
    summary, resolve its placeholders against the input triples, score,
    and repeat; reports mean and standard deviation over the rounds."""
    if not train_examples:
        raise ValueError("empty training set")
    if not eval_examples:
        raise ValueError("empty evaluation set")
    rng = np.random.default_rng(seed)
    references = [reference_final(ex) for ex in eval_examples]
    rounds: list[dict[str, float]] = []
    for _ in range(samples):
        cands = []
        for ex in eval_examples:
            pick = train_examples[int(rng.integers(len(train_examples)))]
            toks = [t.text for t in pick.summary_tokens]
            final_tokens, _ = postprocess(toks, ex.triples, lexicon,
                                          item_surface_for(ex, lexicon),
                                          types, pick.mode)
            cands.append(final_tokens)
        rounds.append({
            **{f"bleu{k}": bleu_n(cands, references, k) for k in (1, 2, 3, 4)},
            "rouge_l": rouge_l(cands, references),
        })
    mean = {k: sum(r[k] for r in rounds) / len(rounds) for k in rounds[0]}
    std = {k: float(np.std([r[k] for r in rounds])) for k in rounds[0]}
    return MetricReport(
        perplexity=None,
        bleu={k: mean[f"bleu{k}"] for k in (1, 2, 3, 4)},
        rouge_l=mean["rouge_l"],
        n_evaluated=len(eval_examples),
        stddev=std,
    )


def unigram_perplexity(train_examples: Sequence[AlignedExample],
                       eval_examples: Sequence[AlignedExample]) -> float:
    """Perplexity proxy for the retrieval baseline: the training-set
    unigram distribution (add-one smoothed) scored on the evaluation
    summaries. Retrieval assigns no sequence likelihood of its own, so
    this is the weakest language model its training data implies."""
    counts: Counter[str] = Counter()
    for ex in train_examples:
        counts.update(t.text for t in ex.summary_tokens if t.text != START)
    total = sum(counts.values())
    vocab = len(counts) + 1
    nll = 0.0
    n = 0
    for ex in eval_examples:
        for t in ex.summary_tokens:
            if t.text == START:
                continue
            p = (counts.get(t.text, 0) + 1) / (total + vocab)
            nll -= math.log(p)
            n += 1
    return math.exp(nll / n)


# ---------------------------------------------------------------------------
# Kneser-Ney n-gram baseline


@dataclass
class KNModel:
    """Interpolated Kneser-Ney model of order n.

    The top order uses raw counts; lower orders use continuation counts.
    Each order k has one discount D_k = n1/(n1 + 2*n2) estimated from its
    count-of-counts, falling back to 0.75 (with a warning) when n2 = 0.
    The unigram level interpolates with the uniform distribution, so no
    in-vocabulary token ever scores zero.
    """
    n: int
    vocab: list[str]
    vocab_index: dict[str, int]
    counts: list[dict[tuple[str, ...], Counter]]  # [order-1][history] -> token counts
    discounts: list[float]

    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def train(cls, summaries: Sequence[Sequence[str]], n: int = 5) -> "KNModel":
        if n < 1:
            raise ValueError("order must be >= 1")
        seqs = []
        for s in summaries:
            seq = list(s)
            if not seq or seq[0] != START:
                seq = [START] + seq
            if seq[-1] != END:
                seq = seq + [END]
            seqs.append(seq)
        raw: list[dict[tuple[str, ...], Counter]] = [dict() for _ in range(n)]
        for seq in seqs:
            for k in range(1, n + 1):
                for i in range(len(seq) - k + 1):
                    hist = tuple(seq[i:i + k - 1])
                    w = seq[i + k - 1]
                    if w == START:
                        continue  # <start> is context only, never predicted
                    raw[k - 1].setdefault(hist, Counter())[w] += 1

        counts: list[dict[tuple[str, ...], Counter]] = [dict() for _ in range(n)]
        counts[n - 1] = raw[n - 1]
        # continuation counts: number of distinct left extensions; histories
        # anchored at <start> cannot be extended left, so they keep their raw
        # counts at every order
        for k in range(n - 1, 0, -1):
            cont: dict[tuple[str, ...], Counter] = {}
            for hist, words in raw[k].items():
                sub = hist[1:]
                for w in words:
                    cont.setdefault(sub, Counter())[w] += 1
            for hist, words in raw[k - 1].items():
                if hist and hist[0] == START:
                    cont[hist] = words.copy()
            counts[k - 1] = cont

        vocab = sorted({w for seq in seqs for w in seq if w != START})
        discounts = []
        for k in range(n):
            cofc = Counter()
            for words in counts[k].values():
                for c in words.values():
                    cofc[c] += 1
            n1, n2 = cofc.get(1, 0), cofc.get(2, 0)
            if n2 == 0:
                logger.warning("KN order %d: count-of-counts too sparse (n2=0); "
                               "falling back to discount 0.75", k + 1)
                discounts.append(0.75)
            else:
                discounts.append(n1 / (n1 + 2 * n2))
        return cls(n=n, vocab=vocab, vocab_index={w: i for i, w in enumerate(vocab)},
                   counts=counts, discounts=discounts)

    def _order_probs(self, history: tuple[str, ...], order: int) -> np.ndarray:
        v = len(self.vocab)
        if order == 1:
            table = self.counts[0].get((), Counter())
            d = self.discounts[0]
            total = sum(table.values())
            base = np.full(v, 1.0 / v)
            if total == 0:
                return base
            vec = np.zeros(v)
            kinds = len(table)
            for w, c in table.items():
                vec[self.vocab_index[w]] = max(c - d, 0.0)
            return vec / total + (d * kinds / total) * base
        lower = self._probs(history[1:], order - 1)
        table = self.counts[order - 1].get(history)
        if not table:
            return lower
        d = self.discounts[order - 1]
        total = sum(table.values())
        vec = np.zeros(v)
        for w, c in table.items():
            vec[self.vocab_index[w]] = max(c - d, 0.0)
        return vec / total + (d * len(table) / total) * lower

    def _probs(self, history: tuple[str, ...], order: int) -> np.ndarray:
        key = (history, order)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._order_probs(history, order)
            self._cache[key] = hit
        return hit

    def conditional(self, history: Sequence[str]) -> np.ndarray:
        """p(. | history) over the model vocabulary, summing to one."""
        hist = tuple(history)[-(self.n - 1):] if self.n > 1 else ()
        return self._probs(hist, min(len(hist) + 1, self.n))

    def log_prob(self, token: str, history: Sequence[str]) -> float:
        p = self.conditional(history)[self.vocab_index[token]]
        return math.log(p)


def kn_train(summaries: Sequence[Sequence[str]], n: int = 5) -> KNModel:
    return KNModel.train(summaries, n)


class KNScorer(Scorer):
    """Beam scorer over a Kneser-Ney model; state is the recent history."""

    def __init__(self, kn: KNModel):
        self.kn = kn

    def _logp(self, history: tuple[str, ...]) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.kn.conditional(history))

    def start(self):
        hist = (START,)
        return hist, self._logp(hist)

    def step(self, states, tokens):
        out_states = []
        logps = []
        for hist, tok in zip(states, tokens):
            new = (hist + (self.kn.vocab[tok],))[-(self.kn.n - 1):] if self.kn.n > 1 else ()
            out_states.append(new)
            logps.append(self._logp(new))
        return out_states, np.stack(logps)


def kn_generate(kn: KNModel, beam_width: int = 10, t_max: int = 80) -> list[list[str]]:
    """Unconditional beam search from <start>; ranked token sequences."""
    if END not in kn.vocab_index:
        raise ValueError("model was trained without <end> tokens")
    hyps = beam_search(KNScorer(kn), beam_width, t_max, kn.vocab_index[END])
    return [[kn.vocab[i] for i in h.tokens] for h in hyps]


def kn_baseline(train_examples: Sequence[AlignedExample],
                eval_examples: Sequence[AlignedExample],
                lexicon: Mapping[str, str],
                types: Mapping[str, str] | None = None,
                n: int = 5, beam_width: int = 10, t_max: int = 80) -> MetricReport:
    """Generate the beam's best unconditional summary once, then resolve
    it against each input's triples."""
    kn = kn_train([[t.text for t in ex.summary_tokens] for ex in train_examples], n)
    ranked = kn_generate(kn, beam_width, t_max)
    if not ranked:
        raise ValueError("Kneser-Ney beam produced no complete summary")
    best = ranked[0]
    references = [reference_final(ex) for ex in eval_examples]
    cands = []
    for ex in eval_examples:
        final_tokens, _ = postprocess(best, ex.triples, lexicon,
                                      item_surface_for(ex, lexicon),
                                      types, train_examples[0].mode)
        cands.append(final_tokens)
    report = score_pairs(cands, references)
    return report


# ---------------------------------------------------------------------------
# embedding neighbours


def nearest_neighbors(model: Seq2Seq, token: str, k: int) -> list[tuple[str, float]]:
    """Source-vocabulary entity tokens ranked by cosine similarity to the
    query token's encoder embedding (query excluded; ties by index)."""
    sv = model.source_vocab
    if token not in sv.index:
        raise ValueError(f"token {token!r} is not in the source vocabulary")
    emb = model.encoder.embedding_rows()
    q = emb[sv.index[token]]
    qn = np.linalg.norm(q)
    scored = []
    for cand in sv.tokens:
        if cand == token or cand not in sv.entity_tokens:
            continue
        v = emb[sv.index[cand]]
        denom = qn * np.linalg.norm(v)
        sim = float(q @ v / denom) if denom > 0 else -math.inf
        scored.append((cand, sim))
    scored.sort(key=lambda cs: (-cs[1], sv.index[cs[0]]))
    return scored[:k]
