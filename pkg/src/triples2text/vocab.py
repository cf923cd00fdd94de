"""Source and target dictionaries with frequency-threshold construction.

Both dictionaries start with the nine special tokens at fixed smallest
indices. The target dictionary keeps the most frequent words and entity
tokens up to a size cap, plus every placeholder and instance-type token
the rewriting stage emitted (they must stay encodable). The source
dictionary is shared by subjects, predicates and objects, keeps tokens
above an occurrence threshold, and resolves each rare entity to its
instance-type token when that type is frequent enough, to ``<resource>``
when it is not, and to ``<unk>`` when the entity has no known type.

File format: a single header line carrying the version and the special
token list, then one ``token<TAB>count`` line per token in index order.
Source dictionaries write a JSON sidecar (``<path>.meta.json``) with the
rare-entity fallback map and the set of tokens seen in entity position.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .tokens import RARE, RESOURCE, SPECIAL_TOKENS, UNK

_FORMAT = "triples2text-vocab"
_VERSION = "1"

KIND_WORD = "word"
KIND_ENTITY = "entity_uri"
KIND_TUPLE = "surface_tuple"
KIND_PLACEHOLDER = "placeholder"
KIND_INSTANCE_TYPE = "instance_type"
KIND_SPECIAL = "special"

_BASE_KINDS = (KIND_WORD, KIND_ENTITY, KIND_TUPLE)
_STRUCTURAL_KINDS = (KIND_PLACEHOLDER, KIND_INSTANCE_TYPE)


@dataclass
class Vocabulary:
    kind: str  # "target" or "source"
    tokens: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)
    frequencies: dict[str, int] = field(default_factory=dict)
    fallbacks: dict[str, str] = field(default_factory=dict)
    entity_tokens: set[str] = field(default_factory=set)

    specials = SPECIAL_TOKENS

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def encode(self, token: str) -> int:
        """Index of token; unknowns fall back per the dictionary kind.

        Target: unknown tokens map to <rare>. Source: a known rare entity
        maps to its recorded replacement (instance type, <resource> or
        <unk>); anything never seen maps to <unk>.
        """
        idx = self.index.get(token)
        if idx is not None:
            return idx
        if self.kind == "source":
            repl = self.fallbacks.get(token, UNK)
            return self.index[repl]
        return self.index[RARE]

    def decode(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise ValueError(f"index {idx} outside [0, {len(self.tokens)})")
        return self.tokens[idx]

    # -- construction -------------------------------------------------

    @classmethod
    def _with_specials(cls, kind: str) -> "Vocabulary":
        v = cls(kind=kind)
        for tok in SPECIAL_TOKENS:
            v.index[tok] = len(v.tokens)
            v.tokens.append(tok)
            v.frequencies[tok] = 0
        return v

    def _append(self, token: str, count: int) -> None:
        if "\t" in token or "\n" in token:
            raise ValueError(f"token contains tab/newline: {token!r}")
        if token in self.index:
            return
        self.index[token] = len(self.tokens)
        self.tokens.append(token)
        self.frequencies[token] = count

    # -- serialisation ------------------------------------------------

    def to_bytes(self) -> tuple[bytes, bytes | None]:
        lines = ["\t".join([_FORMAT, _VERSION, self.kind, ",".join(SPECIAL_TOKENS)])]
        lines += [f"{tok}\t{self.frequencies.get(tok, 0)}" for tok in self.tokens]
        main = ("\n".join(lines) + "\n").encode("utf-8")
        meta = None
        if self.kind == "source":
            meta = json.dumps(
                {"fallbacks": self.fallbacks, "entity_tokens": sorted(self.entity_tokens)},
                sort_keys=True).encode("utf-8")
        return main, meta

    def content_hash(self) -> str:
        main, meta = self.to_bytes()
        h = hashlib.sha256(main)
        if meta is not None:
            h.update(b"\0")
            h.update(meta)
        return h.hexdigest()

    def save(self, path: str) -> None:
        main, meta = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(main)
        if meta is not None:
            with open(path + ".meta.json", "wb") as fh:
                fh.write(meta)

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise ValueError(f"{path}: empty vocabulary file")
        head = lines[0].split("\t")
        if len(head) != 4 or head[0] != _FORMAT:
            raise ValueError(f"{path}: not a vocabulary file")
        if head[1] != _VERSION:
            raise ValueError(f"{path}: unsupported vocabulary version {head[1]}")
        v = cls(kind=head[2])
        expected_specials = tuple(head[3].split(","))
        if expected_specials != SPECIAL_TOKENS:
            raise ValueError(f"{path}: special-token list mismatch")
        for ln in lines[1:]:
            if not ln:
                continue
            tok, count = ln.rsplit("\t", 1)
            v._append(tok, int(count))
        for tok in SPECIAL_TOKENS:
            if v.index.get(tok, -1) != SPECIAL_TOKENS.index(tok):
                raise ValueError(f"{path}: special token {tok} not at its fixed index")
        meta_path = path + ".meta.json"
        if v.kind == "source" and os.path.exists(meta_path):
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
            v.fallbacks = dict(meta.get("fallbacks", {}))
            v.entity_tokens = set(meta.get("entity_tokens", []))
        return v


def build_target_vocab(corpus: Iterable, max_size: int, min_count: int = 1) -> Vocabulary:
    """Target dictionary over a rewritten corpus.

    Words and entity tokens (URIs or surface-form tuples) compete for the
    ``max_size`` most frequent slots; count ties break lexicographically.
    Placeholder and instance-type tokens are always included on top of the
    cap. All non-special tokens are laid out in frequency order.
    """
    if max_size <= 0:
        raise ValueError("max_size must be positive")
    counts: Counter[str] = Counter()
    structural: set[str] = set()
    special_counts: Counter[str] = Counter()
    for example in corpus:
        for tok in example.summary_tokens:
            if tok.kind == KIND_SPECIAL:
                special_counts[tok.text] += 1
            elif tok.kind in _STRUCTURAL_KINDS:
                structural.add(tok.text)
                counts[tok.text] += 1
            else:
                counts[tok.text] += 1
    base_pool = [(t, c) for t, c in counts.items()
                 if t not in structural and c >= min_count]
    base_pool.sort(key=lambda tc: (-tc[1], tc[0]))
    members = {t for t, _ in base_pool[:max_size]} | structural
    v = Vocabulary._with_specials("target")
    for tok in special_counts:
        if tok in v.frequencies:
            v.frequencies[tok] = special_counts[tok]
    for tok in sorted(members, key=lambda t: (-counts[t], t)):
        v._append(tok, counts[tok])
    return v


def build_source_vocab(corpus: Iterable, min_count: int = 20) -> Vocabulary:
    """Shared subject/predicate/object dictionary with rare-token fallbacks.

    Tokens occurring at least ``min_count`` times are kept. Each rare
    entity resolves to its most frequent instance-type tag; a type whose
    induced occurrence total also stays under the threshold resolves to
    <resource> instead, and untyped rare entities to <unk>. Triples whose
    predicate is out of vocabulary carry no fallback: they are the ones
    marked for discard at encoding time.
    """
    counts: Counter[str] = Counter()
    entity_roles: set[str] = set()
    predicate_roles: set[str] = set()
    type_of: dict[str, Counter] = {}
    for example in corpus:
        for t in example.triples:
            counts[t.subject] += 1
            counts[t.predicate] += 1
            counts[t.object] += 1
            entity_roles.add(t.subject)
            entity_roles.add(t.object)
            predicate_roles.add(t.predicate)
            if t.subject_type:
                type_of.setdefault(t.subject, Counter())[t.subject_type] += 1
            if t.object_type:
                type_of.setdefault(t.object, Counter())[t.object_type] += 1

    kept = {t: c for t, c in counts.items()
            if c >= min_count and t not in SPECIAL_TOKENS}

    # resolve rare entities: induced counts decide which type tokens join
    rare_entities = [t for t in counts
                     if t not in kept and t not in SPECIAL_TOKENS and t in entity_roles
                     and t not in predicate_roles]
    induced: Counter[str] = Counter()
    picked_type: dict[str, str | None] = {}
    for ent in rare_entities:
        tags = type_of.get(ent)
        if not tags:
            picked_type[ent] = None
            continue
        tag = min(tags.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        picked_type[ent] = tag
        induced[tag] += counts[ent]

    type_members = {tag for tag, c in induced.items()
                    if c >= min_count or tag in kept}
    freq: dict[str, int] = dict(kept)
    for tag in type_members:
        freq[tag] = freq.get(tag, 0) + induced.get(tag, 0)

    v = Vocabulary._with_specials("source")
    for t in SPECIAL_TOKENS:
        if counts.get(t):
            v.frequencies[t] = counts[t]
    for tok in sorted(freq, key=lambda t: (-freq[t], t)):
        v._append(tok, freq[tok])

    for ent in rare_entities:
        tag = picked_type[ent]
        if tag is None:
            v.fallbacks[ent] = UNK
        elif tag in type_members:
            v.fallbacks[ent] = tag
        else:
            v.fallbacks[ent] = RESOURCE

    v.entity_tokens = {t for t in v.tokens if t in entity_roles}
    v.entity_tokens |= type_members
    return v
