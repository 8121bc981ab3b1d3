"""Token vocabularies, sequences, and count-preserving hypothesis multisets.

Tokens are interned to integer indices once at ingestion; everything downstream
operates on indices.  All types here are immutable after construction and safe
for unrestricted concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ConfigurationError, DataError

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token-string <-> index mapping with reserved bos/eos indices."""

    tokens: tuple[str, ...]
    bos_id: int
    eos_id: int
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigurationError("vocabulary tokens must be unique")
        n = len(self.tokens)
        for name, idx in (("bos_id", self.bos_id), ("eos_id", self.eos_id)):
            if not 0 <= idx < n:
                raise ConfigurationError(f"{name}={idx} out of range for {n} tokens")
        if self.bos_id == self.eos_id:
            raise ConfigurationError("bos_id and eos_id must differ")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def build(cls, content_tokens: Iterable[str], bos: str = BOS_TOKEN, eos: str = EOS_TOKEN) -> "Vocabulary":
        """Build a vocabulary with bos/eos prepended to the given content tokens."""
        content = tuple(content_tokens)
        if bos in content or eos in content:
            raise ConfigurationError("reserved tokens may not appear among content tokens")
        return cls(tokens=(bos, eos) + content, bos_id=0, eos_id=1)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def content_ids(self) -> tuple[int, ...]:
        """Indices of all non-reserved tokens, in vocabulary order."""
        return tuple(i for i in range(len(self.tokens)) if i not in (self.bos_id, self.eos_id))

    def id_of(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise DataError(f"unknown token {token!r}") from None

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, tokens: Sequence[str]) -> "TokenSequence":
        return TokenSequence(tuple(self.id_of(t) for t in tokens))

    def render(self, seq: "TokenSequence") -> str:
        return " ".join(self.tokens[i] for i in seq.ids)


@dataclass(frozen=True)
class TokenSequence:
    """An interned token-id sequence, logically terminated by eos (not stored)."""

    ids: tuple[int, ...] = ()

    @property
    def length(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)


EMPTY_SEQUENCE = TokenSequence(())


@dataclass(frozen=True)
class Hypothesis:
    """One distinct output string with its multiplicity among the draws.

    ``weight`` counts how many draws produced this surface string; it is never
    silently collapsed.  ``logprob`` is the natural-log sequence probability
    under the generating distribution, including the terminal eos step.
    ``truncated`` marks sequences that hit the generation length cap.
    """

    seq: TokenSequence
    model_tag: Optional[str] = None
    logprob: Optional[float] = None
    weight: int = 1
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.weight < 1:
            raise ConfigurationError(f"hypothesis weight must be >= 1, got {self.weight}")
        if self.logprob is not None and self.logprob > 0.0:
            raise ConfigurationError(f"hypothesis logprob must be <= 0, got {self.logprob}")


@dataclass(frozen=True)
class HypothesisCollection:
    """A count-preserving multiset of hypotheses tied to one vocabulary.

    ``kind`` is ``"single-model"`` for a set drawn from one generator and
    ``"union"`` for the disjoint union of several such sets.
    """

    vocab: Vocabulary
    items: tuple[Hypothesis, ...]
    kind: str = "single-model"

    def __post_init__(self) -> None:
        if self.kind not in ("single-model", "union"):
            raise ConfigurationError(f"unknown collection kind {self.kind!r}")
        if self.kind == "single-model" and len(self.source_tags) > 1:
            raise ConfigurationError("single-model collection holds hypotheses from several models")
        reserved = (self.vocab.bos_id, self.vocab.eos_id)
        n = len(self.vocab)
        for hyp in self.items:
            for i in hyp.seq.ids:
                if not 0 <= i < n or i in reserved:
                    raise ConfigurationError(f"token id {i} invalid for this vocabulary")

    @property
    def source_tags(self) -> frozenset:
        return frozenset(h.model_tag for h in self.items)

    @property
    def total_count(self) -> int:
        """Number of draws represented (sum of weights)."""
        return sum(h.weight for h in self.items)

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def from_counts(
        cls,
        vocab: Vocabulary,
        counted: Sequence[tuple[TokenSequence, int]],
        model_tag: Optional[str] = None,
        kind: str = "single-model",
    ) -> "HypothesisCollection":
        items = tuple(Hypothesis(seq=s, model_tag=model_tag, weight=c) for s, c in counted)
        return cls(vocab=vocab, items=items, kind=kind)


def union_preserving_counts(collections: Sequence[HypothesisCollection]) -> HypothesisCollection:
    """Disjoint union of hypothesis sets; every multiplicity is preserved.

    The result's total count is the sum of the inputs' total counts.  Inputs
    must share one vocabulary.
    """
    if not collections:
        raise ConfigurationError("union requires at least one collection")
    vocab = collections[0].vocab
    for c in collections[1:]:
        if c.vocab != vocab:
            raise ConfigurationError("collections do not share a vocabulary")
    items: list[Hypothesis] = []
    for c in collections:
        items.extend(c.items)
    return HypothesisCollection(vocab=vocab, items=tuple(items), kind="union")


def collapse_to_counted_strings(
    collection: HypothesisCollection,
) -> list[tuple[TokenSequence, int, dict[Optional[str], int]]]:
    """Group by surface string, keeping total and per-model counts.

    Grouping ignores model tags and logprobs; order follows first occurrence.
    """
    order: list[TokenSequence] = []
    totals: dict[TokenSequence, int] = {}
    per_model: dict[TokenSequence, dict[Optional[str], int]] = {}
    for hyp in collection.items:
        if hyp.seq not in totals:
            order.append(hyp.seq)
            totals[hyp.seq] = 0
            per_model[hyp.seq] = {}
        totals[hyp.seq] += hyp.weight
        tags = per_model[hyp.seq]
        tags[hyp.model_tag] = tags.get(hyp.model_tag, 0) + hyp.weight
    return [(seq, totals[seq], per_model[seq]) for seq in order]
