"""Desk-scale categorical autoregressive models with Gaussian posteriors over logits.

A ToyModel of order k holds one logit row per context window of k token ids;
next-token distributions are plain softmax rows over the full vocabulary.
Constructors in this module pin the bos column to a large negative sentinel so
its probability underflows to exactly zero; the reserved token therefore never
carries mass without any masking in the math.  The posterior is a (mixture of)
diagonal Gaussian(s) over the logit table, which keeps support unconstrained.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, GuardError
from .seqcore import TokenSequence, Vocabulary

# softmax turns this into an exact float zero even after posterior noise
BOS_LOGIT = -1.0e4

_TABLE_GUARD = 10_000_000

SAVE_FORMAT_VERSION = 1


def _table_shape(vocab: Vocabulary, order: int) -> tuple[int, int]:
    v = len(vocab)
    if order < 0:
        raise ConfigurationError("model order must be >= 0")
    rows = v**order
    if rows * v > _TABLE_GUARD:
        raise GuardError(f"logit table of {rows * v} entries exceeds the desk-scale guard")
    return rows, v


def _context_row(vocab: Vocabulary, order: int, context: Sequence[int]) -> int:
    if order == 0:
        return 0
    if len(context) >= order:
        window = context[-order:]
    else:
        window = [vocab.bos_id] * (order - len(context)) + list(context)
    idx = 0
    v = len(vocab)
    for t in window:
        idx = idx * v + t
    return idx


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    probs.flags.writeable = False
    return probs


@dataclass(frozen=True)
class ToyModel:
    """Categorical n-gram model: softmax over a logit table indexed by context."""

    vocab: Vocabulary
    order: int
    logits: np.ndarray
    _probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        rows, v = _table_shape(self.vocab, self.order)
        if self.logits.shape != (rows, v):
            raise ConfigurationError(f"logit table must have shape {(rows, v)}, got {self.logits.shape}")
        if not np.all(np.isfinite(self.logits)):
            raise ConfigurationError("logits must be finite")
        object.__setattr__(self, "_probs", _softmax_rows(np.asarray(self.logits, dtype=np.float64)))

    def context_index(self, context: Sequence[int]) -> int:
        """Row index for the last ``order`` tokens, left-padded with bos."""
        return _context_row(self.vocab, self.order, context)

    def next_dist(self, context: Sequence[int]) -> np.ndarray:
        """Next-token probability vector for the given context (read-only view)."""
        return self._probs[self.context_index(context)]


def next_dist(model: ToyModel, context: TokenSequence | Sequence[int]) -> np.ndarray:
    ids = context.ids if isinstance(context, TokenSequence) else context
    return model.next_dist(ids)


def seq_logprob(source, seq: TokenSequence) -> float:
    """Natural-log probability of an eos-terminated sequence under ``source``.

    ``source`` is anything exposing next_dist(context_ids) and a vocab; the
    terminal eos step is always included.
    """
    eos = source.vocab.eos_id
    total = 0.0
    ids = seq.ids
    for t, tok in enumerate(ids):
        total += float(np.log(source.next_dist(ids[:t])[tok]))
    total += float(np.log(source.next_dist(ids)[eos]))
    return total


@dataclass(frozen=True)
class GaussianComponent:
    mean: np.ndarray
    precision: np.ndarray
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.mean.shape != self.precision.shape:
            raise ConfigurationError("mean and precision tables must share a shape")
        if not np.all(np.isfinite(self.precision)) or not np.all(self.precision > 0):
            raise ConfigurationError("precision entries must be finite and positive")
        if self.weight <= 0:
            raise ConfigurationError("component weight must be positive")


@dataclass(frozen=True)
class PosteriorSpec:
    """Diagonal Gaussian (or equal-shape mixture) over a logit table.

    Per-entry variance is 1/precision; ``lam`` is the effective-sample-size
    temperature baked into the stored precisions, kept so it can be retargeted.
    """

    vocab: Vocabulary
    order: int
    components: tuple[GaussianComponent, ...]
    lam: float = 1.0

    def __post_init__(self) -> None:
        if not self.components:
            raise ConfigurationError("posterior needs at least one component")
        if self.lam <= 0:
            raise ConfigurationError("lambda must be positive")
        shape = _table_shape(self.vocab, self.order)
        total = 0.0
        for comp in self.components:
            if comp.mean.shape != shape:
                raise ConfigurationError(f"component table must have shape {shape}")
            total += comp.weight
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ConfigurationError(f"mixture weights must sum to 1, got {total}")

    @property
    def mean(self) -> np.ndarray:
        if len(self.components) != 1:
            raise ConfigurationError("mean is defined only for a unimodal posterior")
        return self.components[0].mean

    @property
    def precision(self) -> np.ndarray:
        if len(self.components) != 1:
            raise ConfigurationError("precision is defined only for a unimodal posterior")
        return self.components[0].precision

    def mean_model(self) -> ToyModel:
        """Model at the (first component's) posterior mean."""
        return ToyModel(vocab=self.vocab, order=self.order, logits=self.components[0].mean)


def sample_model(spec: PosteriorSpec, rng: np.random.Generator) -> ToyModel:
    """Draw one model: pick a mixture component, then logits = mean + sigma*z."""
    if len(spec.components) == 1:
        comp = spec.components[0]
    else:
        weights = np.asarray([c.weight for c in spec.components], dtype=np.float64)
        comp = spec.components[rng.choice(len(spec.components), p=weights / weights.sum())]
    sigma = 1.0 / np.sqrt(comp.precision)
    logits = comp.mean + sigma * rng.standard_normal(comp.mean.shape)
    return ToyModel(vocab=spec.vocab, order=spec.order, logits=logits)


def set_temperature(spec: PosteriorSpec, lambda_new: float) -> PosteriorSpec:
    """Retarget the effective sample size: variance scales by lam_old/lam_new."""
    if lambda_new <= 0:
        raise ConfigurationError(f"lambda must be positive, got {lambda_new}")
    scale = lambda_new / spec.lam
    comps = tuple(
        GaussianComponent(mean=c.mean, precision=c.precision * scale, weight=c.weight) for c in spec.components
    )
    return PosteriorSpec(vocab=spec.vocab, order=spec.order, components=comps, lam=lambda_new)


@dataclass(frozen=True)
class ModelSet:
    """Models sampled from a posterior (or user-supplied), with stable tags."""

    models: tuple[ToyModel, ...]
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.models:
            raise ConfigurationError("a model set needs at least one model")
        first = self.models[0]
        for m in self.models[1:]:
            if m.vocab != first.vocab or m.order != first.order:
                raise ConfigurationError("all members must share vocabulary and order")
        if not self.tags:
            object.__setattr__(self, "tags", tuple(f"m{i}" for i in range(len(self.models))))
        elif len(self.tags) != len(self.models):
            raise ConfigurationError("one tag per model required")

    def __len__(self) -> int:
        return len(self.models)

    @property
    def vocab(self) -> Vocabulary:
        return self.models[0].vocab

    @property
    def order(self) -> int:
        return self.models[0].order

    @classmethod
    def from_posterior(cls, spec: PosteriorSpec, size: int, rng: np.random.Generator) -> "ModelSet":
        if size < 1:
            raise ConfigurationError("model set size must be >= 1")
        return cls(models=tuple(sample_model(spec, rng) for _ in range(size)))


def ensemble_next_dist(models: ModelSet, context: Sequence[int]) -> np.ndarray:
    """Arithmetic mean of member next-token distributions (probability space)."""
    acc = np.zeros(len(models.vocab), dtype=np.float64)
    for m in models.models:
        acc += m.next_dist(context)
    return acc / len(models)


@dataclass(frozen=True)
class TokenEnsemble:
    """Per-step probability-averaged view of a model set, usable as a decode source."""

    members: ModelSet

    @property
    def vocab(self) -> Vocabulary:
        return self.members.vocab

    @property
    def order(self) -> int:
        return self.members.order

    def next_dist(self, context: Sequence[int]) -> np.ndarray:
        return ensemble_next_dist(self.members, context)


def fit_from_corpus(
    corpus: Sequence[TokenSequence],
    vocab: Vocabulary,
    order: int,
    smoothing: float,
    lam: float = 1.0,
) -> PosteriorSpec:
    """Count-based posterior: mean = log additive-smoothed counts, precision = lam*(count+smoothing).

    Higher-count contexts get higher precision (lower variance).  The bos
    column is pinned to the structural-zero sentinel.
    """
    if not corpus:
        raise DataError("cannot fit a posterior from an empty corpus")
    if smoothing <= 0:
        raise ConfigurationError("smoothing must be positive")
    rows, v = _table_shape(vocab, order)
    counts = np.zeros((rows, v), dtype=np.float64)
    bos, eos = vocab.bos_id, vocab.eos_id
    probe = ToyModel(vocab=vocab, order=order, logits=np.zeros((rows, v)))
    for seq in corpus:
        ids = seq.ids
        for t, target in enumerate(ids + (eos,)):
            if target == bos:
                raise DataError("corpus sequences may not contain the bos token")
            counts[probe.context_index(ids[:t]), target] += 1.0
    mean = np.log(counts + smoothing)
    mean[:, bos] = BOS_LOGIT
    precision = lam * (counts + smoothing)
    comp = GaussianComponent(mean=mean, precision=precision, weight=1.0)
    return PosteriorSpec(vocab=vocab, order=order, components=(comp,), lam=lam)


def model_from_probs(vocab: Vocabulary, order: int, rows: dict) -> ToyModel:
    """Hand-build a model from per-context probability dicts; zeros become the sentinel.

    ``rows`` maps context tuples (of token ids, bos-padded) to {token_id: prob}.
    Unlisted contexts force eos.
    """
    n_rows, v = _table_shape(vocab, order)
    logits = np.full((n_rows, v), BOS_LOGIT, dtype=np.float64)
    probe = ToyModel(vocab=vocab, order=order, logits=np.zeros((n_rows, v)))
    for r in range(n_rows):
        logits[r, vocab.eos_id] = 0.0
    for context, dist in rows.items():
        row = probe.context_index(tuple(context))
        logits[row, :] = BOS_LOGIT
        for tok, p in dist.items():
            if p > 0:
                logits[row, tok] = float(np.log(p))
    return ToyModel(vocab=vocab, order=order, logits=logits)


# ---------------------------------------------------------------------------
# persistence: versioned npz archive, lossless round trip
# ---------------------------------------------------------------------------


def save_posterior(spec: PosteriorSpec, path) -> None:
    meta = {
        "format_version": SAVE_FORMAT_VERSION,
        "order": spec.order,
        "lam": spec.lam,
        "tokens": list(spec.vocab.tokens),
        "bos_id": spec.vocab.bos_id,
        "eos_id": spec.vocab.eos_id,
        "weights": [c.weight for c in spec.components],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf8"), dtype=np.uint8)}
    for i, comp in enumerate(spec.components):
        arrays[f"mean_{i}"] = comp.mean
        arrays[f"precision_{i}"] = comp.precision
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_posterior(path) -> PosteriorSpec:
    with np.load(path) as archive:
        try:
            meta = json.loads(bytes(archive["meta"]).decode("utf8"))
        except (KeyError, ValueError) as exc:
            raise DataError(f"not a posterior archive: {path}") from exc
        if meta.get("format_version") != SAVE_FORMAT_VERSION:
            raise DataError(f"unsupported posterior format version in {path}")
        vocab = Vocabulary(tokens=tuple(meta["tokens"]), bos_id=meta["bos_id"], eos_id=meta["eos_id"])
        comps = tuple(
            GaussianComponent(mean=archive[f"mean_{i}"], precision=archive[f"precision_{i}"], weight=w)
            for i, w in enumerate(meta["weights"])
        )
    return PosteriorSpec(vocab=vocab, order=meta["order"], components=comps, lam=meta["lam"])


def save_model(model: ToyModel, path) -> None:
    meta = {
        "format_version": SAVE_FORMAT_VERSION,
        "order": model.order,
        "tokens": list(model.vocab.tokens),
        "bos_id": model.vocab.bos_id,
        "eos_id": model.vocab.eos_id,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode("utf8"), dtype=np.uint8), logits=model.logits)


def load_model(path) -> ToyModel:
    with np.load(path) as archive:
        try:
            meta = json.loads(bytes(archive["meta"]).decode("utf8"))
        except (KeyError, ValueError) as exc:
            raise DataError(f"not a model archive: {path}") from exc
        if meta.get("format_version") != SAVE_FORMAT_VERSION:
            raise DataError(f"unsupported model format version in {path}")
        vocab = Vocabulary(tokens=tuple(meta["tokens"]), bos_id=meta["bos_id"], eos_id=meta["eos_id"])
        logits = archive["logits"]
    return ToyModel(vocab=vocab, order=meta["order"], logits=logits)
