"""Bounded string-similarity utilities and the pairwise utility-matrix kernel.

The quadratic matrix kernel is the runtime hot path.  Per-sequence n-gram
statistics are computed once per row/column and pairwise clipped-overlap counts
are vectorized over integer arrays; the integer counts make every matrix entry
a deterministic function of the pair alone, so block-assembled matrices agree
bitwise with monolithic ones.  Scalar entry points share the finishing
arithmetic with the kernel, so pointwise recomputation reproduces matrix
entries exactly.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .seqcore import HypothesisCollection, TokenSequence, Vocabulary

UTILITY_NAMES = ("sentence-bleu", "chrf", "token-f1", "exact-match")

THREADS_ENV = "UMBR_THREADS"


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count: explicit argument, else UMBR_THREADS, else 1."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


@dataclass(frozen=True)
class UtilitySpec:
    """A named bounded utility u: (reference, candidate) -> [0, u_max].

    ``max_ngram`` defaults to 4 for sentence-bleu and 6 for chrf.  Sentence
    BLEU applies add-one smoothing to zero match counts at orders above 1;
    chrf averages precision/recall over the orders where both sides have
    n-grams (SacreBLEU semantics), which keeps identical strings at 100
    regardless of length.
    """

    name: str = "token-f1"
    max_ngram: Optional[int] = None
    chrf_beta: float = 2.0
    smoothing: str = "add-one"

    def __post_init__(self) -> None:
        if self.name not in UTILITY_NAMES:
            raise ConfigurationError(f"unknown utility {self.name!r}; expected one of {UTILITY_NAMES}")
        if self.smoothing not in ("add-one", "none"):
            raise ConfigurationError(f"unknown smoothing mode {self.smoothing!r}")
        if self.max_ngram is None:
            default = {"sentence-bleu": 4, "chrf": 6}.get(self.name, 1)
            object.__setattr__(self, "max_ngram", default)
        if self.max_ngram < 1:
            raise ConfigurationError("max_ngram must be >= 1")

    @property
    def u_max(self) -> float:
        return 100.0 if self.name in ("sentence-bleu", "chrf") else 1.0


@dataclass(frozen=True)
class UtilityMatrix:
    """Dense pairwise utilities: rows are candidates, columns references.

    ``values[i][j] = u(reference_j, candidate_i)``.  ``evaluations`` reports the
    logical comparison count (row draws x column draws); rows and columns with
    weight w are computed once and logically replicated.
    """

    values: np.ndarray
    row_ids: tuple[int, ...]
    col_ids: tuple[int, ...]
    row_weights: np.ndarray
    col_weights: np.ndarray
    spec: UtilitySpec
    evaluations: int


# ---------------------------------------------------------------------------
# scalar utilities
# ---------------------------------------------------------------------------


def _ngram_counter(ids: Sequence, n: int) -> Counter:
    return Counter(tuple(ids[i : i + n]) for i in range(len(ids) - n + 1))


def _clipped_overlap(cand: Counter, ref: Counter) -> int:
    return sum(min(c, ref[g]) for g, c in cand.items() if g in ref)


def _bleu_finish(matches: Sequence[int], clen: int, rlen: int, max_n: int, smoothing: str) -> float:
    """BLEU from per-order clipped match counts; shared by scalar and matrix paths."""
    if clen == 0:
        return 100.0 if rlen == 0 else 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        total = clen - n + 1 if clen >= n else 0
        m = matches[n - 1]
        if m > 0:
            p = m / total
        elif n > 1 and smoothing == "add-one":
            p = 1.0 / (total + 1)
        else:
            return 0.0
        log_sum += math.log(p)
    bp = 1.0 if clen >= rlen else math.exp(1.0 - rlen / clen)
    return 100.0 * bp * math.exp(log_sum / max_n)


def sentence_bleu(candidate: TokenSequence, reference: TokenSequence, spec: Optional[UtilitySpec] = None) -> float:
    """Sentence-level BLEU in [0, 100] of a candidate against one reference.

    Geometric mean of modified n-gram precisions (orders 1..max_ngram, add-one
    smoothed at zero counts for orders above 1) times the brevity penalty
    exp(min(0, 1 - |ref|/|cand|)).  Empty candidate against a nonempty
    reference scores 0; two empty sequences score 100.
    """
    spec = spec or UtilitySpec(name="sentence-bleu")
    if spec.name != "sentence-bleu":
        raise ConfigurationError(f"spec names utility {spec.name!r}, not sentence-bleu")
    matches = [
        _clipped_overlap(_ngram_counter(candidate.ids, n), _ngram_counter(reference.ids, n))
        for n in range(1, spec.max_ngram + 1)
    ]
    return _bleu_finish(matches, len(candidate), len(reference), spec.max_ngram, spec.smoothing)


def _char_string(seq: TokenSequence, vocab: Vocabulary) -> str:
    return "".join("".join(vocab.tokens[i].split()) for i in seq.ids)


def _chrf_finish(
    matches: Sequence[int],
    ctotals: Sequence[int],
    rtotals: Sequence[int],
    max_n: int,
    beta: float,
) -> float:
    avg_p = 0.0
    avg_r = 0.0
    effective = 0
    for n in range(max_n):
        if ctotals[n] > 0 and rtotals[n] > 0:
            avg_p += matches[n] / ctotals[n]
            avg_r += matches[n] / rtotals[n]
            effective += 1
    if effective == 0:
        # no comparable orders: vacuous match only when both strings are empty
        return 100.0 if ctotals[0] == 0 and rtotals[0] == 0 else 0.0
    avg_p /= effective
    avg_r /= effective
    if avg_p + avg_r == 0.0:
        return 0.0
    b2 = beta * beta
    return 100.0 * (1.0 + b2) * avg_p * avg_r / (b2 * avg_p + avg_r)


def chrf(
    candidate: TokenSequence,
    reference: TokenSequence,
    vocab: Vocabulary,
    spec: Optional[UtilitySpec] = None,
) -> float:
    """Character n-gram F-beta in [0, 100], whitespace removed before counting."""
    spec = spec or UtilitySpec(name="chrf")
    if spec.name != "chrf":
        raise ConfigurationError(f"spec names utility {spec.name!r}, not chrf")
    cs = _char_string(candidate, vocab)
    rs = _char_string(reference, vocab)
    matches = []
    ctotals = []
    rtotals = []
    for n in range(1, spec.max_ngram + 1):
        cc = _ngram_counter(cs, n)
        rc = _ngram_counter(rs, n)
        matches.append(_clipped_overlap(cc, rc))
        ctotals.append(max(0, len(cs) - n + 1))
        rtotals.append(max(0, len(rs) - n + 1))
    return _chrf_finish(matches, ctotals, rtotals, spec.max_ngram, spec.chrf_beta)


def _f1_finish(overlap: int, clen: int, rlen: int) -> float:
    if clen == 0 and rlen == 0:
        return 1.0
    if clen == 0 or rlen == 0:
        return 0.0
    p = overlap / clen
    r = overlap / rlen
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def token_f1(candidate: TokenSequence, reference: TokenSequence) -> float:
    """F1 over clipped bag-of-token overlap, in [0, 1].  Symmetric."""
    overlap = _clipped_overlap(Counter(candidate.ids), Counter(reference.ids))
    return _f1_finish(overlap, len(candidate), len(reference))


def exact_match(candidate: TokenSequence, reference: TokenSequence) -> float:
    """1.0 iff the token-id lists are equal, else 0.0."""
    return 1.0 if candidate.ids == reference.ids else 0.0


def compute(spec: UtilitySpec, candidate: TokenSequence, reference: TokenSequence, vocab: Vocabulary) -> float:
    """Evaluate the named utility for one (candidate, reference) pair."""
    if spec.name == "sentence-bleu":
        return sentence_bleu(candidate, reference, spec)
    if spec.name == "chrf":
        return chrf(candidate, reference, vocab, spec)
    if spec.name == "token-f1":
        return token_f1(candidate, reference)
    return exact_match(candidate, reference)


# ---------------------------------------------------------------------------
# matrix kernel
# ---------------------------------------------------------------------------


def _match_table(cand_counters: list[Counter], ref_counters: list[Counter]) -> np.ndarray:
    """Clipped n-gram overlap counts for every (candidate, reference) pair.

    Integer arithmetic throughout, so each entry depends only on its own pair.
    """
    index: dict = {}
    for rc in ref_counters:
        for g in rc:
            if g not in index:
                index[g] = len(index)
    n_ref = len(ref_counters)
    table = np.zeros((len(cand_counters), n_ref), dtype=np.int64)
    if not index:
        return table
    ref_counts = np.zeros((n_ref, len(index)), dtype=np.int64)
    for j, rc in enumerate(ref_counters):
        for g, v in rc.items():
            ref_counts[j, index[g]] = v
    for i, cc in enumerate(cand_counters):
        cols = []
        vals = []
        for g, v in cc.items():
            col = index.get(g)
            if col is not None:
                cols.append(col)
                vals.append(v)
        if cols:
            table[i] = np.minimum(ref_counts[:, cols], np.asarray(vals, dtype=np.int64)).sum(axis=1)
    return table


def _run_rows(n_rows: int, fill_rows, threads: int) -> None:
    """Apply fill_rows(lo, hi) over disjoint row ranges, optionally in a pool."""
    if threads <= 1 or n_rows <= 1:
        fill_rows(0, n_rows)
        return
    chunk = (n_rows + threads - 1) // threads
    ranges = [(lo, min(lo + chunk, n_rows)) for lo in range(0, n_rows, chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fill_rows, lo, hi) for lo, hi in ranges]:
            fut.result()


def _bleu_matrix(cands, refs, spec: UtilitySpec, threads: int) -> np.ndarray:
    max_n = spec.max_ngram
    clens = [len(s) for s in cands]
    rlens = [len(s) for s in refs]
    tables = []
    for n in range(1, max_n + 1):
        cc = [_ngram_counter(s.ids, n) for s in cands]
        rc = [_ngram_counter(s.ids, n) for s in refs]
        tables.append(_match_table(cc, rc))
    out = np.zeros((len(cands), len(refs)), dtype=np.float64)

    def fill(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            row = out[i]
            rows_n = [t[i] for t in tables]
            clen = clens[i]
            for j in range(len(refs)):
                row[j] = _bleu_finish([int(r[j]) for r in rows_n], clen, rlens[j], max_n, spec.smoothing)

    _run_rows(len(cands), fill, threads)
    return out


def _chrf_matrix(cands, refs, vocab: Vocabulary, spec: UtilitySpec, threads: int) -> np.ndarray:
    max_n = spec.max_ngram
    cstrs = [_char_string(s, vocab) for s in cands]
    rstrs = [_char_string(s, vocab) for s in refs]
    ctotals = [[max(0, len(s) - n + 1) for n in range(1, max_n + 1)] for s in cstrs]
    rtotals = [[max(0, len(s) - n + 1) for n in range(1, max_n + 1)] for s in rstrs]
    tables = []
    for n in range(1, max_n + 1):
        cc = [_ngram_counter(s, n) for s in cstrs]
        rc = [_ngram_counter(s, n) for s in rstrs]
        tables.append(_match_table(cc, rc))
    out = np.zeros((len(cands), len(refs)), dtype=np.float64)

    def fill(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            row = out[i]
            rows_n = [t[i] for t in tables]
            ct = ctotals[i]
            for j in range(len(refs)):
                row[j] = _chrf_finish([int(r[j]) for r in rows_n], ct, rtotals[j], max_n, spec.chrf_beta)

    _run_rows(len(cands), fill, threads)
    return out


def _f1_matrix(cands, refs, threads: int) -> np.ndarray:
    cc = [Counter(s.ids) for s in cands]
    rc = [Counter(s.ids) for s in refs]
    overlap = _match_table(cc, rc)
    clens = np.asarray([len(s) for s in cands], dtype=np.float64)[:, None]
    rlens = np.asarray([len(s) for s in refs], dtype=np.float64)[None, :]
    out = np.zeros(overlap.shape, dtype=np.float64)

    def fill(lo: int, hi: int) -> None:
        with np.errstate(divide="ignore", invalid="ignore"):
            p = overlap[lo:hi] / clens[lo:hi]
            r = overlap[lo:hi] / rlens
            f = 2.0 * p * r / (p + r)
        f = np.where(np.isfinite(f), f, 0.0)
        both_empty = (clens[lo:hi] == 0) & (rlens == 0)
        either_empty = (clens[lo:hi] == 0) | (rlens == 0)
        out[lo:hi] = np.where(both_empty, 1.0, np.where(either_empty, 0.0, f))

    _run_rows(overlap.shape[0], fill, threads)
    return out


def _exact_matrix(cands, refs) -> np.ndarray:
    groups: dict[tuple, int] = {}

    def key(seq: TokenSequence) -> int:
        return groups.setdefault(seq.ids, len(groups))

    c = np.asarray([key(s) for s in cands])
    r = np.asarray([key(s) for s in refs])
    return (c[:, None] == r[None, :]).astype(np.float64)


def utility_matrix(
    candidates: HypothesisCollection,
    references: HypothesisCollection,
    spec: UtilitySpec,
    threads: Optional[int] = None,
) -> UtilityMatrix:
    """Pairwise utilities of every candidate item against every reference item.

    Rows are computed over disjoint ranges by up to ``threads`` workers (default
    from UMBR_THREADS); per-row reduction order is fixed, so the result is
    bit-identical for any worker count.
    """
    if candidates.vocab != references.vocab:
        raise ConfigurationError("candidates and references do not share a vocabulary")
    workers = resolve_threads(threads)
    cands = [h.seq for h in candidates.items]
    refs = [h.seq for h in references.items]
    if spec.name == "sentence-bleu":
        values = _bleu_matrix(cands, refs, spec, workers)
    elif spec.name == "chrf":
        values = _chrf_matrix(cands, refs, candidates.vocab, spec, workers)
    elif spec.name == "token-f1":
        values = _f1_matrix(cands, refs, workers)
    else:
        values = _exact_matrix(cands, refs)
    row_w = np.asarray([h.weight for h in candidates.items], dtype=np.int64)
    col_w = np.asarray([h.weight for h in references.items], dtype=np.int64)
    return UtilityMatrix(
        values=values,
        row_ids=tuple(range(len(cands))),
        col_ids=tuple(range(len(refs))),
        row_weights=row_w,
        col_weights=col_w,
        spec=spec,
        evaluations=int(row_w.sum()) * int(col_w.sum()),
    )


# ---------------------------------------------------------------------------
# corpus-level metrics (pooled statistics, SacreBLEU semantics)
# ---------------------------------------------------------------------------


def corpus_bleu(hypotheses: Sequence[TokenSequence], references: Sequence[TokenSequence], max_n: int = 4) -> float:
    """Corpus BLEU: clipped counts and lengths pooled before the geometric mean.

    Unsmoothed; any zero pooled precision yields 0.
    """
    if len(hypotheses) != len(references):
        raise ConfigurationError("hypotheses and references must align")
    correct = [0] * max_n
    total = [0] * max_n
    sys_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        sys_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hc = _ngram_counter(hyp.ids, n)
            correct[n - 1] += _clipped_overlap(hc, _ngram_counter(ref.ids, n))
            total[n - 1] += sum(hc.values())
    if sys_len == 0:
        return 100.0 if ref_len == 0 else 0.0
    log_sum = 0.0
    for n in range(max_n):
        if total[n] == 0 or correct[n] == 0:
            return 0.0
        log_sum += math.log(correct[n] / total[n])
    bp = 1.0 if sys_len >= ref_len else math.exp(1.0 - ref_len / sys_len)
    return 100.0 * bp * math.exp(log_sum / max_n)


def corpus_chrf(
    hypotheses: Sequence[TokenSequence],
    references: Sequence[TokenSequence],
    vocab: Vocabulary,
    max_n: int = 6,
    beta: float = 2.0,
) -> float:
    """Corpus chrF: character n-gram statistics pooled over the corpus."""
    if len(hypotheses) != len(references):
        raise ConfigurationError("hypotheses and references must align")
    matches = [0] * max_n
    ctotals = [0] * max_n
    rtotals = [0] * max_n
    for hyp, ref in zip(hypotheses, references):
        cs = _char_string(hyp, vocab)
        rs = _char_string(ref, vocab)
        for n in range(1, max_n + 1):
            cc = _ngram_counter(cs, n)
            rc = _ngram_counter(rs, n)
            matches[n - 1] += _clipped_overlap(cc, rc)
            ctotals[n - 1] += max(0, len(cs) - n + 1)
            rtotals[n - 1] += max(0, len(rs) - n + 1)
    return _chrf_finish(matches, ctotals, rtotals, max_n, beta)
