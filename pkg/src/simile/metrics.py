"""Sentence- and corpus-level translation metrics.

Covers BLEU's brevity penalty, the symmetric length penalty, add-one
smoothed sentence BLEU, unsmoothed corpus BLEU, the embedding cosine SIM,
the length-penalized SimiLe score, and the minimum-risk cost wrappers.
All metrics operate on pre-tokenized sequences; :class:`SimileScorer`
wires raw text through word/subword tokenization.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from . import embed, subword


@dataclass
class MetricConfig:
    alpha: float = 0.25
    max_ngram: int = 4
    scale_hundred: bool = False

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if self.max_ngram < 1:
            raise ValueError("max_ngram must be >= 1")


class CostKind(Enum):
    BLEU = "bleu"
    SIMILE = "simile"
    HALF = "half"

    @classmethod
    def from_name(cls, name: str) -> "CostKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown cost kind {name!r}; expected one of bleu, simile, half")


def brevity_penalty(len_r: int, len_h: int) -> float:
    """e^(1 - |r|/|h|) for hypotheses shorter than the reference, else 1."""
    if len_r < 1 or len_h < 1:
        raise ValueError("brevity penalty requires lengths >= 1")
    if len_h >= len_r:
        return 1.0
    return math.exp(1.0 - len_r / len_h)


def length_penalty(len_r: int, len_h: int) -> float:
    """e^(1 - max/min): penalizes any length mismatch, symmetrically."""
    if len_r < 1 or len_h < 1:
        raise ValueError("length penalty requires lengths >= 1")
    lo, hi = min(len_r, len_h), max(len_r, len_h)
    return math.exp(1.0 - hi / lo)


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu_smoothed(r, h, max_n: int = 4) -> float:
    """Sentence BLEU with add-one smoothing on all n-gram counts for n >= 2.

    Unigram precision is left unsmoothed, so a hypothesis sharing no
    words with the reference scores 0.  Levels where the hypothesis has
    no n-grams at all contribute (0+1)/(0+1).
    """
    r = list(r)
    h = list(h)
    if not r or not h:
        raise ValueError("sentence BLEU requires non-empty token sequences")
    log_sum = 0.0
    for n in range(1, max_n + 1):
        hyp_ngrams = _ngrams(h, n)
        ref_ngrams = _ngrams(r, n)
        matched = sum(min(cnt, ref_ngrams[g]) for g, cnt in hyp_ngrams.items())
        total = max(len(h) - n + 1, 0)
        if n == 1:
            if matched == 0:
                return 0.0
            precision = matched / total
        else:
            precision = (matched + 1) / (total + 1)
        log_sum += math.log(precision)
    return brevity_penalty(len(r), len(h)) * math.exp(log_sum / max_n)


def corpus_bleu(refs, hyps, max_n: int = 4) -> float:
    """Standard corpus BLEU over pooled clipped counts, no smoothing.

    Levels where the whole corpus has no hypothesis n-grams are dropped
    from the geometric mean (effective order), so identity still scores
    1 on corpora of very short sentences.
    """
    if len(refs) != len(hyps):
        raise ValueError(f"corpus length mismatch: {len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("corpus BLEU requires at least one sentence pair")
    matched = [0] * max_n
    total = [0] * max_n
    ref_len = 0
    sys_len = 0
    for r, h in zip(refs, hyps):
        r = list(r)
        h = list(h)
        ref_len += len(r)
        sys_len += len(h)
        for n in range(1, max_n + 1):
            hyp_ngrams = _ngrams(h, n)
            ref_ngrams = _ngrams(r, n)
            matched[n - 1] += sum(min(cnt, ref_ngrams[g]) for g, cnt in hyp_ngrams.items())
            total[n - 1] += max(len(h) - n + 1, 0)
    if sys_len == 0:
        return 0.0
    levels = [(m, t) for m, t in zip(matched, total) if t > 0]
    if not levels or any(m == 0 for m, _ in levels):
        return 0.0
    log_sum = sum(math.log(m / t) for m, t in levels)
    bp = 1.0 if sys_len >= ref_len else math.exp(1.0 - ref_len / sys_len)
    return bp * math.exp(log_sum / len(levels))


def simile(table, r, h, alpha: float = 0.25, lp_len_r: int | None = None, lp_len_h: int | None = None) -> float:
    """Length-penalized similarity: LP(|r|, |h|)^alpha * SIM(r, h).

    The penalty lengths default to the token sequence lengths; pass
    ``lp_len_*`` to count the penalty in different units (e.g. words
    while SIM runs on subwords).
    """
    len_r = len(r) if lp_len_r is None else lp_len_r
    len_h = len(h) if lp_len_h is None else lp_len_h
    return length_penalty(len_r, len_h) ** alpha * embed.sim(table, r, h)


def cost(kind: CostKind, table, r, h, alpha: float = 0.25, max_n: int = 4) -> float:
    """Minimum-risk cost in [0, 1] for a candidate against its reference.

    SimiLe is floored at 0 before entering a cost so costs never exceed 1;
    the raw (possibly negative) score is only visible through
    :func:`simile` itself.
    """
    if kind is CostKind.BLEU:
        return 1.0 - sentence_bleu_smoothed(r, h, max_n)
    sml = max(0.0, simile(table, r, h, alpha))
    if kind is CostKind.SIMILE:
        return 1.0 - sml
    if kind is CostKind.HALF:
        return 1.0 - 0.5 * (sentence_bleu_smoothed(r, h, max_n) + sml)
    raise ValueError(f"unknown cost kind: {kind!r}")


def symmetric(metric, a, b) -> float:
    """Average of the metric with each sequence taking the reference slot."""
    return 0.5 * (metric(a, b) + metric(b, a))


def corpus_sim(table, refs, hyps) -> float:
    """Arithmetic mean of per-sentence SIM over an aligned corpus."""
    if len(refs) != len(hyps):
        raise ValueError(f"corpus length mismatch: {len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("corpus SIM requires at least one sentence pair")
    return math.fsum(embed.sim(table, r, h) for r, h in zip(refs, hyps)) / len(refs)


class SimileScorer:
    """Scores raw sentence pairs: BLEU over whitespace words, SIM over the
    configured subword segmentation, LP over words or subwords."""

    def __init__(self, table, bpe=None, alpha: float = 0.25, max_ngram: int = 4, lp_units: str = "words"):
        if lp_units not in ("words", "subwords"):
            raise ValueError("lp_units must be 'words' or 'subwords'")
        self.table = table
        self.bpe = bpe
        self.alpha = alpha
        self.max_ngram = max_ngram
        self.lp_units = lp_units

    def words(self, text: str) -> list[str]:
        return text.split()

    def sim_tokens(self, text: str) -> list[str]:
        if self.bpe is None:
            return text.split()
        return subword.segment(self.bpe, text)

    def sim(self, ref: str, hyp: str) -> float:
        return embed.sim(self.table, self.sim_tokens(ref), self.sim_tokens(hyp))

    def simile(self, ref: str, hyp: str) -> float:
        r = self.sim_tokens(ref)
        h = self.sim_tokens(hyp)
        if self.lp_units == "words":
            return simile(self.table, r, h, self.alpha, len(self.words(ref)), len(self.words(hyp)))
        return simile(self.table, r, h, self.alpha)

    def length_penalty(self, ref: str, hyp: str) -> float:
        if self.lp_units == "words":
            return length_penalty(len(self.words(ref)), len(self.words(hyp)))
        return length_penalty(len(self.sim_tokens(ref)), len(self.sim_tokens(hyp)))

    def sentence_bleu(self, ref: str, hyp: str) -> float:
        return sentence_bleu_smoothed(self.words(ref), self.words(hyp), self.max_ngram)

    def cost(self, kind: CostKind, ref: str, hyp: str) -> float:
        if kind is CostKind.BLEU:
            return 1.0 - self.sentence_bleu(ref, hyp)
        sml = max(0.0, self.simile(ref, hyp))
        if kind is CostKind.SIMILE:
            return 1.0 - sml
        return 1.0 - 0.5 * (self.sentence_bleu(ref, hyp) + sml)
