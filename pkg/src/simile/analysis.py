"""Quantitative analyses: cost histograms, n-best score-diversity
statistics, frequency/tag-bucketed lexical F1, the metric-comparison
sort, rank correlations, and paired bootstrap significance."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .embed import sim

FREQUENCY_BUCKETS = [
    ("0", 0, 0),
    ("1", 1, 1),
    ("2-5", 2, 5),
    ("6-10", 6, 10),
    ("11-100", 11, 100),
    ("101-1000", 101, 1000),
    ("1001+", 1001, None),
]


@dataclass
class Histogram:
    bin_width: float
    bins: list[tuple[float, int]]  # (lower_edge, count), contiguous from 0


def cost_histogram(costs, bin_width: float) -> Histogram:
    """Left-closed right-open bins from 0; values >= 1 land in the bin
    whose upper edge first reaches 1."""
    if bin_width <= 0.0:
        raise ValueError("bin_width must be > 0")
    costs = list(costs)
    if not costs:
        raise ValueError("cannot histogram an empty cost list")
    cap = math.ceil(1.0 / bin_width) - 1  # index of the bin containing values just below 1
    indices = [min(max(int(c // bin_width), 0), cap) for c in costs]
    n_bins = max(indices) + 1
    counts = [0] * n_bins
    for i in indices:
        counts[i] += 1
    return Histogram(bin_width, [(i * bin_width, counts[i]) for i in range(n_bins)])


@dataclass
class PairDiffStats:
    total_pairs: int
    distinct_fraction: float
    mean_abs_diff_x100: float


def nbest_pair_stats(lists, scorer, tol: float = 1e-9) -> PairDiffStats:
    """Pairwise score differences inside each n-best list.

    ``scorer(reference_tokens, hypothesis_tokens)`` is evaluated once per
    candidate; all unordered candidate pairs contribute one |difference|.
    Distinct means the scores differ by more than ``tol``.
    """
    total = 0
    distinct = 0
    diffs = []
    for nb in lists:
        if len(nb.candidates) < 2:
            raise ValueError("every n-best list needs at least 2 candidates")
        scores = [scorer(nb.reference, c.tokens) for c in nb.candidates]
        for i in range(len(scores)):
            for j in range(i + 1, len(scores)):
                d = abs(scores[i] - scores[j])
                total += 1
                if d > tol:
                    distinct += 1
                diffs.append(d)
    return PairDiffStats(total, distinct / total, 100.0 * math.fsum(diffs) / total)


@dataclass
class F1Bucket:
    label: str
    matches: int
    ref_count: int
    hyp_count: int

    @property
    def precision(self) -> float:
        return self.matches / self.hyp_count if self.hyp_count else 0.0

    @property
    def recall(self) -> float:
        return self.matches / self.ref_count if self.ref_count else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class F1Report:
    frequency: list[F1Bucket] = field(default_factory=list)
    tags: list[F1Bucket] = field(default_factory=list)

    def all_buckets(self) -> list[F1Bucket]:
        return self.frequency + self.tags


def _type_stats(refs, hyps):
    """Per word type: clipped per-sentence matches plus total counts."""
    if len(refs) != len(hyps):
        raise ValueError(f"corpus length mismatch: {len(refs)} references vs {len(hyps)} hypotheses")
    matches = Counter()
    ref_counts = Counter()
    hyp_counts = Counter()
    for r, h in zip(refs, hyps):
        rc = Counter(r)
        hc = Counter(h)
        ref_counts.update(rc)
        hyp_counts.update(hc)
        for tok, cnt in hc.items():
            matches[tok] += min(cnt, rc[tok])
    return matches, ref_counts, hyp_counts


def _frequency_bucket(freq: int) -> str:
    for label, lo, hi in FREQUENCY_BUCKETS:
        if freq >= lo and (hi is None or freq <= hi):
            return label
    raise AssertionError(f"frequency {freq} fell through the bucket scheme")


def lexical_f1(refs, hyps, freq_source, tags=None) -> F1Report:
    """Micro-averaged word-type F1, bucketed by type frequency in
    ``freq_source`` (conventionally the reference side of the test set)
    and, when a tag map is given, by tag.

    Types never seen in ``freq_source`` fall into the "0" bucket so the
    union of buckets accounts for every hypothesis token.  Buckets with
    no mass are omitted.
    """
    matches, ref_counts, hyp_counts = _type_stats(refs, hyps)
    freqs = Counter()
    for sent in freq_source:
        freqs.update(sent)

    def group(assign):
        grouped: dict[str, F1Bucket] = {}
        for tok in set(ref_counts) | set(hyp_counts):
            label = assign(tok)
            if label is None:
                continue
            bucket = grouped.setdefault(label, F1Bucket(label, 0, 0, 0))
            bucket.matches += matches[tok]
            bucket.ref_count += ref_counts[tok]
            bucket.hyp_count += hyp_counts[tok]
        return grouped

    by_freq = group(lambda tok: _frequency_bucket(freqs[tok]))
    ordered = [by_freq[label] for label, _, _ in FREQUENCY_BUCKETS if label in by_freq]
    report = F1Report(frequency=ordered)

    if tags is not None:
        missing = [tok for tok in ref_counts if tok not in tags]
        if missing:
            raise ValueError(f"tag map does not cover reference tokens, e.g. {missing[0]!r}")
        by_tag = group(lambda tok: tags.get(tok))
        report.tags = [by_tag[label] for label in sorted(by_tag)]
    return report


def f1_delta(report_a: F1Report, report_b: F1Report) -> list[tuple[str, float]]:
    """Per-bucket F1(a) - F1(b) on the x100 scale.

    Frequency buckets populated by only one system are filled in as empty
    (F1 0) on the other side; they belong to the same scheme.  Tag
    buckets must carry identical label sets, since differing tag
    inventories mean the reports were bucketed under different schemes.
    """
    deltas = []
    freq_a = {b.label: b for b in report_a.frequency}
    freq_b = {b.label: b for b in report_b.frequency}
    for label, _, _ in FREQUENCY_BUCKETS:
        if label in freq_a or label in freq_b:
            a = freq_a.get(label, F1Bucket(label, 0, 0, 0))
            b = freq_b.get(label, F1Bucket(label, 0, 0, 0))
            deltas.append((label, 100.0 * (a.f1 - b.f1)))
    labels_a = [b.label for b in report_a.tags]
    labels_b = [b.label for b in report_b.tags]
    if labels_a != labels_b:
        raise ValueError(f"tag bucket schemes differ: {labels_a} vs {labels_b}")
    for a, b in zip(report_a.tags, report_b.tags):
        deltas.append((a.label, 100.0 * (a.f1 - b.f1)))
    return deltas


def f1_delta_average(delta_tables) -> list[tuple[str, float]]:
    """Row average over per-corpus delta tables sharing one bucket scheme."""
    if not delta_tables:
        raise ValueError("no delta tables to average")
    labels = [label for label, _ in delta_tables[0]]
    for table in delta_tables[1:]:
        if [label for label, _ in table] != labels:
            raise ValueError("delta tables use different bucket schemes")
    return [
        (label, math.fsum(table[i][1] for table in delta_tables) / len(delta_tables))
        for i, label in enumerate(labels)
    ]


def metric_compare_sort(refs, hyps_a, hyps_b, table, segment=None, max_ngram: int = 4):
    """Rank sentences by |BLEU gap| - |SIM gap| between two systems.

    BLEU is sentence-level smoothed BLEU on the given tokens; SIM runs on
    ``segment(tokens)`` when a segmenter is supplied.  Both gaps are on
    the x100 scale.  Rows come back sorted descending, so the head holds
    large-BLEU-gap / small-SIM-gap sentences and the tail the converse.
    """
    if not (len(refs) == len(hyps_a) == len(hyps_b)):
        raise ValueError("metric comparison requires three aligned corpora")
    seg = segment if segment is not None else (lambda tokens: tokens)
    rows = []
    for i, (r, ha, hb) in enumerate(zip(refs, hyps_a, hyps_b)):
        d_bleu = 100.0 * (
            metrics.sentence_bleu_smoothed(r, ha, max_ngram) - metrics.sentence_bleu_smoothed(r, hb, max_ngram)
        )
        r_seg = seg(r)
        d_sim = 100.0 * (sim(table, r_seg, seg(ha)) - sim(table, r_seg, seg(hb)))
        rows.append((i, d_bleu, d_sim, abs(d_bleu) - abs(d_sim)))
    rows.sort(key=lambda row: (-row[3], row[0]))
    return rows


def _average_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(pairs) -> float:
    """Standard product-moment correlation of (system, human) score pairs."""
    if len(pairs) < 2:
        raise ValueError("correlation requires at least 2 pairs")
    x = np.array([p[0] for p in pairs], dtype=np.float64)
    y = np.array([p[1] for p in pairs], dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("correlation undefined: zero variance on one side")
    return float(xc @ yc) / math.sqrt(vx * vy)


def spearman(pairs) -> float:
    """Pearson correlation of average ranks (ties handled by averaging)."""
    if len(pairs) < 2:
        raise ValueError("correlation requires at least 2 pairs")
    rx = _average_ranks([p[0] for p in pairs])
    ry = _average_ranks([p[1] for p in pairs])
    return pearson(list(zip(rx, ry)))


@dataclass
class BootstrapResult:
    samples: int
    score_a: float
    score_b: float
    wins_a: float
    wins_b: float
    ties: float
    p_value: float


def paired_bootstrap(refs, hyps_a, hyps_b, metric, samples: int = 1000, seed: int = 0) -> BootstrapResult:
    """Paired bootstrap resampling over sentence indices.

    Each resample draws ``len(refs)`` indices with replacement using a
    per-resample generator seeded ``seed + i``, recomputes the corpus
    ``metric(refs, hyps)`` for both systems, and tallies wins.  The
    p-value is one minus the win fraction of the system that is better
    on the full corpus (1.0 when the full-corpus scores tie and no
    resample separates them).
    """
    if not (len(refs) == len(hyps_a) == len(hyps_b)):
        raise ValueError("paired bootstrap requires three aligned corpora")
    if samples < 100:
        raise ValueError("use at least 100 bootstrap samples")
    n = len(refs)
    score_a = metric(refs, hyps_a)
    score_b = metric(refs, hyps_b)
    wins_a = wins_b = ties = 0
    for i in range(samples):
        rng = np.random.default_rng(seed + i)
        idx = rng.integers(0, n, size=n)
        sub_refs = [refs[j] for j in idx]
        sa = metric(sub_refs, [hyps_a[j] for j in idx])
        sb = metric(sub_refs, [hyps_b[j] for j in idx])
        if sa > sb:
            wins_a += 1
        elif sb > sa:
            wins_b += 1
        else:
            ties += 1
    frac_a = wins_a / samples
    frac_b = wins_b / samples
    if score_a > score_b:
        p_value = 1.0 - frac_a
    elif score_b > score_a:
        p_value = 1.0 - frac_b
    else:
        p_value = 1.0 - max(frac_a, frac_b)
    return BootstrapResult(samples, score_a, score_b, frac_a, frac_b, ties / samples, p_value)
