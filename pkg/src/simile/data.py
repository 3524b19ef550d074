"""Corpus and artifact I/O plus the paraphrase-pair filtering procedure.

All text files are UTF-8 with LF line endings, one record per line.
Floats are serialized with ``repr`` so every round trip is bit-exact.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .embed import EmbeddingTable, ParaphrasePair, sim
from .errors import DataFormatError
from .risk import Candidate, RiskLogRow, ToyLexModel


@dataclass
class ParallelCorpus:
    sources: list[str]
    references: list[str]
    name: str = ""

    def __post_init__(self):
        if len(self.sources) != len(self.references):
            raise DataFormatError(
                f"corpus {self.name!r}: {len(self.sources)} source lines vs {len(self.references)} reference lines"
            )

    def __len__(self) -> int:
        return len(self.sources)

    def tokenized(self) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
        return [(tuple(s.split()), tuple(r.split())) for s, r in zip(self.sources, self.references)]


@dataclass
class FilterConfig:
    sim_min: float = 0.5
    trigram_max: float = 0.2

    def __post_init__(self):
        if not -1.0 <= self.sim_min <= 1.0:
            raise ValueError("sim_min must lie in [-1, 1]")
        if not 0.0 <= self.trigram_max <= 1.0:
            raise ValueError("trigram_max must lie in [0, 1]")


@dataclass
class FilterStats:
    kept: int
    rejected_sim: int
    rejected_overlap: int
    rejected_both: int

    @property
    def total(self) -> int:
        return self.kept + self.rejected_sim + self.rejected_overlap + self.rejected_both


def trigram_overlap(a, b) -> float:
    """Shared distinct word trigrams over the smaller side's trigram count.

    Tokens are lowercased first; a side shorter than 3 words has no
    trigrams, giving overlap 0.
    """
    a = [w.lower() for w in a]
    b = [w.lower() for w in b]
    tri_a = {tuple(a[i : i + 3]) for i in range(len(a) - 2)}
    tri_b = {tuple(b[i : i + 3]) for i in range(len(b) - 2)}
    if not tri_a or not tri_b:
        return 0.0
    return len(tri_a & tri_b) / min(len(tri_a), len(tri_b))


def paranmt_filter(pairs, table: EmbeddingTable, cfg: FilterConfig, segment=None):
    """Keep pairs that are similar enough but lexically diverse enough.

    A pair survives when sim >= sim_min and trigram overlap <= trigram_max.
    SIM runs on ``segment(tokens)`` when a segmenter is given; the overlap
    always uses the raw word tokens.  Returns (kept pairs, rejection
    stats); order is preserved, so filtering is idempotent.
    """
    seg = segment if segment is not None else (lambda tokens: tokens)
    kept = []
    rejected_sim = rejected_overlap = rejected_both = 0
    for pair in pairs:
        sim_ok = sim(table, seg(pair.s), seg(pair.s_prime)) >= cfg.sim_min
        overlap_ok = trigram_overlap(pair.s, pair.s_prime) <= cfg.trigram_max
        if sim_ok and overlap_ok:
            kept.append(pair)
        elif not sim_ok and not overlap_ok:
            rejected_both += 1
        elif not sim_ok:
            rejected_sim += 1
        else:
            rejected_overlap += 1
    return kept, FilterStats(len(kept), rejected_sim, rejected_overlap, rejected_both)


def read_lines(path: str, allow_empty: bool = False) -> list[str]:
    """Sentence-per-line reader; empty lines are format errors by default."""
    lines = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() and not allow_empty:
                raise DataFormatError("empty line", path=path, line=lineno)
            lines.append(line)
    return lines


def write_lines(lines, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def load_parallel(source_path: str, reference_path: str, name: str = "") -> ParallelCorpus:
    return ParallelCorpus(read_lines(source_path), read_lines(reference_path), name or source_path)


def load_pairs(path: str) -> list[ParaphrasePair]:
    """Paraphrase TSV: one "s<TAB>s'" pair per line, whitespace-tokenized."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataFormatError(f"expected 2 tab-separated fields, got {len(fields)}", path=path, line=lineno)
            s, s_prime = fields[0].split(), fields[1].split()
            if not s or not s_prime:
                raise DataFormatError("pair side is empty", path=path, line=lineno)
            pairs.append(ParaphrasePair(tuple(s), tuple(s_prime)))
    return pairs


def save_pairs(pairs, path: str) -> None:
    write_lines((" ".join(p.s) + "\t" + " ".join(p.s_prime) for p in pairs), path)


NBEST_SEP = " ||| "


def save_nbest(groups, path: str) -> None:
    """N-best file: one "index ||| hypothesis text ||| logprob" line per
    candidate.  ``groups`` holds per-sentence candidate lists (NBestList
    objects or bare candidate lists)."""
    with open(path, "w", encoding="utf-8") as f:
        for index, group in enumerate(groups):
            candidates = getattr(group, "candidates", group)
            for cand in candidates:
                f.write(f"{index}{NBEST_SEP}{' '.join(cand.tokens)}{NBEST_SEP}{repr(cand.logprob)}\n")


def load_nbest(path: str) -> list[list[Candidate]]:
    """Inverse of :func:`save_nbest`: candidate lists grouped by index."""
    groups: dict[int, list[Candidate]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            parts = line.split(NBEST_SEP)
            if len(parts) != 3:
                raise DataFormatError("expected 'index ||| text ||| logprob'", path=path, line=lineno)
            try:
                index = int(parts[0])
                logprob = float(parts[2])
            except ValueError:
                raise DataFormatError(f"bad index or logprob in {line!r}", path=path, line=lineno)
            groups.setdefault(index, []).append(Candidate(tuple(parts[1].split()), logprob))
    if groups and sorted(groups) != list(range(len(groups))):
        raise DataFormatError("sentence indices are not contiguous from 0", path=path)
    return [groups[i] for i in range(len(groups))]


def save_embeddings(table: EmbeddingTable, path: str) -> None:
    """Embedding file: "<vocab_count> <dim>" header, then one
    "token v1 ... vdim" line per token at full precision."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(table.tokens)} {table.dim}\n")
        for token, idx in table.tokens.items():
            values = " ".join(repr(float(v)) for v in table.vectors[idx])
            f.write(f"{token} {values}\n")


def load_embeddings(path: str, unk_token: str = "<unk>") -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise DataFormatError("expected '<vocab_count> <dim>' header", path=path, line=1)
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataFormatError("non-numeric header fields", path=path, line=1)
        tokens: dict[str, int] = {}
        rows = []
        for lineno, raw in enumerate(f, start=2):
            fields = raw.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise DataFormatError(f"expected token plus {dim} values, got {len(fields)} fields", path=path, line=lineno)
            token = fields[0]
            if token in tokens:
                raise DataFormatError(f"duplicate token {token!r}", path=path, line=lineno)
            try:
                rows.append([float(v) for v in fields[1:]])
            except ValueError:
                raise DataFormatError("non-numeric embedding component", path=path, line=lineno)
            tokens[token] = len(tokens)
    if len(tokens) != count:
        raise DataFormatError(f"header promised {count} tokens, file has {len(tokens)}", path=path)
    return EmbeddingTable(tokens, np.array(rows, dtype=np.float64), unk_token)


def load_judgments(path: str) -> list[tuple[str, str, float]]:
    """Judgment TSV: "reference<TAB>hypothesis<TAB>human_score" per line."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            fields = raw.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise DataFormatError(f"expected 3 tab-separated fields, got {len(fields)}", path=path, line=lineno)
            try:
                score = float(fields[2])
            except ValueError:
                raise DataFormatError(f"non-numeric human score {fields[2]!r}", path=path, line=lineno)
            if not fields[0].split() or not fields[1].split():
                raise DataFormatError("empty reference or hypothesis", path=path, line=lineno)
            rows.append((fields[0], fields[1], score))
    return rows


def load_tags(path: str) -> list[list[tuple[str, str]]]:
    """Pre-tagged sidecar: per sentence one line of alternating
    token<TAB>tag fields, aligned with the reference corpus."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            fields = raw.rstrip("\n").split("\t")
            if len(fields) % 2 != 0 or not fields[0]:
                raise DataFormatError("expected alternating token<TAB>tag fields", path=path, line=lineno)
            sentences.append([(fields[i], fields[i + 1]) for i in range(0, len(fields), 2)])
    return sentences


def type_tag_map(tag_sentences) -> dict[str, str]:
    """Collapse per-occurrence tags to one tag per type by majority vote
    (earliest-seen tag wins ties)."""
    votes: dict[str, Counter] = {}
    first_seen: dict[str, dict[str, int]] = {}
    for sent in tag_sentences:
        for token, tag in sent:
            votes.setdefault(token, Counter())[tag] += 1
            order = first_seen.setdefault(token, {})
            if tag not in order:
                order[tag] = len(order)
    return {
        token: max(counter, key=lambda tag: (counter[tag], -first_seen[token][tag]))
        for token, counter in votes.items()
    }


def save_toylex(model: ToyLexModel, path: str) -> None:
    """Toy model file: "toylex v1 <S> <T>" header, source token line,
    target token line, then S rows of T score values."""
    src = sorted(model.source_vocab, key=model.source_vocab.get)
    tgt = sorted(model.target_vocab, key=model.target_vocab.get)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"toylex v1 {len(src)} {len(tgt)}\n")
        f.write(" ".join(src) + "\n")
        f.write(" ".join(tgt) + "\n")
        for row in model.theta:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_toylex(path: str) -> ToyLexModel:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "toylex" or header[1] != "v1":
            raise DataFormatError("expected 'toylex v1 <S> <T>' header", path=path, line=1)
        try:
            n_src, n_tgt = int(header[2]), int(header[3])
        except ValueError:
            raise DataFormatError("non-numeric vocab sizes in header", path=path, line=1)
        src = f.readline().split()
        tgt = f.readline().split()
        if len(src) != n_src or len(tgt) != n_tgt:
            raise DataFormatError("vocab lines do not match header sizes", path=path, line=2)
        rows = []
        for lineno, raw in enumerate(f, start=4):
            fields = raw.split()
            if len(fields) != n_tgt:
                raise DataFormatError(f"expected {n_tgt} scores per row", path=path, line=lineno)
            try:
                rows.append([float(v) for v in fields])
            except ValueError:
                raise DataFormatError("non-numeric score", path=path, line=lineno)
    if len(rows) != n_src:
        raise DataFormatError(f"expected {n_src} score rows, got {len(rows)}", path=path)
    return ToyLexModel(
        np.array(rows, dtype=np.float64),
        {tok: i for i, tok in enumerate(src)},
        {tok: i for i, tok in enumerate(tgt)},
    )


RISK_LOG_HEADER = "epoch,lr,expected_bleu_cost,expected_simile_cost,val_weighted_loss"


def save_risk_log(rows, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(RISK_LOG_HEADER + "\n")
        for row in rows:
            f.write(
                f"{row.epoch},{repr(row.lr)},{repr(row.expected_bleu_cost)},"
                f"{repr(row.expected_simile_cost)},{repr(row.val_weighted_loss)}\n"
            )


def load_risk_log(path: str) -> list[RiskLogRow]:
    rows = []
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != RISK_LOG_HEADER:
            raise DataFormatError(f"unexpected log header {header!r}", path=path, line=1)
        for lineno, raw in enumerate(f, start=2):
            fields = raw.rstrip("\n").split(",")
            if len(fields) != 5:
                raise DataFormatError("expected 5 comma-separated fields", path=path, line=lineno)
            try:
                rows.append(RiskLogRow(int(fields[0]), *(float(v) for v in fields[1:])))
            except ValueError:
                raise DataFormatError("non-numeric log field", path=path, line=lineno)
    return rows
