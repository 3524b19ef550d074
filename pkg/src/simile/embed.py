"""Averaging sentence encoder over subword embeddings, cosine scoring,
and margin-loss training with mega-batch negative mining.

The encoder is a bag of embeddings: a sentence representation is the
arithmetic mean of its token vectors.  Training pulls paraphrase pairs
together and pushes each anchor away from the hardest negative found in
its mega-batch, under a hinge with a fixed margin.  Everything runs in
float64 so the analytic gradients can be checked tightly against finite
differences.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

UNK_TOKEN = "<unk>"


@dataclass
class EmbeddingTable:
    """Token-to-vector map backed by a dense float64 matrix.

    Covers a fixed vocabulary plus one unknown-token row; lookups of
    out-of-vocabulary tokens resolve to the unknown row.
    """

    tokens: dict[str, int]
    vectors: np.ndarray
    unk_token: str = UNK_TOKEN

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or len(self.tokens) != self.vectors.shape[0]:
            raise ValueError("vectors must be one row per vocabulary token")
        if self.unk_token not in self.tokens:
            raise ValueError(f"table must contain an {self.unk_token!r} row")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding table contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row_index(self, token: str) -> int:
        return self.tokens.get(token, self.tokens[self.unk_token])

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(dict(self.tokens), self.vectors.copy(), self.unk_token)


@dataclass
class ParaphrasePair:
    s: tuple[str, ...]
    s_prime: tuple[str, ...]

    def __post_init__(self):
        self.s = tuple(self.s)
        self.s_prime = tuple(self.s_prime)
        if not self.s or not self.s_prime:
            raise ValueError("paraphrase pair sides must be non-empty")


@dataclass
class SimTrainConfig:
    margin: float = 0.4
    minibatch_size: int = 64
    megabatch_factor: int = 4
    learning_rate: float = 0.05
    epochs: int = 10
    seed: int = 0
    bidirectional: bool = False

    def __post_init__(self):
        if not 0.0 < self.margin < 2.0:
            raise ValueError("margin must lie in (0, 2)")
        if self.minibatch_size < 1 or self.megabatch_factor < 1:
            raise ValueError("minibatch_size and megabatch_factor must be >= 1")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def init_embeddings(vocab, dim: int = 300, seed: int = 0, unk_token: str = UNK_TOKEN) -> EmbeddingTable:
    """Fresh table over ``vocab`` plus the unknown row, uniform in [-0.05, 0.05]."""
    tokens: dict[str, int] = {}
    for tok in vocab:
        if tok not in tokens:
            tokens[tok] = len(tokens)
    if unk_token not in tokens:
        tokens[unk_token] = len(tokens)
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-0.05, 0.05, size=(len(tokens), dim))
    return EmbeddingTable(tokens, vectors, unk_token)


def _token_counts(table: EmbeddingTable, tokens) -> Counter:
    # Unknowns collapse onto the unk row before counting so duplicates merge.
    mapped = (tok if tok in table.tokens else table.unk_token for tok in tokens)
    return Counter(mapped)


def encode(table: EmbeddingTable, tokens) -> np.ndarray:
    """Mean of the tokens' embedding rows.

    Summation runs over distinct tokens in sorted order, which makes the
    result bit-identical under any permutation of the input.
    """
    if not tokens:
        raise ValueError("cannot encode an empty token sequence")
    acc = np.zeros(table.dim)
    counts = _token_counts(table, tokens)
    for tok in sorted(counts):
        acc += counts[tok] * table.vectors[table.tokens[tok]]
    return acc / len(tokens)


def sim(table: EmbeddingTable, r, h) -> float:
    """Cosine similarity of the two sentence encodings, clamped to [-1, 1]."""
    e_r = encode(table, r)
    e_h = encode(table, h)
    n_r = math.sqrt(float(e_r @ e_r))
    n_h = math.sqrt(float(e_h @ e_h))
    if n_r == 0.0:
        raise ValueError("zero-norm encoding for the first (reference) argument")
    if n_h == 0.0:
        raise ValueError("zero-norm encoding for the second (hypothesis) argument")
    if np.array_equal(e_r, e_h):
        return 1.0  # identical encodings: avoid sqrt round-off below 1
    value = float(e_r @ e_h) / (n_r * n_h)
    return max(-1.0, min(1.0, value))


def _cos_and_grads(u: np.ndarray, v: np.ndarray):
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm encoding in cosine gradient")
    c = float(u @ v) / (nu * nv)
    du = v / (nu * nv) - c * u / (nu * nu)
    dv = u / (nu * nv) - c * v / (nv * nv)
    return c, du, dv


def margin_loss(table: EmbeddingTable, pair: ParaphrasePair, t, margin: float) -> float:
    """Hinge on the similarity gap: max(0, margin - cos(s, s') + cos(s, t))."""
    t = tuple(t)
    if t == pair.s or t == pair.s_prime:
        raise ValueError("negative example must differ from both pair sides")
    pos = sim(table, pair.s, pair.s_prime)
    neg = sim(table, pair.s, t)
    return max(0.0, margin - pos + neg)


def margin_loss_grad(table: EmbeddingTable, pair: ParaphrasePair, t, margin: float) -> dict[str, np.ndarray]:
    """Exact gradient of :func:`margin_loss` w.r.t. every touched embedding row.

    Returns an empty dict when the hinge is inactive.  Keys are tokens
    (out-of-vocabulary ones collapse onto the unknown token).
    """
    t = tuple(t)
    if t == pair.s or t == pair.s_prime:
        raise ValueError("negative example must differ from both pair sides")
    e_s = encode(table, pair.s)
    e_p = encode(table, pair.s_prime)
    e_t = encode(table, t)
    c_pos, d_pos_s, d_pos_p = _cos_and_grads(e_s, e_p)
    c_neg, d_neg_s, d_neg_t = _cos_and_grads(e_s, e_t)
    if margin - c_pos + c_neg <= 0.0:
        return {}
    d_s = -d_pos_s + d_neg_s
    d_p = -d_pos_p
    d_t = d_neg_t
    grads: dict[str, np.ndarray] = {}
    for tokens, d_enc in ((pair.s, d_s), (pair.s_prime, d_p), (t, d_t)):
        counts = _token_counts(table, tokens)
        n = len(tokens)
        for tok, cnt in counts.items():
            contrib = (cnt / n) * d_enc
            if tok in grads:
                grads[tok] = grads[tok] + contrib
            else:
                grads[tok] = contrib
    return grads


def select_negatives(table: EmbeddingTable, megabatch) -> list[tuple[str, ...]]:
    """Hardest negative per pair: the most anchor-similar s' of any other pair.

    Ties resolve to the lowest pair index.  The table is treated as
    frozen for the whole mega-batch.
    """
    if len(megabatch) < 2:
        raise ValueError("mega-batch must contain at least 2 pairs to mine negatives")
    anchors = np.stack([encode(table, p.s) for p in megabatch])
    candidates = np.stack([encode(table, p.s_prime) for p in megabatch])
    a_norm = np.linalg.norm(anchors, axis=1)
    c_norm = np.linalg.norm(candidates, axis=1)
    if np.any(a_norm == 0.0) or np.any(c_norm == 0.0):
        raise ValueError("zero-norm encoding in mega-batch")
    sims = (anchors / a_norm[:, None]) @ (candidates / c_norm[:, None]).T
    np.fill_diagonal(sims, -np.inf)
    picks = np.argmax(sims, axis=1)
    return [megabatch[int(j)].s_prime for j in picks]


def train_sim(table: EmbeddingTable, pairs, config: SimTrainConfig):
    """SGD over shuffled mega-batches with per-mega-batch negative mining.

    Negatives are mined once per mega-batch against the frozen table,
    then plain gradient steps run per mini-batch.  Returns the trained
    table and the per-epoch mean hinge loss.
    """
    if not pairs:
        raise ValueError("cannot train on an empty pair list")
    if len(pairs) < 2:
        raise ValueError("need at least 2 pairs to mine negatives")
    table = table.copy()
    rng = random.Random(config.seed)
    order = list(range(len(pairs)))
    # One seeded shuffle per run: mega-batch composition stays fixed across
    # epochs, so a zero learning rate reproduces the same loss every epoch.
    rng.shuffle(order)
    mega = config.megabatch_factor * config.minibatch_size
    spans = [order[i : i + mega] for i in range(0, len(order), mega)]
    if len(spans) > 1 and len(spans[-1]) == 1:
        spans[-2].extend(spans.pop())
    loss_log: list[float] = []
    for _ in range(config.epochs):
        epoch_losses: list[float] = []
        for span in spans:
            batch = [pairs[i] for i in span]
            examples = list(zip(batch, select_negatives(table, batch)))
            if config.bidirectional:
                flipped = [ParaphrasePair(p.s_prime, p.s) for p in batch]
                examples.extend(zip(flipped, select_negatives(table, flipped)))
            for start in range(0, len(examples), config.minibatch_size):
                chunk = examples[start : start + config.minibatch_size]
                grads: dict[str, np.ndarray] = {}
                used = 0
                for pair, neg in chunk:
                    if neg == pair.s or neg == pair.s_prime:
                        continue  # duplicate sentences in the data; hinge undefined
                    used += 1
                    epoch_losses.append(margin_loss(table, pair, neg, config.margin))
                    for tok, g in margin_loss_grad(table, pair, neg, config.margin).items():
                        if tok in grads:
                            grads[tok] = grads[tok] + g
                        else:
                            grads[tok] = g
                if not used:
                    continue
                scale = config.learning_rate / used
                for tok, g in grads.items():
                    table.vectors[table.tokens[tok]] -= scale * g
        mean_loss = math.fsum(epoch_losses) / len(epoch_losses) if epoch_losses else 0.0
        if not math.isfinite(mean_loss):
            raise NumericalError(f"non-finite mean loss {mean_loss} during similarity training")
        loss_log.append(mean_loss)
    return table, loss_log
