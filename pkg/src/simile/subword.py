"""Byte-pair-encoding subword segmentation.

Classic greedy BPE over whitespace-separated words: merges are chosen by
highest pair frequency (ties broken lexicographically) and applied in
learned order.  Word boundaries are kept by appending a marker to each
word-final symbol, so ``detokenize(segment(model, s))`` reproduces any
whitespace-normalized input exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .errors import DataFormatError

DEFAULT_MARKER = "</w>"


@dataclass
class BpeModel:
    """Learned merge sequence plus the token vocabulary it induces.

    ``vocab`` maps every token the model can emit (initial symbols and
    merge products) to a stable integer id.  Segmentation itself depends
    only on ``merges`` and the marker.
    """

    merges: list[tuple[str, str]]
    vocab: dict[str, int]
    vocab_size_target: int
    end_of_word_marker: str = DEFAULT_MARKER
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}


def normalize(text: str) -> str:
    """Collapse runs of whitespace to single spaces and strip the ends."""
    return " ".join(text.split())


def _word_symbols(word: str, marker: str) -> tuple[str, ...]:
    chars = list(word)
    chars[-1] = chars[-1] + marker
    return tuple(chars)


def _merge_in_word(syms: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    # Left-to-right, non-overlapping replacement of the pair.
    a, b = pair
    out = []
    i = 0
    n = len(syms)
    while i < n:
        if i + 1 < n and syms[i] == a and syms[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


def learn_bpe(corpus, vocab_size: int, marker: str = DEFAULT_MARKER) -> BpeModel:
    """Learn a merge sequence from an iterable of sentences.

    Greedy training: repeatedly merge the most frequent adjacent symbol
    pair (lexicographically smallest pair on frequency ties) until the
    vocabulary reaches ``vocab_size`` or no pairs remain.
    """
    word_freqs = Counter()
    for sentence in corpus:
        for word in sentence.split():
            word_freqs[word] += 1
    if not word_freqs:
        raise ValueError("cannot learn BPE from an empty corpus")

    words = Counter()
    inventory = set()
    for word, freq in word_freqs.items():
        syms = _word_symbols(word, marker)
        words[syms] += freq
        inventory.update(syms)

    if vocab_size < len(inventory):
        raise ValueError(
            f"vocab_size {vocab_size} is below the character inventory size {len(inventory)}"
        )

    merges: list[tuple[str, str]] = []
    for _ in range(vocab_size - len(inventory)):
        pair_freqs = Counter()
        for syms, freq in words.items():
            for pair in zip(syms, syms[1:]):
                pair_freqs[pair] += freq
        if not pair_freqs:
            break
        top = max(pair_freqs.values())
        best = min(p for p, c in pair_freqs.items() if c == top)
        merges.append(best)
        rewritten = Counter()
        for syms, freq in words.items():
            rewritten[_merge_in_word(syms, best)] += freq
        words = rewritten

    vocab: dict[str, int] = {}
    for sym in sorted(inventory):
        vocab[sym] = len(vocab)
    for a, b in merges:
        if a + b not in vocab:
            vocab[a + b] = len(vocab)
    return BpeModel(merges, vocab, vocab_size, marker)


def segment(model: BpeModel, sentence: str) -> list[str]:
    """Split a sentence into subword tokens under the trained merges.

    Characters never seen in training pass through as single-symbol
    tokens.  The result round-trips through :func:`detokenize`.
    """
    tokens: list[str] = []
    for word in sentence.split():
        syms = _word_symbols(word, model.end_of_word_marker)
        # Repeatedly apply the earliest-learned merge present in the word;
        # equivalent to one full pass per merge in learned order.
        while len(syms) > 1:
            best_rank = None
            best_pair = None
            for pair in zip(syms, syms[1:]):
                rank = model._ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pair = pair
            if best_pair is None:
                break
            syms = _merge_in_word(syms, best_pair)
        tokens.extend(syms)
    return tokens


def detokenize(tokens, marker: str = DEFAULT_MARKER) -> str:
    """Invert :func:`segment`: join tokens and turn markers back into spaces."""
    if not tokens:
        return ""
    return "".join(tokens).replace(marker, " ").strip()


def save_model(model: BpeModel, path: str) -> None:
    """Write the model file: header line, then one merge per line."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"bpe v1 {model.vocab_size_target}\n")
        for a, b in model.merges:
            f.write(f"{a}\t{b}\n")


def load_model(path: str, marker: str = DEFAULT_MARKER) -> BpeModel:
    """Read a model file written by :func:`save_model`.

    The file stores only the merge sequence, so the reconstructed vocab
    covers merge parts and products; unmerged single characters fall
    back at segmentation time as the format intends.
    """
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 3 or parts[0] != "bpe" or parts[1] != "v1":
            raise DataFormatError(f"bad BPE header {header!r}", path=path, line=1)
        try:
            vocab_size = int(parts[2])
        except ValueError:
            raise DataFormatError(f"bad vocab size in header {header!r}", path=path, line=1)
        merges = []
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataFormatError(f"expected 'left<TAB>right', got {line!r}", path=path, line=lineno)
            merges.append((fields[0], fields[1]))
    vocab: dict[str, int] = {}
    for a, b in merges:
        for token in (a, b, a + b):
            if token not in vocab:
                vocab[token] = len(vocab)
    return BpeModel(merges, vocab, vocab_size, marker)
