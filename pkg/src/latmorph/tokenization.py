"""Vocabularies and byte-pair encoding."""

from __future__ import annotations

import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

PAD, BOS, EOS, UNK, EOW = "<pad>", "<s>", "</s>", "<unk>", "</w>"
RESERVED = (PAD, BOS, EOS, UNK, EOW)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, EOW_ID = range(5)

BPE_HEADER = "#bpe-v1"


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


class Vocab:
    """Symbol <-> id map with the reserved symbols at ids 0-4."""

    def __init__(self, symbols: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {s: i for i, s in enumerate(self.itos)}
        for s in symbols:
            self.add(s)

    def add(self, symbol: str) -> int:
        if symbol not in self.stoi:
            self.stoi[symbol] = len(self.itos)
            self.itos.append(symbol)
        return self.stoi[symbol]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, symbol: str) -> int:
        return self.stoi.get(symbol, UNK_ID)

    def ids(self, symbols: Iterable[str]) -> list[int]:
        return [self.id(s) for s in symbols]

    def symbol(self, idx: int) -> str:
        return self.itos[idx]

    def save(self, path) -> None:
        Path(path).write_text("".join(s + "\n" for s in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")[:-1]
        if tuple(lines[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"{path}: reserved symbols missing or out of order")
        return cls(lines[len(RESERVED):])

    @classmethod
    def from_list(cls, itos: list[str]) -> "Vocab":
        if tuple(itos[: len(RESERVED)]) != RESERVED:
            raise ValueError("reserved symbols missing or out of order")
        return cls(itos[len(RESERVED):])


def _ranked(counts: Counter) -> list[str]:
    return [s for s, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def build_char_vocab(corpus: Iterable[str]) -> Vocab:
    """Characters of all words, most frequent first, ties lexicographic."""
    counts: Counter = Counter()
    for line in corpus:
        for word in normalize(line).split():
            counts.update(word)
    if not counts:
        raise ValueError("build_char_vocab: empty corpus")
    return Vocab(_ranked(counts))


def build_word_vocab(corpus: Iterable[str], max_size: int | None = None) -> Vocab:
    counts: Counter = Counter()
    for line in corpus:
        counts.update(normalize(line).split())
    if not counts:
        raise ValueError("build_word_vocab: empty corpus")
    ranked = _ranked(counts)
    if max_size is not None:
        ranked = ranked[: max(0, max_size - len(RESERVED))]
    return Vocab(ranked)


# ---- BPE -----------------------------------------------------------------

@dataclass
class BpeModel:
    merges: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache: dict[str, tuple[str, ...]] = {}

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        return BPE_HEADER + "\n" + "".join(f"{a} {b}\n" for a, b in self.merges)

    @classmethod
    def loads(cls, text: str) -> "BpeModel":
        lines = text.split("\n")
        if not lines or lines[0] != BPE_HEADER:
            raise ValueError(f"BPE model must start with {BPE_HEADER!r}")
        merges = []
        for n, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2 or not all(parts):
                raise ValueError(f"line {n}: expected 'left right', got {line!r}")
            merges.append((parts[0], parts[1]))
        return cls(merges)

    @classmethod
    def load(cls, path) -> "BpeModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _tie_key(pair: tuple[str, str]) -> tuple[str, str]:
    # the end-of-word marker sorts after every ordinary character
    return tuple(s.replace(EOW, "\U0010ffff") for s in pair)


def _pairs(symbols) -> Counter:
    return Counter(zip(symbols, symbols[1:]))


def bpe_learn(word_freqs: dict[str, int], n_merges: int) -> BpeModel:
    """Learn merges by repeatedly joining the most frequent adjacent pair.

    Words are split into characters plus a trailing end-of-word symbol.
    Ties go to the lexicographically smallest (left, right) pair, with the
    end-of-word symbol ordered after all characters.
    """
    if not word_freqs:
        raise ValueError("bpe_learn: empty corpus")
    words = [list(normalize(w)) + [EOW] for w in sorted(word_freqs)]
    freqs = [word_freqs[w] for w in sorted(word_freqs)]
    stats: Counter = Counter()
    where: dict[tuple, set] = defaultdict(set)
    for i, (sym, f) in enumerate(zip(words, freqs)):
        for pair, k in _pairs(sym).items():
            stats[pair] += k * f
            where[pair].add(i)

    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        live = [(c, p) for p, c in stats.items() if c > 0]
        if not live:
            break
        best_count = max(c for c, _ in live)
        best = min((p for c, p in live if c == best_count), key=_tie_key)
        merges.append(best)
        joined = best[0] + best[1]
        for i in sorted(where.pop(best, ())):
            old = words[i]
            new = _merge_pair(old, best, joined)
            if new == old:
                continue
            f = freqs[i]
            for pair, k in _pairs(old).items():
                stats[pair] -= k * f
            for pair, k in _pairs(new).items():
                stats[pair] += k * f
                where[pair].add(i)
            words[i] = new
        stats.pop(best, None)
    return BpeModel(merges)


def _merge_pair(symbols: list[str], pair: tuple[str, str], joined: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(joined)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def bpe_apply_units(model: BpeModel, units: list[str]) -> list[str]:
    """Continue merging from an existing unit sequence, lowest rank first."""
    symbols = list(units)
    while len(symbols) > 1:
        ranked = [(model.ranks.get(p, None), p) for p in zip(symbols, symbols[1:])]
        ranked = [(r, p) for r, p in ranked if r is not None]
        if not ranked:
            break
        _, pair = min(ranked)
        symbols = _merge_pair(symbols, pair, pair[0] + pair[1])
    return symbols


def bpe_apply(model: BpeModel, word: str) -> list[str]:
    """Segment one word; the last unit ends with the end-of-word symbol."""
    if not word:
        raise ValueError("bpe_apply: empty word")
    word = normalize(word)
    cached = model._cache.get(word)
    if cached is None:
        cached = tuple(bpe_apply_units(model, list(word) + [EOW]))
        model._cache[word] = cached
    return list(cached)


def bpe_segment_sentence(model: BpeModel, sentence: str) -> list[str]:
    return [u for w in normalize(sentence).split() for u in bpe_apply(model, w)]


def bpe_detokenize(units: Iterable[str]) -> str:
    """Join units back into words; the end-of-word symbol marks boundaries."""
    text = "".join(u for u in units if u not in (PAD, BOS, EOS, UNK))
    return " ".join(w for w in text.split(EOW) if w)


def word_frequencies(corpus: Iterable[str]) -> dict[str, int]:
    counts: Counter = Counter()
    for line in corpus:
        counts.update(normalize(line).split())
    return dict(counts)
