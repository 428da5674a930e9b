"""Synthetic English -> agglutinative toy-language parallel corpus.

The target language glues suffixes onto stems with a two-way vowel harmony
rule: if the last vowel of the word so far is front (``e``, ``i``) the front
allomorph is used, otherwise (``a``, ``o``, ``u``) the back one.

    noun  = stem + [number] + [case]      ev, evler, eve, evlerden, okula ...
    verb  = stem + [tense]                git, gitdi, gitiyor, gitmek ...

Each sentence is a noun phrase followed by a verb; the English side puts the
verb phrase first.  Randomness comes from SplitMix64 keyed on (seed, index),
so every pair is a pure function of its position and identical everywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

from .tokenization import normalize

_MASK64 = (1 << 64) - 1

FRONT = frozenset("ei")
BACK = frozenset("aou")

# stem -> (english singular, english plural)
NOUNS = {
    "ev": ("house", "houses"),
    "okul": ("school", "schools"),
    "kitap": ("book", "books"),
    "yol": ("road", "roads"),
    "kent": ("town", "towns"),
    "deniz": ("sea", "seas"),
    "orman": ("forest", "forests"),
    "dag": ("mountain", "mountains"),
    "park": ("park", "parks"),
    "tren": ("train", "trains"),
}

# stem -> (base, past, progressive participle)
VERBS = {
    "git": ("go", "went", "going"),
    "gel": ("come", "came", "coming"),
    "bak": ("look", "looked", "looking"),
    "al": ("take", "took", "taking"),
    "sev": ("love", "loved", "loving"),
    "kal": ("stay", "stayed", "staying"),
    "dur": ("stop", "stopped", "stopping"),
    "gor": ("see", "saw", "seeing"),
    "bil": ("know", "knew", "knowing"),
    "yap": ("make", "made", "making"),
}

# feature value -> (front allomorph, back allomorph)
CASE_SUFFIX = {"to": ("e", "a"), "at": ("de", "da"), "from": ("den", "dan")}
NUMBER_SUFFIX = {"pl": ("ler", "lar")}
TENSE_SUFFIX = {"past": ("di", "du"), "prog": ("iyor", "uyor"), "inf": ("mek", "mak")}

CASES = (None, "to", "at", "from")
NUMBERS = (None, "pl")
TENSES = (None, "past", "prog", "inf")


class GrammarError(ValueError):
    pass


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class _Stream:
    def __init__(self, seed: int, index: int):
        _, key = splitmix64((seed & _MASK64) ^ ((index * 0xD1B54A32D192ED03) & _MASK64))
        self.state = key

    def below(self, n: int) -> int:
        self.state, out = splitmix64(self.state)
        return out % n


def is_front(word: str) -> bool:
    for ch in reversed(word):
        if ch in FRONT:
            return True
        if ch in BACK:
            return False
    raise GrammarError(f"{word!r} has no vowel")


def _harmonize(word: str, allomorphs: tuple[str, str]) -> str:
    return allomorphs[0] if is_front(word) else allomorphs[1]


def noun_bundles():
    return [{"number": n, "case": c} for n in NUMBERS for c in CASES]


def verb_bundles():
    return [{"tense": t} for t in TENSES]


def inflection_segments(stem: str, features: dict | None = None) -> list[str]:
    """Stem followed by its harmonised suffixes."""
    features = {k: v for k, v in (features or {}).items() if v is not None}
    if stem in NOUNS:
        bad = set(features) - {"number", "case"}
        order = ("number", "case")
        tables = {"number": NUMBER_SUFFIX, "case": CASE_SUFFIX}
    elif stem in VERBS:
        bad = set(features) - {"tense"}
        order = ("tense",)
        tables = {"tense": TENSE_SUFFIX}
    else:
        raise GrammarError(f"unknown stem {stem!r}")
    if bad:
        raise GrammarError(f"features {sorted(bad)} do not apply to {stem!r}")
    parts = [stem]
    for slot in order:
        val = features.get(slot)
        if val is None:
            continue
        if val not in tables[slot]:
            raise GrammarError(f"invalid {slot} value {val!r}")
        parts.append(_harmonize("".join(parts), tables[slot][val]))
    return parts


def inflect(stem: str, features: dict | None = None) -> str:
    return "".join(inflection_segments(stem, features))


def english_noun_phrase(stem: str, number, case) -> str:
    noun = NOUNS[stem][1 if number == "pl" else 0]
    prep = {None: "the", "to": "to the", "at": "at the", "from": "from the"}[case]
    return f"{prep} {noun}"


def english_verb_phrase(stem: str, tense) -> str:
    base, past, ing = VERBS[stem]
    return {None: base, "past": f"he {past}", "prog": f"he is {ing}", "inf": f"to {base}"}[tense]


@dataclass
class ToyPair:
    source: str
    target: str
    segmentation: str
    lemmas: tuple[str, ...]
    features: tuple[dict, ...]


def gen_pair(seed: int, index: int) -> ToyPair:
    rs = _Stream(seed, index)
    nouns, verbs = sorted(NOUNS), sorted(VERBS)
    noun = nouns[rs.below(len(nouns))]
    n_feat = noun_bundles()[rs.below(8)]
    verb = verbs[rs.below(len(verbs))]
    v_feat = verb_bundles()[rs.below(4)]
    noun_seg = inflection_segments(noun, n_feat)
    verb_seg = inflection_segments(verb, v_feat)
    source = english_verb_phrase(verb, v_feat["tense"]) + " " + \
        english_noun_phrase(noun, n_feat["number"], n_feat["case"])
    target = "".join(noun_seg) + " " + "".join(verb_seg)
    seg = "+".join(noun_seg) + " " + "+".join(verb_seg)
    return ToyPair(normalize(source), normalize(target), normalize(seg),
                   (noun, verb), (n_feat, v_feat))


def gen_corpus(seed: int, n_pairs: int) -> list[ToyPair]:
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    return [gen_pair(seed, i) for i in range(n_pairs)]


def write_corpus(pairs: list[ToyPair], prefix) -> None:
    prefix = str(prefix)
    for ext, attr in (("src", "source"), ("tgt", "target"), ("seg", "segmentation")):
        Path(f"{prefix}.{ext}").write_text(
            "".join(getattr(p, attr) + "\n" for p in pairs), encoding="utf-8")


def all_allomorphs() -> set[str]:
    tables = itertools.chain(CASE_SUFFIX.values(), NUMBER_SUFFIX.values(), TENSE_SUFFIX.values())
    return {a for pair in tables for a in pair}


def analyze(word: str) -> list[str] | None:
    """Gold segmentation of a surface form, or None if it is not in the language."""
    for stem in itertools.chain(NOUNS, VERBS):
        if not word.startswith(stem):
            continue
        bundles = noun_bundles() if stem in NOUNS else verb_bundles()
        for feats in bundles:
            segs = inflection_segments(stem, feats)
            if "".join(segs) == word:
                return segs
    return None


def segment_sentence(sentence: str) -> str:
    """Segment each word with the toy analyser; unknown words stay whole."""
    out = []
    for w in sentence.split():
        segs = analyze(w)
        out.append("+".join(segs) if segs else w)
    return " ".join(out)
