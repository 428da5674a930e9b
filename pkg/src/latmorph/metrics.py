"""Translation metrics: BLEU, chrF3, character-trigram KL, OOV rate."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass
class NgramProfile:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def update(self, grams: Iterable[tuple]) -> None:
        self.counts.update(grams)


def ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check_aligned(hyps, refs):
    if len(hyps) != len(refs):
        raise ValueError(f"got {len(hyps)} hypotheses but {len(refs)} references")


def modified_precision(hyp: Sequence[str], ref: Sequence[str], n: int) -> tuple[int, int]:
    """Clipped n-gram matches and hypothesis n-gram total for one pair."""
    h, r = ngrams(hyp, n), ngrams(ref, n)
    return sum(min(c, r[g]) for g, c in h.items()), sum(h.values())


def _bleu_stats(hyps, refs, max_order):
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        ht, rt = h.split(), r.split()
        hyp_len += len(ht)
        ref_len += len(rt)
        for n in range(1, max_order + 1):
            m, t = modified_precision(ht, rt, n)
            matches[n - 1] += m
            totals[n - 1] += t
    return matches, totals, hyp_len, ref_len


def _combine(matches, totals, hyp_len, ref_len, smooth=False) -> float:
    # orders the hypotheses are too short to contain are dropped
    logs = []
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if t == 0:
            break
        if smooth and n > 1:
            m, t = m + 1, t + 1
        if m == 0:
            return 0.0
        logs.append(math.log(m / t))
    if not logs or hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(logs) / len(logs))


def bleu(hypotheses: Sequence[str], references: Sequence[str], max_order: int = 4) -> float:
    """Corpus BLEU on whitespace tokens, in [0, 100]."""
    _check_aligned(hypotheses, references)
    return _combine(*_bleu_stats(hypotheses, references, max_order))


def sentence_bleu(hypothesis: str, reference: str, max_order: int = 4) -> float:
    """Sentence BLEU with add-one smoothing on orders 2 and up."""
    return _combine(*_bleu_stats([hypothesis], [reference], max_order), smooth=True)


def chrf(hypotheses: Sequence[str], references: Sequence[str], beta: float = 3.0,
         max_order: int = 6) -> float:
    """Character n-gram F-score (whitespace removed), in [0, 1]."""
    _check_aligned(hypotheses, references)
    matches = [0] * max_order
    hyp_tot = [0] * max_order
    ref_tot = [0] * max_order
    for h, r in zip(hypotheses, references):
        hc, rc = "".join(h.split()), "".join(r.split())
        for n in range(1, max_order + 1):
            hg, rg = ngrams(hc, n), ngrams(rc, n)
            matches[n - 1] += sum(min(c, rg[g]) for g, c in hg.items())
            hyp_tot[n - 1] += sum(hg.values())
            ref_tot[n - 1] += sum(rg.values())
    orders = [n for n in range(max_order) if ref_tot[n] > 0]
    if not orders:
        return 0.0
    prec = sum(matches[n] / hyp_tot[n] if hyp_tot[n] else 0.0 for n in orders) / len(orders)
    rec = sum(matches[n] / ref_tot[n] for n in orders) / len(orders)
    if prec == 0.0 and rec == 0.0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * prec * rec / (b2 * prec + rec)


def chrf3(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    return chrf(hypotheses, references, beta=3.0)


def trigram_profile(corpus: Iterable[str]) -> NgramProfile:
    prof = NgramProfile()
    for line in corpus:
        prof.update(ngrams(line, 3))
    return prof


def char_trigram_kl(reference_corpus: Sequence[str], hypothesis_corpus: Sequence[str]) -> float:
    """KL(P_ref || Q_hyp) in nats over character trigrams, add-one smoothed
    on the union support."""
    if not reference_corpus or not hypothesis_corpus:
        raise ValueError("char_trigram_kl: empty corpus")
    p, q = trigram_profile(reference_corpus), trigram_profile(hypothesis_corpus)
    support = set(p.counts) | set(q.counts)
    if not support:
        return 0.0
    k = len(support)
    pt, qt = p.total + k, q.total + k
    kl = 0.0
    for g in support:
        pg = (p.counts[g] + 1) / pt
        qg = (q.counts[g] + 1) / qt
        kl += pg * math.log(pg / qg)
    return max(kl, 0.0)


def oov_rate(outputs: Iterable[str], training_vocab) -> float:
    """Percentage of output word tokens absent from the training vocabulary."""
    tokens = [t for line in outputs for t in line.split()]
    if not tokens:
        raise ValueError("oov_rate: no output tokens")
    novel = sum(1 for t in tokens if t not in training_vocab)
    return 100.0 * novel / len(tokens)


def morpheme_tokens(segmented: str) -> str:
    return " ".join(p for w in segmented.split() for p in w.split("+") if p)


def t_bleu(hypotheses: Sequence[str], reference_segmentations: Sequence[str]) -> float:
    """BLEU over morpheme tokens; hypotheses are segmented with the toy analyser."""
    from .toygen import segment_sentence

    hyps = [morpheme_tokens(segment_sentence(h)) for h in hypotheses]
    refs = [morpheme_tokens(r) for r in reference_segmentations]
    return bleu(hyps, refs)


def char_perplexity(model, pairs) -> float:
    """exp of the mean per-character NLL, teacher forced with point latents.

    ``pairs`` holds (source, target) sentences; the caller does any OOV
    filtering.
    """
    from .training import perplexity

    if not pairs:
        raise ValueError("char_perplexity: empty sentence set")
    return perplexity(model, pairs)


def format_report(metrics: dict) -> str:
    return "".join(f"{k}\t{v:.6f}\n" if isinstance(v, float) else f"{k}\t{v}\n"
                   for k, v in metrics.items())
