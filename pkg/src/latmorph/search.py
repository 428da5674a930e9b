"""Greedy and beam decoding, hierarchical word/char beam, feature probe.

Scores are summed log-probabilities without length normalisation.  Because
every log-probability is <= 0, a search can stop as soon as its best
finished hypothesis scores at least as high as the best live one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from .models import BANNED_IDS, char_mask, is_hierarchical
from .tokenization import BOS_ID, EOS_ID, EOW_ID, normalize


@dataclass
class Hypothesis:
    """A (partial) translation.

    ``tokens`` holds unit ids for atomic models and word spellings (lists of
    char ids) for hierarchical ones.
    """

    tokens: list
    score: float
    state: object = None
    finished: bool = False
    truncated: list = field(default_factory=list)


def _order(scores: np.ndarray) -> np.ndarray:
    # descending score, ties broken by position (stable)
    return np.argsort(-scores, kind="stable")


# ---- atomic models ----------------------------------------------------------


def beam_search(model, src_ids, width: int = 5, max_steps: int = 200) -> Hypothesis:
    """Flat beam over the atomic units of a subword/char model."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    with ag.no_grad():
        enc, mask, init = model.encode([list(src_ids)])
        active = [Hypothesis([], 0.0, model.initial_state(init))]
        finished: list[Hypothesis] = []
        banned = list(BANNED_IDS)
        for _ in range(max_steps):
            state = _stack_atomic([h.state for h in active])
            prev = np.array([h.tokens[-1] if h.tokens else BOS_ID for h in active])
            logp, new_state = model.step(state, prev, _rep(enc, len(active)), _rep_mask(mask, len(active)))
            lp = logp.data.astype(np.float64)
            lp[:, banned] = -np.inf
            total = np.array([h.score for h in active])[:, None] + lp
            flat = total.reshape(-1)
            order = _order(flat)[:width]
            v = lp.shape[1]
            nxt = []
            for k in order:
                if not np.isfinite(flat[k]):
                    break
                i, tok = divmod(int(k), v)
                toks = active[i].tokens + [tok]
                if tok == EOS_ID:
                    finished.append(Hypothesis(toks, float(flat[k]), None, True))
                else:
                    nxt.append(Hypothesis(toks, float(flat[k]), new_state.select([i])))
            active = nxt
            if not active:
                break
            best_done = max((h.score for h in finished), default=-np.inf)
            if best_done >= max(h.score for h in active):
                break
    if finished:
        return max(finished, key=lambda h: h.score)
    return max(active, key=lambda h: h.score)


def greedy(model, src_ids, max_steps: int = 200) -> Hypothesis:
    return beam_search(model, src_ids, 1, max_steps)


def _stack_atomic(states):
    from .models import AtomicState
    if len(states) == 1:
        return states[0]
    return AtomicState(*(ag.Tensor(np.concatenate([getattr(s, k).data for s in states]))
                         for k in ("h1", "h2", "h3", "feed")))


def _rep(enc, n):
    return enc if n == 1 else ag.Tensor(np.repeat(enc.data, n, axis=0))


def _rep_mask(mask, n):
    return mask if n == 1 else np.repeat(mask, n, axis=0)


# ---- hierarchical models ----------------------------------------------------


@dataclass
class WordCandidate:
    parent: int
    spelling: list
    score: float
    truncated: bool = False


def char_beam(model, hhat: np.ndarray, width: int, max_chars: int) -> list[list[WordCandidate]]:
    """Inner character beam for every row of ``hhat`` at once.

    Returns, per row, up to ``width`` complete words sorted by log-prob.  A
    word that reaches ``max_chars`` letters without a terminator is returned
    with ``truncated=True`` (its terminator is not scored).
    """
    n = hhat.shape[0]
    done: list[list[WordCandidate]] = [[] for _ in range(n)]
    live = [WordCandidate(i, [], 0.0) for i in range(n)]
    hc = hhat
    for pos in range(max_chars + 1):
        if not live:
            break
        if pos == max_chars:
            for c in live:
                done[c.parent].append(replace(c, truncated=True))
            break
        parents = np.array([c.parent for c in live])
        prev = np.array([c.spelling[-1] if c.spelling else BOS_ID for c in live])
        logp, hc_new = model.char_step(ag.Tensor(hc), prev, ag.Tensor(hhat[parents]))
        lp = logp.data.astype(np.float64)
        lp[:, ~char_mask(lp.shape[1], pos)] = -np.inf
        total = np.array([c.score for c in live])[:, None] + lp
        v = lp.shape[1]
        next_live, next_rows = [], []
        for p in np.unique(parents):
            rows = np.flatnonzero(parents == p)
            flat = total[rows].reshape(-1)
            for k in _order(flat)[:width]:
                if not np.isfinite(flat[k]):
                    break
                r, tok = divmod(int(k), v)
                src = live[rows[r]]
                cand = WordCandidate(int(p), src.spelling + [tok], float(flat[k]))
                if tok in (EOW_ID, EOS_ID):
                    done[p].append(cand)
                else:
                    next_live.append(cand)
                    next_rows.append(rows[r])
        # prune live prefixes that can no longer enter a parent's top-width
        kept, kept_rows = [], []
        for c, r in zip(next_live, next_rows):
            fin = sorted((d.score for d in done[c.parent]), reverse=True)
            if len(fin) >= width and c.score <= fin[width - 1]:
                continue
            kept.append(c)
            kept_rows.append(r)
        live = kept
        hc = hc_new.data[kept_rows] if kept else hc
    return [sorted(d, key=lambda c: -c.score)[:width] for d in done]


def _stack_word_states(states):
    from .models import WordState
    return WordState(*(ag.Tensor(np.concatenate([getattr(s, k).data for s in states]))
                       for k in ("h1", "h2", "feed", "prev_vec")))


def hierarchical_beam_search(model, src_ids, width: int = 5, max_words: int = 50,
                             max_chars: int = 50) -> Hypothesis:
    """Outer beam over words, inner beam over characters (same width).

    For the LMM the latents of each prefix are fixed to their point values
    before its words are expanded.  ``max_words`` counts the final
    end-of-sentence word.  If nothing finishes, the best unfinished
    hypothesis is returned with ``finished=False``.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    if not is_hierarchical(model):
        raise TypeError("hierarchical_beam_search needs a hierarchical or LMM model")
    with ag.no_grad():
        enc, mask, init = model.encode([list(src_ids)])
        active = [Hypothesis([], 0.0, model.begin(init))]
        finished: list[Hypothesis] = []
        for _ in range(max_words):
            n = len(active)
            ws = active[0].state if n == 1 else _stack_word_states([h.state for h in active])
            hhat, _, ws_new, _ = model.word_step(ws, _rep(enc, n), _rep_mask(mask, n), mode="point")
            words = char_beam(model, hhat.data, width, max_chars)
            cands = [(active[w.parent].score + w.score, w) for ws_ in words for w in ws_]
            scores = np.array([s for s, _ in cands]) if cands else np.zeros(0)
            chosen = [cands[k] for k in _order(scores)[:width]]
            nxt = []
            for score, w in chosen:
                h = active[w.parent]
                if w.spelling == [EOS_ID]:
                    finished.append(Hypothesis(h.tokens + [w.spelling], score, None, True,
                                               h.truncated + [False]))
                else:
                    nxt.append((score, w, h))
            if nxt:
                spellings = [w.spelling + [EOW_ID] if w.truncated else w.spelling for _, w, _ in nxt]
                composed = model.compose(spellings).data
                sel = ws_new.select([w.parent for _, w, _ in nxt])
                active = [Hypothesis(h.tokens + [w.spelling], score,
                                     replace(sel.select([i]), prev_vec=ag.Tensor(composed[i:i + 1])),
                                     False, h.truncated + [w.truncated])
                          for i, (score, w, h) in enumerate(nxt)]
            else:
                active = []
            if not active:
                break
            best_done = max((h.score for h in finished), default=-np.inf)
            if best_done >= max(h.score for h in active):
                break
    if finished:
        return max(finished, key=lambda h: h.score)
    return max(active, key=lambda h: h.score)


def score_words(model, src_ids, spellings) -> float:
    """Log-prob of a word sequence under the inference conventions.

    A spelling without a terminator is a truncated word: only its letters
    are scored and EOW is assumed when composing it.  Used as the
    enumeration oracle for the hierarchical beam.
    """
    with ag.no_grad():
        enc, mask, init = model.encode([list(src_ids)])
        ws = model.begin(init)
        total = 0.0
        for sp in spellings:
            hhat, _, ws, _ = model.word_step(ws, enc, mask, mode="point")
            hc = hhat
            prev = BOS_ID
            for pos, c in enumerate(sp):
                logp, hc = model.char_step(hc, np.array([prev]), hhat)
                if not char_mask(logp.shape[1], pos)[c]:
                    return -np.inf
                total += float(logp.data[0, c])
                prev = c
            full = sp if sp and sp[-1] in (EOW_ID, EOS_ID) else list(sp) + [EOW_ID]
            ws = model.after_word(ws, [full])
        return total


def score_units(model, src_ids, tokens) -> float:
    """Log-prob of an atomic unit sequence (teacher forced)."""
    if any(t in BANNED_IDS for t in tokens):
        return -np.inf
    with ag.no_grad():
        st = model.forward([(list(src_ids), list(tokens))], mode="point")
    return -float(st.nll.data)


# ---- sentences ----------------------------------------------------------------


def decode(model, src_ids, beam: int = 5, max_steps: int = 200, max_words: int = 50,
           max_chars: int = 50) -> Hypothesis:
    if is_hierarchical(model):
        return hierarchical_beam_search(model, src_ids, beam, max_words, max_chars)
    return beam_search(model, src_ids, beam, max_steps)


def hypothesis_text(model, hyp: Hypothesis) -> str:
    return model.detokenize(hyp.tokens)


def translate(model, sentence: str, beam: int = 5, max_words: int = 50, max_chars: int = 50,
              max_steps: int = 200) -> str:
    """Tokenise, decode and detokenise one sentence; empty in, empty out."""
    sentence = normalize(sentence).strip()
    if not sentence:
        return ""
    hyp = decode(model, model.source_ids(sentence), beam, max_steps, max_words, max_chars)
    return hypothesis_text(model, hyp)


# ---- feature probe -------------------------------------------------------------


def probe_lemma(model, source: str, position: int = 0):
    """Point lemma ``z`` at target word ``position`` for ``source``.

    Earlier positions are filled with the greedily decoded words.
    """
    if getattr(model, "variant", "") != "lmm":
        raise TypeError("the feature probe needs an LMM checkpoint")
    src = model.source_ids(normalize(source))
    with ag.no_grad():
        enc, mask, init = model.encode([src])
        ws = model.begin(init)
        for _ in range(position):
            hhat, _, ws, _ = model.word_step(ws, enc, mask, mode="point")
            w = char_beam(model, hhat.data, 1, 50)[0][0]
            ws = model.after_word(ws, [w.spelling if not w.truncated else w.spelling + [EOW_ID]])
        prefix = ws
        _, _, _, lat = model.word_step(ws, enc, mask, mode="point")
    return lat.z.data[0].copy(), (enc, mask, prefix)


def probe_decode(model, context, z, features, beam: int = 1, max_chars: int = 50) -> str:
    """Spell the word obtained from lemma ``z`` and feature vector ``features``."""
    enc, mask, prefix = context
    with ag.no_grad():
        hhat, _, _, _ = model.word_step(prefix, enc, mask, mode="point", lemma=z,
                                        features=np.asarray(features, dtype=float).reshape(1, -1))
        cand = char_beam(model, hhat.data, beam, max_chars)[0][0]
    return model.word_text(cand.spelling)


def feature_corners(k: int) -> list[tuple]:
    return list(itertools.product((0.0, 1.0), repeat=k))


def probe(model, source: str, feature_sets, position: int = 0, beam: int = 1,
          max_chars: int = 50) -> list[tuple[tuple, str]]:
    """(features, surface form) rows for a fixed point lemma."""
    z, ctx = probe_lemma(model, source, position)
    K = model.dims.features
    rows = []
    for f in feature_sets:
        f = tuple(float(x) for x in f)
        if len(f) != K:
            raise ValueError(f"expected {K} feature values, got {len(f)}")
        rows.append((f, probe_decode(model, ctx, z, f, beam, max_chars)))
    return rows
