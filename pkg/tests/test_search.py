import itertools

import numpy as np
import pytest

from latmorph import autograd as ag
from latmorph import search
from latmorph.models import BANNED_IDS
from latmorph.tokenization import EOS_ID, EOW_ID

from conftest import TOY_PAIRS, build_tiny


def scramble(model, seed, scale=1.5):
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data[...] = rng.uniform(-scale, scale, p.shape)
    return model


def letters(model):
    return [i for i in range(5, len(model.char_vocab))]


def word_space(alphabet, max_chars):
    """Every word the inner beam can emit: EOS, letters+EOW, or a truncated word."""
    words = [[EOS_ID]]
    for k in range(1, max_chars):
        words += [list(w) + [EOW_ID] for w in itertools.product(alphabet, repeat=k)]
    words += [list(w) for w in itertools.product(alphabet, repeat=max_chars)]
    return words


def brute_force_words(model, src, max_words, max_chars):
    space = word_space(letters(model), max_chars)
    body = [w for w in space if w != [EOS_ID]]
    best_done, best_open = None, None
    for n in range(max_words):
        for seq in itertools.product(body, repeat=n):
            cand = list(seq) + [[EOS_ID]]
            s = search.score_words(model, src, cand)
            if best_done is None or s > best_done[0]:
                best_done = (s, cand)
    return best_done


@pytest.mark.criterion(5)
@pytest.mark.parametrize("variant,seed,max_words", [
    ("hierarchical", 0, 2), ("hierarchical", 1, 3), ("lmm", 2, 2), ("lmm", 3, 3),
])
def test_hierarchical_beam_matches_enumeration(variant, seed, max_words, f64):
    pairs = [("a b", "abc cab"), ("b a", "ca b")]
    m = scramble(build_tiny(variant, pairs=pairs, seed=seed), seed)
    assert len(letters(m)) == 3
    max_chars = 3
    src = m.source_ids("a b")
    n_words = len(word_space(letters(m), max_chars))
    space = sum((n_words - 1) ** k for k in range(max_words))
    score, oracle = brute_force_words(m, src, max_words, max_chars)
    hyp = search.hierarchical_beam_search(m, src, width=max(space, n_words), max_words=max_words,
                                          max_chars=max_chars)
    assert hyp.finished
    assert hyp.tokens == oracle
    assert hyp.score == pytest.approx(score, abs=1e-9)


@pytest.mark.criterion(5)
@pytest.mark.parametrize("seed", range(4))
def test_flat_beam_matches_enumeration(seed, f64):
    # a one-letter char vocabulary leaves exactly {EOS, EOW, a} proposable
    pairs = [("x y", "a aa"), ("y", "aaa")]
    m = scramble(build_tiny("char", pairs=pairs, seed=seed), seed)
    allowed = [i for i in range(len(m.tgt_vocab)) if i not in BANNED_IDS]
    assert len(allowed) == 3
    src = m.source_ids("x y")
    best = None
    for seq in itertools.product(allowed, repeat=3):
        seq = list(seq)
        if EOS_ID in seq:
            seq = seq[: seq.index(EOS_ID) + 1]
        else:
            continue
        s = search.score_units(m, src, seq)
        if best is None or s > best[0]:
            best = (s, seq)
    hyp = search.beam_search(m, src, width=27, max_steps=3)
    if hyp.finished:
        assert hyp.tokens == best[1]
        assert hyp.score == pytest.approx(best[0], abs=1e-9)
    else:
        # nothing finished within three steps would contradict the oracle having a sequence
        assert best is None


def test_width_one_is_greedy(f64):
    m = scramble(build_tiny("char"), 4, 0.8)
    src = m.source_ids(TOY_PAIRS[0][0])
    g = search.greedy(m, src, 20)
    enc, mask, init = m.encode([src])
    st, prev, toks = m.initial_state(init), 1, []
    for _ in range(20):
        logp, st = m.step(st, [prev], enc, mask)
        lp = logp.data[0].copy()
        lp[list(BANNED_IDS)] = -np.inf
        prev = int(lp.argmax())
        toks.append(prev)
        if prev == EOS_ID:
            break
    assert g.tokens == toks


def test_hierarchical_width_one_is_greedy(f64):
    m = scramble(build_tiny("hierarchical"), 5, 0.8)
    src = m.source_ids(TOY_PAIRS[1][0])
    h = search.hierarchical_beam_search(m, src, 1, max_words=6, max_chars=8)
    words = []
    with ag.no_grad():
        enc, mask, init = m.encode([src])
        ws = m.begin(init)
        for _ in range(6):
            hhat, _, ws, _ = m.word_step(ws, enc, mask)
            hc, prev, sp = hhat, 1, []
            for pos in range(8):
                logp, hc = m.char_step(hc, np.array([prev]), hhat)
                row = np.where(search.char_mask(logp.shape[1], pos), logp.data[0], -np.inf)
                prev = int(row.argmax())
                sp.append(prev)
                if prev in (EOW_ID, EOS_ID):
                    break
            words.append(sp)
            if sp == [EOS_ID]:
                break
            ws = m.after_word(ws, [sp if sp[-1] in (EOW_ID, EOS_ID) else sp + [EOW_ID]])
    assert h.tokens == words


def test_delta_char_model_forces_spelling(f64):
    m = build_tiny("hierarchical")
    a = m.char_vocab.id("y")
    real = m.char_step

    def forced(hc, prev_ids, hhat, training=False, rng=None):
        logp, hc = real(hc, prev_ids, hhat)
        want = np.where(np.asarray(prev_ids) == a, EOW_ID, a)
        out = np.full(logp.shape, -1e9)
        out[np.arange(len(want)), want] = 0.0
        return ag.Tensor(out), hc

    m.char_step = forced
    words = search.char_beam(m, np.zeros((2, m.dims.hidden)), 3, 10)
    assert [w[0].spelling for w in words] == [[a, EOW_ID]] * 2


def test_truncated_word_flagged(f64):
    m = build_tiny("hierarchical")
    a = m.char_vocab.id("y")
    real = m.char_step

    def forced(hc, prev_ids, hhat, training=False, rng=None):
        logp, hc = real(hc, prev_ids, hhat)
        out = np.full(logp.shape, -np.inf)
        out[:, a] = 0.0
        return ag.Tensor(out), hc

    m.char_step = forced
    h = search.hierarchical_beam_search(m, m.source_ids("see the roads"), 2, max_words=2, max_chars=4)
    assert not h.finished
    assert h.tokens == [[a] * 4, [a] * 4] and h.truncated == [True, True]


def test_width_validation():
    m = build_tiny("char")
    with pytest.raises(ValueError):
        search.beam_search(m, [5], 0)
    with pytest.raises(TypeError):
        search.hierarchical_beam_search(m, [5], 2)


def test_wider_beam_not_always_better(f64):
    """A wider beam can prune the narrow beam's path; scores are not monotone in width."""
    m = scramble(build_tiny("char", seed=10), 10)
    src = m.source_ids(TOY_PAIRS[1][0])
    two = search.beam_search(m, src, 2, 60)
    three = search.beam_search(m, src, 3, 60)
    assert two.finished and three.finished
    assert three.score < two.score


def test_translate_empty_and_deterministic(f64):
    m = build_tiny("lmm")
    assert search.translate(m, "") == ""
    assert search.translate(m, "   ") == ""
    a = search.translate(m, "see the roads", beam=3, max_words=4, max_chars=6)
    assert a == search.translate(m, "see the roads", beam=3, max_words=4, max_chars=6)


def test_translate_all_variants(f64):
    for v in ("subword", "char", "hierarchical", "lmm"):
        out = search.translate(build_tiny(v), "see the roads", beam=2, max_words=3, max_chars=5, max_steps=10)
        assert isinstance(out, str)


def test_feature_corners():
    c = search.feature_corners(2)
    assert len(c) == 4 and len(set(c)) == 4
    assert all(set(v) <= {0.0, 1.0} for v in c)


def test_probe_contract(f64):
    m = build_tiny("lmm")
    z, ctx = search.probe_lemma(m, "see the roads")
    assert z.shape == (m.dims.lemma,)
    rows = search.probe(m, "see the roads", search.feature_corners(2), max_chars=5)
    assert len(rows) == 4 and all(isinstance(s, str) for _, s in rows)
    with pytest.raises(TypeError):
        search.probe_lemma(build_tiny("hierarchical"), "see the roads")
