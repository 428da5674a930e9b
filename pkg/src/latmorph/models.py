"""Encoder-decoder translation models.

Four decoders share one bi-GRU encoder and dot attention:

``subword`` / ``char``
    atomic decoders: three stacked GRU layers, attention after the first,
    softmax over ``E h`` for the next unit.
``hierarchical``
    word-level GRU (two layers, attention after the second) whose inputs are
    character-composed word embeddings; each word is spelled by a character
    GRU initialised from ``tanh(W [c; t])`` with ``t`` the word-level state.
``lmm``
    as ``hierarchical`` but ``t`` is composed from a Gaussian lemma vector
    ``z`` and K hard-Kumaraswamy features ``f`` predicted from the
    word-level state.

Targets: atomic variants predict a flat id sequence ending in EOS.  The
hierarchical variants predict a list of words, each spelled as character
ids closed by EOW, followed by a final word spelled ``[EOS]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from . import distributions as dist
from .autograd import Tensor
from .layers import MLP, CharComposer, Dense, DotAttention, Embedding, GRUCell, Module, run_rnn
from .tokenization import (BOS_ID, EOS_ID, EOW_ID, PAD_ID, RESERVED, UNK_ID, BpeModel, Vocab,
                           bpe_apply, bpe_segment_sentence, normalize)

VARIANTS = ("subword", "char", "hierarchical", "lmm")
#: never proposed at inference
BANNED_IDS = (PAD_ID, BOS_ID, UNK_ID)


@dataclass
class ModelDims:
    emb: int = 64
    hidden: int = 64
    lemma: int = 16
    features: int = 6
    mlp_hidden: int = 64

    def __post_init__(self):
        if self.hidden % 2:
            raise ValueError("hidden size must be even (split across encoder directions)")


@dataclass
class LatentWordState:
    """Lemma ``z``, features ``f`` and composed representation ``t``."""

    z: Tensor
    f: Tensor
    t: Tensor
    a: Tensor | None = None
    b: Tensor | None = None


@dataclass
class ForwardStats:
    nll: Tensor
    reg: Tensor
    n_segments: int
    n_correct: int
    p_cont_sum: float = 0.0
    n_words: int = 0
    sparse_fraction_sum: float = 0.0


def _pad(seqs, fill=PAD_ID):
    width = max((len(s) for s in seqs), default=0)
    arr = np.full((len(seqs), width), fill, dtype=np.int64)
    for i, s in enumerate(seqs):
        arr[i, : len(s)] = s
    return arr, arr != fill if fill == PAD_ID else None


def _rows(t: Tensor | None, idx) -> Tensor | None:
    return None if t is None else Tensor(t.data[idx])


class Seq2Seq(Module):
    """Shared encoder, attention and bookkeeping."""

    variant = ""

    def __init__(self, dims: ModelDims, src_vocab: Vocab, src_bpe: BpeModel,
                 rng: np.random.Generator, dropout: float = 0.0):
        self.dims = dims
        self.src_vocab = src_vocab
        self.src_bpe = src_bpe
        self.dropout_rate = dropout
        H, E = dims.hidden, dims.emb
        self.src_embed = Embedding(len(src_vocab), E, rng)
        self.enc_fwd = GRUCell(E, H // 2, rng)
        self.enc_bwd = GRUCell(E, H // 2, rng)
        self.bridge = Dense(H, H, rng, "tanh")
        self.attention = DotAttention(H, H, rng)

    # ---- data --------------------------------------------------------
    def source_ids(self, sentence: str) -> list[int]:
        return self.src_vocab.ids(bpe_segment_sentence(self.src_bpe, sentence))

    def _drop(self, x, training, rng):
        return ag.dropout(x, self.dropout_rate, training, rng)

    # ---- encoder -----------------------------------------------------
    def encode(self, src_batch, training: bool = False, rng=None):
        """Encode a list of source id lists -> (states [B, S, H], mask, init)."""
        if any(len(s) == 0 for s in src_batch):
            raise ValueError("encode: empty source sentence")
        ids, mask = _pad(src_batch)
        x = self._drop(self.src_embed(ids), training, rng)
        f_states, _ = run_rnn(self.enc_fwd, x, mask)
        b_states, _ = run_rnn(self.enc_bwd, x, mask, reverse=True)
        enc = ag.stack([ag.concat([f, b], axis=-1) for f, b in zip(f_states, b_states)], axis=1)
        m = mask.astype(enc.data.dtype)
        pooled = ag.tsum(enc * m[:, :, None], axis=1) * (1.0 / m.sum(axis=1, keepdims=True))
        return enc, mask, self.bridge(pooled)

    def zeros(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.dims.hidden), dtype=ag.get_dtype()))


# ---------------------------------------------------------------------------
# atomic decoders


@dataclass
class AtomicState:
    h1: Tensor
    h2: Tensor
    h3: Tensor
    feed: Tensor

    def select(self, rows) -> "AtomicState":
        return AtomicState(*(_rows(getattr(self, k), rows) for k in ("h1", "h2", "h3", "feed")))


class AtomicModel(Seq2Seq):
    """Subword- or character-level decoder predicting one unit per step."""

    def __init__(self, variant: str, dims: ModelDims, src_vocab: Vocab, src_bpe: BpeModel,
                 tgt_vocab: Vocab, rng: np.random.Generator, tgt_bpe: BpeModel | None = None,
                 dropout: float = 0.0):
        if variant not in ("subword", "char"):
            raise ValueError(f"atomic variant must be subword or char, got {variant!r}")
        super().__init__(dims, src_vocab, src_bpe, rng, dropout)
        self.variant = variant
        self.tgt_vocab = tgt_vocab
        self.tgt_bpe = tgt_bpe if tgt_bpe is not None else BpeModel([])
        H, E = dims.hidden, dims.emb
        self.tgt_embed = Embedding(len(tgt_vocab), E, rng)
        self.dec1 = GRUCell(E + H, H, rng)
        self.dec2 = GRUCell(H, H, rng)
        self.dec3 = GRUCell(H, H, rng)
        # output embedding E in softmax(E h)
        self.out_embed = Embedding(len(tgt_vocab), H, rng)

    # ---- data --------------------------------------------------------
    def target_units(self, sentence: str) -> list[str]:
        words = normalize(sentence).split()
        if self.variant == "subword":
            return [u for w in words for u in bpe_apply(self.tgt_bpe, w)]
        return [u for w in words for u in list(w) + ["</w>"]]

    def target_ids(self, sentence: str) -> list[int]:
        return self.tgt_vocab.ids(self.target_units(sentence)) + [EOS_ID]

    def detokenize(self, ids) -> str:
        from .tokenization import bpe_detokenize
        units = [self.tgt_vocab.symbol(i) for i in ids if i != EOS_ID]
        return bpe_detokenize(units)

    # ---- decoding ----------------------------------------------------
    def initial_state(self, init: Tensor) -> AtomicState:
        b = init.shape[0]
        return AtomicState(init, self.zeros(b), self.zeros(b), self.zeros(b))

    def step(self, st: AtomicState, prev_ids, enc, mask, training=False, rng=None):
        """Advance one unit; returns (log-probs [B, v], new state)."""
        prev_ids = np.asarray(prev_ids)
        if prev_ids.size and (prev_ids.min() < 0 or prev_ids.max() >= len(self.tgt_vocab)):
            raise IndexError("atomic_step: invalid previous token id")
        e = self._drop(self.tgt_embed(prev_ids), training, rng)
        h1 = self.dec1(ag.concat([e, st.feed], axis=-1), st.h1)
        ctx, _ = self.attention.context(h1, enc, mask)
        hhat = self.attention.attentional(ctx, h1)
        h2 = self.dec2(self._drop(hhat, training, rng), st.h2)
        h3 = self.dec3(self._drop(h2, training, rng), st.h3)
        logits = ag.linear(self._drop(h3, training, rng), self.out_embed.table)
        return ag.log_softmax(logits, axis=-1), AtomicState(h1, h2, h3, hhat)

    def forward(self, batch, training=False, rng=None, noise=None, mode="sample") -> ForwardStats:
        """Teacher-forced NLL summed over the batch."""
        src = [s for s, _ in batch]
        tgt = [t for _, t in batch]
        if any(len(t) == 0 for t in tgt):
            raise ValueError("empty target")
        enc, mask, init = self.encode(src, training, rng)
        ids, tmask = _pad(tgt)
        st = self.initial_state(init)
        prev = np.full(len(batch), BOS_ID)
        terms = []
        correct = 0
        for j in range(ids.shape[1]):
            logp, st = self.step(st, prev, enc, mask, training, rng)
            gold = ids[:, j]
            m = tmask[:, j]
            terms.append(ag.pick(logp, gold) * m.astype(logp.data.dtype))
            correct += int(((logp.data.argmax(axis=-1) == gold) & m).sum())
            prev = gold
        nll = -ag.tsum(ag.stack(terms, axis=1))
        zero = Tensor(np.zeros((), dtype=ag.get_dtype()))
        return ForwardStats(nll, zero, int(tmask.sum()), correct)


# ---------------------------------------------------------------------------
# hierarchical decoders


@dataclass
class WordState:
    """Word-level decoder state for a batch of prefixes."""

    h1: Tensor
    h2: Tensor
    feed: Tensor
    prev_vec: Tensor

    def select(self, rows) -> "WordState":
        return WordState(*(_rows(getattr(self, k), rows) for k in ("h1", "h2", "feed", "prev_vec")))


def char_mask(vocab_size: int, position: int) -> np.ndarray:
    """Characters allowed at ``position`` of a word during inference.

    EOS may only open a word (the end-of-sentence word) and EOW may not; the
    reserved PAD/BOS/UNK are never proposed.  Masking does not renormalise,
    so scores equal teacher-forced log-probabilities.
    """
    ok = np.ones(vocab_size, dtype=bool)
    ok[list(BANNED_IDS)] = False
    ok[EOW_ID if position == 0 else EOS_ID] = False
    return ok


def spell(word: str, vocab: Vocab) -> list[int]:
    return vocab.ids(list(word)) + [EOW_ID]


class HierarchicalModel(Seq2Seq):
    variant = "hierarchical"

    def __init__(self, dims: ModelDims, src_vocab: Vocab, src_bpe: BpeModel, char_vocab: Vocab,
                 rng: np.random.Generator, dropout: float = 0.0):
        super().__init__(dims, src_vocab, src_bpe, rng, dropout)
        self.char_vocab = char_vocab
        H, E = dims.hidden, dims.emb
        self.char_embed = Embedding(len(char_vocab), E, rng)
        self.composer = CharComposer(E, H // 2, E, rng)
        self.word1 = GRUCell(E + H, H, rng)
        self.word2 = GRUCell(H, H, rng)
        self._init_latent(rng)
        self.char_rnn = GRUCell(E + H, H, rng)
        self.char_out = Embedding(len(char_vocab), H, rng)

    def _init_latent(self, rng):
        pass

    # ---- data --------------------------------------------------------
    def target_ids(self, sentence: str) -> list[list[int]]:
        return [spell(w, self.char_vocab) for w in normalize(sentence).split()] + [[EOS_ID]]

    def word_text(self, spelling) -> str:
        return "".join(self.char_vocab.symbol(i) for i in spelling if i >= len(RESERVED))

    def detokenize(self, words) -> str:
        return " ".join(w for w in (self.word_text(s) for s in words) if w)

    # ---- composition -------------------------------------------------
    def compose(self, spellings) -> Tensor:
        """Input embeddings of words given as char-id lists -> [N, E]."""
        if any(len(s) == 0 for s in spellings):
            raise ValueError("char_compose: empty word")
        ids, mask = _pad(spellings)
        return self.composer(self.char_embed(ids), mask)

    # ---- word level --------------------------------------------------
    def begin(self, init: Tensor) -> WordState:
        b = init.shape[0]
        bos = self.compose([[BOS_ID]])
        return WordState(init, self.zeros(b), self.zeros(b), ag.take_rows(bos, np.zeros(b, dtype=np.int64)))

    def word_repr(self, h2: Tensor, mode: str, noise=None, lemma=None, features=None):
        """Word representation ``t``; the plain hierarchical model uses ``h2``."""
        return h2, None

    def word_step(self, ws: WordState, enc, mask, mode="point", noise=None, training=False,
                  rng=None, lemma=None, features=None):
        """Advance the word-level decoder by one word.

        Returns (char-decoder init ``tanh(W [c; t])``, context, new state,
        latents).  ``prev_vec`` of the new state is unset until
        :meth:`after_word` supplies the emitted word.
        """
        x = ag.concat([ws.prev_vec, ws.feed], axis=-1)
        h1 = self.word1(x, ws.h1)
        h2 = self.word2(self._drop(h1, training, rng), ws.h2)
        ctx, _ = self.attention.context(h2, enc, mask)
        t, lat = self.word_repr(h2, mode, noise, lemma, features)
        hhat = self.attention.attentional(ctx, t)
        return hhat, ctx, WordState(h1, h2, hhat, None), lat

    def after_word(self, ws: WordState, spellings) -> WordState:
        return replace(ws, prev_vec=self.compose(spellings))

    # ---- char level --------------------------------------------------
    def char_step(self, hc: Tensor, prev_ids, hhat: Tensor, training=False, rng=None):
        e = self.char_embed(np.asarray(prev_ids))
        hc = self.char_rnn(ag.concat([e, hhat], axis=-1), hc)
        logits = ag.linear(self._drop(hc, training, rng), self.char_out.table)
        return ag.log_softmax(logits, axis=-1), hc

    def generate_word(self, t: Tensor, ctx: Tensor, spelling=None, max_len: int = 50):
        """Spell one word from representation ``t`` and context ``ctx``.

        With ``spelling`` the characters are teacher forced and its
        log-probability is returned; otherwise characters are chosen
        greedily until EOW/EOS or ``max_len``.  Returns
        ``(spelling, log_prob, truncated)``.
        """
        hhat = self.attention.attentional(ag.as_tensor(ctx).reshape(1, -1), ag.as_tensor(t).reshape(1, -1))
        hc = hhat
        prev = np.array([BOS_ID])
        out, total, truncated = [], 0.0, False
        steps = len(spelling) if spelling is not None else max_len
        logp_terms = []
        for j in range(steps):
            logp, hc = self.char_step(hc, prev, hhat)
            if spelling is not None:
                c = int(spelling[j])
                logp_terms.append(ag.pick(logp, np.array([c])))
            else:
                row = np.where(char_mask(logp.shape[1], j), logp.data[0], -np.inf)
                c = int(row.argmax())
            total += float(logp.data[0, c])
            out.append(c)
            prev = np.array([c])
            if c in (EOW_ID, EOS_ID):
                break
        else:
            truncated = spelling is None
        log_prob = ag.tsum(ag.stack(logp_terms)) if spelling is not None else total
        return out, log_prob, truncated

    # ---- training ----------------------------------------------------
    def draw_noise(self, rng: np.random.Generator, n_sent: int, n_words: int):
        return None

    def forward(self, batch, training=False, rng=None, noise=None, mode="sample") -> ForwardStats:
        """Teacher-forced loss terms for a batch of (source ids, word spellings)."""
        src = [s for s, _ in batch]
        tgt = [t for _, t in batch]
        if any(len(t) == 0 for t in tgt):
            raise ValueError("empty target")
        B = len(batch)
        W = max(len(t) for t in tgt)
        if noise is None and mode == "sample" and rng is not None:
            noise = self.draw_noise(rng, B, W)
        enc, mask, init = self.encode(src, training, rng)

        # inputs: composed embedding of the previous word (BOS word first)
        prev_words = [[[BOS_ID]] + t[:-1] for t in tgt]
        flat = [w for ws in prev_words for w in ws]
        composed = self.compose(flat)
        offsets = np.cumsum([0] + [len(t) for t in tgt])
        zero_vec = Tensor(np.zeros((1, composed.shape[1]), dtype=composed.data.dtype))
        table = ag.concat([composed, zero_vec], axis=0)
        pad_row = composed.shape[0]

        ws = self.begin(init)
        word_mask = np.zeros((B, W), dtype=bool)
        for b, t in enumerate(tgt):
            word_mask[b, : len(t)] = True
        hhats = []
        reg_terms = []
        p_cont_sum = 0.0
        sparse_sum = 0.0
        for i in range(W):
            rows = np.array([offsets[b] + i if i < len(tgt[b]) else pad_row for b in range(B)])
            ws = replace(ws, prev_vec=ag.take_rows(table, rows))
            step_noise = None if noise is None else {k: v[:, i] for k, v in noise.items()}
            hhat, _, ws, lat = self.word_step(ws, enc, mask, mode, step_noise, training, rng)
            hhats.append(hhat)
            if lat is not None and lat.a is not None and lat.a.shape[-1] > 0:
                masses = dist.hardkuma_masses(dist.HardKumaParams(dist.KumaParams(lat.a, lat.b)))
                m = word_mask[:, i].astype(masses.p_cont.data.dtype)
                reg_terms.append(ag.tsum(masses.p_cont, axis=-1) * m)
                p_cont_sum += float((masses.p_cont.data.mean(axis=-1) * m).sum())
                fd = lat.f.data
                sparse_sum += float((((fd == 0) | (fd == 1)).mean(axis=-1) * m).sum())

        # character level, all words of the batch at once
        flat_idx = np.flatnonzero(word_mask.reshape(-1))
        H = self.dims.hidden
        hh = ag.stack(hhats, axis=1).reshape(B * W, H)
        hh = ag.take_rows(hh, flat_idx)
        spellings = [tgt[k // W][k % W] for k in flat_idx]
        chars, cmask = _pad(spellings)
        hc = hh
        prev = np.full(len(spellings), BOS_ID)
        terms = []
        correct = 0
        for j in range(chars.shape[1]):
            logp, hc = self.char_step(hc, prev, hh, training, rng)
            gold = chars[:, j]
            m = cmask[:, j]
            terms.append(ag.pick(logp, gold) * m.astype(logp.data.dtype))
            correct += int(((logp.data.argmax(axis=-1) == gold) & m).sum())
            prev = gold
        nll = -ag.tsum(ag.stack(terms, axis=1))
        if reg_terms:
            reg = ag.tsum(ag.stack(reg_terms, axis=1))
        else:
            reg = Tensor(np.zeros((), dtype=ag.get_dtype()))
        return ForwardStats(nll, reg, int(cmask.sum()), correct, p_cont_sum,
                            int(word_mask.sum()), sparse_sum)


class LatentMorphologyModel(HierarchicalModel):
    """Hierarchical decoder whose word representation is built from a
    Gaussian lemma and sparse hard-Kumaraswamy inflectional features."""

    variant = "lmm"

    def __init__(self, dims: ModelDims, src_vocab: Vocab, src_bpe: BpeModel, char_vocab: Vocab,
                 rng: np.random.Generator, dropout: float = 0.0, stretch_mean: bool = False):
        self.stretch_mean = stretch_mean
        super().__init__(dims, src_vocab, src_bpe, char_vocab, rng, dropout)

    def _init_latent(self, rng):
        d = self.dims
        H, M, Z, K = d.hidden, d.mlp_hidden, d.lemma, d.features
        self.loc_head = MLP(H, M, Z, rng)
        self.scale_head = MLP(H, M, Z, rng, "softplus")
        self.ab_head = MLP(Z + H, M, 2 * K, rng, "softplus")
        self.comp_head = MLP(Z + K, M, H, rng)

    def draw_noise(self, rng: np.random.Generator, n_sent: int, n_words: int):
        d = self.dims
        return {
            "z": rng.standard_normal((n_sent, n_words, d.lemma)),
            "u": rng.random((n_sent, n_words, d.features)),
        }

    def heads(self, h2: Tensor, z: Tensor):
        ab = self.ab_head(ag.concat([z, h2], axis=-1))
        K = self.dims.features
        return ab[:, :K], ab[:, K:]

    def word_repr(self, h2, mode, noise=None, lemma=None, features=None):
        """Sample (``mode="sample"``) or choose (``"point"``) the latents.

        ``lemma`` / ``features`` override z / f (used by the feature probe).
        """
        u = self.loc_head(h2)
        if lemma is not None:
            z = ag.as_tensor(lemma)
            if z.ndim == 1:
                z = Tensor(np.broadcast_to(z.data, (h2.shape[0], z.shape[0])).copy())
        elif mode == "sample":
            if noise is None:
                raise ValueError("sampling latents needs noise")
            s = self.scale_head(h2)
            z = dist.gaussian_sample_reparam(dist.GaussianParams(u, s), noise["z"])
        elif mode == "point":
            z = u
        else:
            raise ValueError(f"unknown latent mode {mode!r}")
        a, b = self.heads(h2, z)
        if features is not None:
            f = Tensor(np.broadcast_to(np.asarray(features, dtype=ag.get_dtype()),
                                       (h2.shape[0], self.dims.features)).copy())
        elif mode == "sample":
            c = dist.kuma_sample_reparam(a, b, noise["u"])
            f = dist.stretch_rectify(c)
        else:
            f = Tensor(dist.hardkuma_point_summary(dist.HardKumaParams(dist.KumaParams(a, b)),
                                                   stretch_mean=self.stretch_mean))
        t = self.comp_head(ag.concat([z, f], axis=-1))
        return t, LatentWordState(z, f, t, a, b)

    def sample_latents(self, h2: Tensor, noise) -> LatentWordState:
        return self.word_repr(h2, "sample", noise)[1]

    def point_latents(self, h2: Tensor) -> LatentWordState:
        return self.word_repr(h2, "point")[1]


def build_model(variant: str, dims: ModelDims, src_vocab: Vocab, src_bpe: BpeModel,
                tgt_vocab: Vocab, rng: np.random.Generator, tgt_bpe: BpeModel | None = None,
                dropout: float = 0.0, stretch_mean: bool = False):
    if variant in ("subword", "char"):
        return AtomicModel(variant, dims, src_vocab, src_bpe, tgt_vocab, rng, tgt_bpe, dropout)
    if variant == "hierarchical":
        return HierarchicalModel(dims, src_vocab, src_bpe, tgt_vocab, rng, dropout)
    if variant == "lmm":
        return LatentMorphologyModel(dims, src_vocab, src_bpe, tgt_vocab, rng, dropout, stretch_mean)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def is_hierarchical(model) -> bool:
    return isinstance(model, HierarchicalModel)
