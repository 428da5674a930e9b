"""Neural building blocks: dense layers, GRU cells, bi-RNN, dot attention,
character composition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor

INIT_RANGE = 0.08
_NEG = -1e9


class Module:
    """Parameter container; parameters are discovered by attribute order."""

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix + key + ".")
            elif isinstance(val, (list, tuple)) and val and isinstance(val[0], Module):
                for i, m in enumerate(val):
                    yield from m.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def _uniform(rng: np.random.Generator, shape) -> Tensor:
    data = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape).astype(ag.get_dtype())
    return Tensor(data, requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=ag.get_dtype()), requires_grad=True)


_ACTIVATIONS = {
    "none": lambda x: x,
    "tanh": ag.tanh,
    "softplus": ag.softplus,
}


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 activation: str = "none", bias: bool = True):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weight = _uniform(rng, (n_out, n_in))
        self.bias = _zeros((n_out,)) if bias else None
        self.activation = activation

    def __call__(self, x) -> Tensor:
        return _ACTIVATIONS[self.activation](ag.linear(x, self.weight, self.bias))


class MLP(Module):
    """Two-layer perceptron: tanh hidden layer, then an output layer."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator,
                 activation: str = "none"):
        self.hidden = Dense(n_in, n_hidden, rng, "tanh")
        self.out = Dense(n_hidden, n_out, rng, activation)

    def __call__(self, x) -> Tensor:
        return self.out(self.hidden(x))


class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        self.table = _uniform(rng, (vocab_size, dim))

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IndexError(f"symbol id out of range [0, {self.vocab_size})")
        return ag.take_rows(self.table, ids)


class GRUCell(Module):
    """GRU with gates z = σ(W_z x + U_z h + b_z), r = σ(W_r x + U_r h + b_r),
    candidate tanh(W x + U (r ⊙ h) + b) and h' = (1 - z) ⊙ h + z ⊙ candidate."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.w_ih = _uniform(rng, (3 * hidden, n_in))
        self.w_hh = _uniform(rng, (3 * hidden, hidden))
        self.bias = _zeros((3 * hidden,))
        self.hidden = hidden
        self.n_in = n_in

    def __call__(self, x, h) -> Tensor:
        return ag.gru_cell(x, h, self.w_ih, self.w_hh, self.bias)

    def zero_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden), dtype=ag.get_dtype()))


def gru_step(cell: GRUCell, x, h_prev) -> Tensor:
    x, h_prev = ag.as_tensor(x), ag.as_tensor(h_prev)
    if x.shape[-1] != cell.n_in or h_prev.shape[-1] != cell.hidden:
        raise ag.ShapeError("gru_step", x.shape, h_prev.shape)
    return cell(x, h_prev)


def run_rnn(cell: GRUCell, xs: Tensor, mask: np.ndarray | None = None,
            reverse: bool = False, h0: Tensor | None = None):
    """Run ``cell`` over ``xs`` [B, T, I].

    Padded steps (``mask`` 0) carry the previous state, so in reverse mode
    each row effectively starts at its last real position.  Returns the list
    of per-step states (in input order) and the final state.
    """
    batch, steps = xs.shape[0], xs.shape[1]
    h = cell.zero_state(batch) if h0 is None else h0
    out = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h_new = cell(xs[:, t], h)
        if mask is not None and not mask[:, t].all():
            h_new = ag.where(mask[:, t, None].astype(bool), h_new, h)
        h = h_new
        out[t] = h
    return out, h


def bi_rnn_encode(fwd: GRUCell, bwd: GRUCell, seq, mask: np.ndarray | None = None) -> Tensor:
    """Concatenate forward and backward states per position.

    ``seq`` is either a list of vectors (single sequence) or a [B, T, I]
    tensor.  Returns [B, T, 2H] (or [T, 2H] for list input).
    """
    single = isinstance(seq, (list, tuple))
    if single:
        if not seq:
            raise ValueError("bi_rnn_encode: empty sequence")
        xs = ag.stack([ag.as_tensor(v).reshape(1, -1) for v in seq], axis=1)
    else:
        xs = ag.as_tensor(seq)
        if xs.shape[1] == 0:
            raise ValueError("bi_rnn_encode: empty sequence")
    f_states, _ = run_rnn(fwd, xs, mask)
    b_states, _ = run_rnn(bwd, xs, mask, reverse=True)
    out = ag.stack([ag.concat([f, b], axis=-1) for f, b in zip(f_states, b_states)], axis=1)
    return out[0] if single else out


@dataclass
class AttentionState:
    context: Tensor
    attentional: Tensor
    weights: Tensor


class DotAttention(Module):
    """Luong dot-product attention plus the attentional-vector projection."""

    def __init__(self, query_dim: int, ctx_dim: int, rng: np.random.Generator):
        if query_dim != ctx_dim:
            raise ValueError("dot attention needs equal query and context sizes")
        self.combine = Dense(ctx_dim + query_dim, query_dim, rng, "tanh", bias=False)

    def context(self, h: Tensor, enc: Tensor, mask: np.ndarray | None = None):
        """Return (context [B, D], weights [B, S]) for queries ``h`` [B, D]."""
        if enc.shape[1] == 0:
            raise ValueError("dot_attention: no encoder states")
        if h.shape[-1] != enc.shape[-1]:
            raise ag.ShapeError("dot_attention", h.shape, enc.shape)
        scores = ag.matmul(enc, h.reshape(h.shape[0], -1, 1)).reshape(enc.shape[0], enc.shape[1])
        if mask is not None and not mask.all():
            scores = scores + np.where(mask, 0.0, _NEG)
        weights = ag.softmax(scores, axis=-1)
        ctx = ag.matmul(weights.reshape(weights.shape[0], 1, -1), enc).reshape(enc.shape[0], -1)
        return ctx, weights

    def attentional(self, ctx: Tensor, query: Tensor) -> Tensor:
        return self.combine(ag.concat([ctx, query], axis=-1))

    def __call__(self, h: Tensor, enc: Tensor, mask: np.ndarray | None = None) -> AttentionState:
        ctx, weights = self.context(h, enc, mask)
        return AttentionState(ctx, self.attentional(ctx, h), weights)


def dot_attention(attn: DotAttention, h, enc_states, mask=None) -> AttentionState:
    """Single-query convenience form over a list of encoder vectors."""
    if isinstance(enc_states, (list, tuple)):
        if not enc_states:
            raise ValueError("dot_attention: no encoder states")
        enc = ag.stack([ag.as_tensor(e) for e in enc_states], axis=0).reshape(1, len(enc_states), -1)
    else:
        enc = ag.as_tensor(enc_states)
    h = ag.as_tensor(h)
    if h.ndim == 1:
        h = h.reshape(1, -1)
    return attn(h, enc, mask)


class CharComposer(Module):
    """Word vector from a character bi-RNN: W_f h_fwd + W_b h_bwd + bias."""

    def __init__(self, char_dim: int, hidden: int, out_dim: int, rng: np.random.Generator):
        self.fwd = GRUCell(char_dim, hidden, rng)
        self.bwd = GRUCell(char_dim, hidden, rng)
        self.proj_f = Dense(hidden, out_dim, rng, bias=False)
        self.proj_b = Dense(hidden, out_dim, rng, bias=False)
        self.bias = _zeros((out_dim,))

    def __call__(self, char_embs: Tensor, mask: np.ndarray | None = None) -> Tensor:
        """``char_embs`` [N, L, E] with ``mask`` [N, L] -> [N, out]."""
        if char_embs.shape[1] == 0:
            raise ValueError("char_compose: empty word")
        _, h_f = run_rnn(self.fwd, char_embs, mask)
        _, h_b = run_rnn(self.bwd, char_embs, mask, reverse=True)
        return self.proj_f(h_f) + self.proj_b(h_b) + self.bias


def char_compose(composer: CharComposer, char_embs) -> Tensor:
    """Compose a single word given as a list of character vectors."""
    if not len(char_embs):
        raise ValueError("char_compose: empty word")
    xs = ag.stack([ag.as_tensor(v).reshape(1, -1) for v in char_embs], axis=1)
    return composer(xs)[0]
