import numpy as np
import pytest

from latmorph import autograd as ag
from latmorph import layers as L
from latmorph.autograd import Tensor

GRAD_TOL = 1e-4


def _randomize(module, rng, scale=0.5):
    for p in module.parameters():
        p.data[...] = rng.uniform(-scale, scale, p.shape)


def test_init_ranges():
    rng = np.random.default_rng(0)
    d = L.Dense(4, 3, rng)
    assert np.all(np.abs(d.weight.data) <= L.INIT_RANGE)
    assert np.all(d.bias.data == 0)


def test_gru_step_shape_check():
    cell = L.GRUCell(3, 2, np.random.default_rng(0))
    with pytest.raises(ag.ShapeError):
        L.gru_step(cell, np.zeros((1, 4)), np.zeros((1, 2)))


def test_gru_zero_params_half_update(f64):
    cell = L.GRUCell(1, 1, np.random.default_rng(0))
    for p in cell.parameters():
        p.data[...] = 0
    assert float(L.gru_step(cell, np.zeros((1, 1)), np.ones((1, 1))).data[0, 0]) == 0.5


def test_embedding_range():
    emb = L.Embedding(4, 2, np.random.default_rng(0))
    with pytest.raises(IndexError):
        emb(np.array([4]))


def test_bi_rnn_lengths_and_order(f64):
    rng = np.random.default_rng(1)
    f, b = L.GRUCell(2, 3, rng), L.GRUCell(2, 3, rng)
    seq = [rng.standard_normal(2) for _ in range(3)]
    out = L.bi_rnn_encode(f, b, seq)
    assert out.shape == (3, 6)
    assert L.bi_rnn_encode(f, b, seq[:1]).shape == (1, 6)
    swapped = L.bi_rnn_encode(f, b, [seq[1], seq[0], seq[2]])
    assert not np.allclose(out.data, swapped.data)
    with pytest.raises(ValueError):
        L.bi_rnn_encode(f, b, [])


def test_padding_does_not_leak(f64):
    rng = np.random.default_rng(2)
    f, b = L.GRUCell(2, 3, rng), L.GRUCell(2, 3, rng)
    x = rng.standard_normal((1, 2, 2))
    padded = np.concatenate([x, rng.standard_normal((1, 1, 2))], axis=1)
    mask = np.array([[True, True, False]])
    a = L.bi_rnn_encode(f, b, Tensor(x)).data
    p = L.bi_rnn_encode(f, b, Tensor(padded), mask).data
    assert np.allclose(a[0], p[0, :2], atol=1e-12)


def test_attention_single_state_and_uniform(f64):
    rng = np.random.default_rng(3)
    attn = L.DotAttention(4, 4, rng)
    e = rng.standard_normal(4)
    st = L.dot_attention(attn, rng.standard_normal(4), [e])
    assert np.allclose(st.weights.data, [[1.0]])
    assert np.allclose(st.context.data[0], e)
    st = L.dot_attention(attn, np.zeros(4), [rng.standard_normal(4) for _ in range(3)])
    assert np.allclose(st.weights.data, 1 / 3)
    with pytest.raises(ValueError):
        L.dot_attention(attn, np.zeros(4), [])


def test_attention_mask_excludes_padding(f64):
    rng = np.random.default_rng(4)
    attn = L.DotAttention(3, 3, rng)
    enc = Tensor(rng.standard_normal((1, 3, 3)))
    st = attn(Tensor(rng.standard_normal((1, 3))), enc, np.array([[True, True, False]]))
    assert st.weights.data[0, 2] < 1e-12


def test_char_compose_empty_word():
    comp = L.CharComposer(2, 3, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        L.char_compose(comp, [])


@pytest.mark.criterion(3)
def test_dot_attention_gradient(f64):
    rng = np.random.default_rng(5)
    attn = L.DotAttention(4, 4, rng)
    _randomize(attn, rng)
    h = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
    enc = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
    mask = np.array([[True, True, True], [True, True, False]])
    w = rng.standard_normal((2, 4))

    def loss():
        st = attn(h, enc, mask)
        return ag.tsum(st.attentional * w) + ag.tsum(st.context * w)

    assert ag.finite_diff_check(loss, [h, enc] + list(attn.parameters())) <= GRAD_TOL


@pytest.mark.criterion(3)
def test_char_compose_gradient(f64):
    rng = np.random.default_rng(6)
    comp = L.CharComposer(3, 2, 4, rng)
    _randomize(comp, rng)
    chars = Tensor(rng.standard_normal((2, 3, 3)), requires_grad=True)
    mask = np.array([[True, True, True], [True, False, False]])
    w = rng.standard_normal((2, 4))
    assert ag.finite_diff_check(lambda: ag.tsum(comp(chars, mask) * w),
                                [chars] + list(comp.parameters())) <= GRAD_TOL
    single = [Tensor(rng.standard_normal(3), requires_grad=True) for _ in range(3)]
    assert ag.finite_diff_check(lambda: ag.tsum(L.char_compose(comp, single) * w[0]), single) <= GRAD_TOL


@pytest.mark.criterion(3)
def test_encoder_gradient(f64):
    rng = np.random.default_rng(7)
    f, b = L.GRUCell(2, 3, rng), L.GRUCell(2, 3, rng)
    _randomize(f, rng)
    _randomize(b, rng)
    x = Tensor(rng.standard_normal((1, 3, 2)), requires_grad=True)
    w = rng.standard_normal((1, 3, 6))
    assert ag.finite_diff_check(lambda: ag.tsum(L.bi_rnn_encode(f, b, x) * w),
                                [x] + list(f.parameters()) + list(b.parameters())) <= GRAD_TOL


def test_mlp_softplus_positive(f64):
    rng = np.random.default_rng(8)
    m = L.MLP(3, 4, 2, rng, "softplus")
    assert np.all(m(Tensor(rng.standard_normal((5, 3)) * 10)).data > 0)
