import io
import math

import numpy as np
import pytest

from latmorph import autograd as ag
from latmorph import training as TR
from latmorph.autograd import Tensor
from latmorph.config import RunConfig
from latmorph.toygen import gen_corpus


def _pairs(n=6, seed=1):
    return [(p.source, p.target) for p in gen_corpus(seed, n)]


def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    TR.adam_step(TR.OptimizerState(lr=0.1), [p])
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_is_lr_sign():
    with ag.precision(64):
        p = Tensor(np.array([1.0, 1.0, 1.0]), requires_grad=True)
        p.grad = np.array([3.0, -0.01, 200.0])
        TR.adam_step(TR.OptimizerState(lr=0.01), [p])
        assert np.allclose(p.data, 1.0 - 0.01 * np.sign([3.0, -0.01, 200.0]), atol=1e-8)


def test_adam_rejects_nan():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([np.nan])
    with pytest.raises(FloatingPointError):
        TR.adam_step(TR.OptimizerState(), [p])


def test_clip_global_norm():
    a = Tensor(np.zeros(2), requires_grad=True)
    b = Tensor(np.zeros(1), requires_grad=True)
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    assert TR.clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert math.sqrt(np.sum(a.grad ** 2) + np.sum(b.grad ** 2)) == pytest.approx(1.0)
    a.grad = np.array([0.3, 0.0])
    b.grad = np.array([0.4])
    TR.clip_grad_norm([a, b], 1.0)
    assert np.array_equal(a.grad, [0.3, 0.0])


@pytest.mark.parametrize("seq,expected", [
    ([10, 9, 8], 1.0),
    ([10, 11], 0.8),
    ([10, 10], 0.8),
    ([10, 11, 12], 0.64),
])
def test_plateau_decay(seq, expected):
    opt = TR.OptimizerState(lr=1.0, decay=0.8)
    for ppl in seq:
        TR.plateau_decay(opt, ppl)
    assert opt.lr == pytest.approx(expected)


def test_perplexity_uniform_and_empty(tiny, f64):
    m = tiny("char")
    m.out_embed.table.data[...] = 0
    assert TR.perplexity(m, [("see the roads", "yollar gor")]) == pytest.approx(len(m.tgt_vocab))
    with pytest.raises(ValueError):
        TR.perplexity(m, [])


def test_metrics_perplexity_is_shared(tiny, f64):
    from latmorph.metrics import char_perplexity

    m = tiny("lmm")
    pairs = [("see the roads", "yollar gor")]
    assert char_perplexity(m, pairs) == TR.perplexity(m, pairs)


def test_perplexity_monotone_in_nll():
    lo = TR.EvalStats(10.0, 5, 0, 0.0, 0, 0.0)
    hi = TR.EvalStats(12.0, 5, 0, 0.0, 0, 0.0)
    assert lo.perplexity < hi.perplexity


def test_build_vocabularies_per_variant():
    pairs = _pairs()
    src, tgt = [s for s, _ in pairs], [t for _, t in pairs]
    _, _, tv, tb = TR.build_vocabularies("subword", src, tgt, 10, 10)
    assert tb.merges
    _, _, tv, tb = TR.build_vocabularies("lmm", src, tgt, 10, 10)
    assert not tb.merges and all(len(s) == 1 for s in tv.itos[5:])


def _cfg(**kw):
    base = dict(variant="lmm", emb=8, hidden=8, lemma_dim=3, features=2, mlp_hidden=8, batch=3,
                epochs=2, src_merges=20, tgt_merges=20, checkpoint="")
    base.update(kw)
    return RunConfig(**base)


def test_train_is_deterministic():
    pairs = _pairs()
    logs = []
    params = []
    for _ in range(2):
        buf = io.StringIO()
        r = TR.train(_cfg(dropout=0.2), pairs, pairs[:3], log_stream=buf)
        logs.append(buf.getvalue())
        params.append(b"".join(p.data.tobytes() for p in r.model.parameters()))
    assert logs[0] == logs[1]
    assert params[0] == params[1]
    assert logs[0].splitlines()[0] == TR.LOG_HEADER
    assert len(logs[0].splitlines()) == 3


def test_train_seed_changes_run():
    pairs = _pairs()
    a = TR.train(_cfg(seed=1), pairs, pairs).history[-1].train_loss
    b = TR.train(_cfg(seed=2), pairs, pairs).history[-1].train_loss
    assert a != b


def test_train_loss_decreases():
    pairs = _pairs(4)
    r = TR.train(_cfg(epochs=15, lr=0.01, decay=1.0), pairs, pairs)
    assert r.history[-1].train_loss < r.history[0].train_loss


def test_train_divergence_restores_and_raises(tmp_path, monkeypatch):
    pairs = _pairs(4)
    calls = {"n": 0}
    real = TR.adam_step

    def poisoned(opt, params):
        calls["n"] += 1
        if calls["n"] == 3:
            raise FloatingPointError("boom")
        real(opt, params)

    monkeypatch.setattr(TR, "adam_step", poisoned)
    ck = tmp_path / "m.ckpt"
    with pytest.raises(TR.TrainingDiverged) as err:
        TR.train(_cfg(batch=2, epochs=3, checkpoint=str(ck)), pairs, pairs)
    assert err.value.epoch == 2 and err.value.checkpoint == str(ck)
    assert ck.exists()


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        TR.train(_cfg(), [], _pairs())


def test_on_epoch_hook_and_early_stop():
    pairs = _pairs(3)
    seen = []
    r = TR.train(_cfg(epochs=4), pairs, pairs, on_epoch=lambda rec, m: seen.append(rec.epoch),
                 eval_train=True, target_accuracy=0.0)
    assert seen == [1] and len(r.history) == 1


def test_keep_best_restores_lowest_dev_perplexity(tmp_path):
    pairs, dev = _pairs(6), _pairs(3, seed=9)
    snaps = []
    ck = tmp_path / "m.ckpt"
    # a large step size makes dev perplexity move in both directions
    cfg = _cfg(epochs=6, lr=0.05, decay=1.0, keep_best=True, checkpoint=str(ck))
    r = TR.train(cfg, pairs, dev, on_epoch=lambda rec, m: snaps.append(
        [p.data.copy() for p in m.parameters()]))
    ppl = [rec.dev_ppl for rec in r.history]
    assert r.best_epoch == 1 + int(np.argmin(ppl)) < len(ppl)
    for p, ref in zip(r.model.parameters(), snaps[r.best_epoch - 1]):
        assert np.array_equal(p.data, ref)
    from latmorph import checkpoint as ckpt
    meta, tensors = ckpt.parse(ck.read_bytes())
    assert meta["epoch"] == r.best_epoch
    assert all(np.array_equal(tensors[n], p.data.astype("<f4"))
               for n, p in r.model.named_parameters())


def test_read_parallel(tmp_path):
    (tmp_path / "a.src").write_text("x y\n\nz\n")
    (tmp_path / "a.tgt").write_text("p\nq\nr\n")
    assert TR.read_parallel(tmp_path / "a.src", tmp_path / "a.tgt") == [("x y", "p"), ("z", "r")]
    (tmp_path / "b.tgt").write_text("p\n")
    with pytest.raises(ValueError):
        TR.read_parallel(tmp_path / "a.src", tmp_path / "b.tgt")
