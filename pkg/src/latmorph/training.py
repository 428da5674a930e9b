"""Loss assembly, Adam, plateau decay and the training loop.

The LMM objective is the single-sample reconstruction term plus the sparsity
penalty, ``nll + rho * sum_k p_cont``.  The approximate posterior is the
prior itself, so there is deliberately no KL term.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import checkpoint as ckpt
from .autograd import Tensor
from .config import RunConfig
from .models import build_model, is_hierarchical
from .tokenization import (BpeModel, Vocab, bpe_learn, bpe_segment_sentence, build_char_vocab,
                           normalize, word_frequencies)


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradient; the last good parameters were restored."""

    def __init__(self, epoch: int, step: int, checkpoint: str | None):
        self.epoch, self.step, self.checkpoint = epoch, step, checkpoint
        where = f"; last good checkpoint at {checkpoint}" if checkpoint else ""
        super().__init__(f"training diverged at epoch {epoch}, step {step}{where}")


@dataclass
class LossTerms:
    nll: Tensor
    reg: Tensor
    rho: float
    total: Tensor


def loss_terms(stats, rho: float) -> LossTerms:
    total = stats.nll + stats.reg * rho
    return LossTerms(stats.nll, stats.reg, rho, total)


def sentence_loss(model, source, target, rng=None, rho: float = 0.0, noise=None,
                  training: bool = False) -> LossTerms:
    """Single-sample loss for one pair (raw strings or id sequences)."""
    src, tgt = encode_pair(model, source, target) if isinstance(source, str) else (source, target)
    if not tgt:
        raise ValueError("sentence_loss: empty target")
    if noise is None and rng is None and is_hierarchical(model):
        rng = np.random.default_rng(0)
    stats = model.forward([(src, tgt)], training=training, rng=rng, noise=noise)
    return loss_terms(stats, rho)


# ---- optimisation -----------------------------------------------------------


@dataclass
class OptimizerState:
    lr: float = 4e-4
    decay: float = 0.8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    best: float = math.inf


def adam_step(opt: OptimizerState, params) -> None:
    """In-place bias-corrected Adam update from ``p.grad``."""
    params = list(params)
    if not opt.m:
        opt.m = [np.zeros_like(p.data) for p in params]
        opt.v = [np.zeros_like(p.data) for p in params]
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("adam_step: non-finite gradient")
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)).astype(p.data.dtype)


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


def plateau_decay(opt: OptimizerState, dev_perplexity: float) -> float:
    if dev_perplexity >= opt.best:
        opt.lr *= opt.decay
    else:
        opt.best = dev_perplexity
    return opt.lr


# ---- data -------------------------------------------------------------------


def encode_pair(model, source: str, target: str):
    return model.source_ids(source), model.target_ids(target)


def encode_pairs(model, pairs):
    return [encode_pair(model, s, t) for s, t in pairs]


def build_vocabularies(variant: str, sources, targets, src_merges: int, tgt_merges: int):
    """Source BPE + vocab and the target vocabulary for ``variant``.

    Returns (src_vocab, src_bpe, tgt_vocab, tgt_bpe).
    """
    sources = [normalize(s) for s in sources]
    targets = [normalize(t) for t in targets]
    src_bpe = bpe_learn(word_frequencies(sources), src_merges)
    src_vocab = Vocab(_ordered_units(bpe_segment_sentence(src_bpe, s) for s in sources))
    tgt_bpe = BpeModel([])
    if variant == "subword":
        tgt_bpe = bpe_learn(word_frequencies(targets), tgt_merges)
        tgt_vocab = Vocab(_ordered_units(bpe_segment_sentence(tgt_bpe, t) for t in targets))
    else:
        tgt_vocab = build_char_vocab(targets)
    return src_vocab, src_bpe, tgt_vocab, tgt_bpe


def _ordered_units(segmented) -> list[str]:
    from collections import Counter
    counts = Counter(u for units in segmented for u in units)
    return [u for u, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def _as_encoded(model, pairs):
    if pairs and isinstance(pairs[0][0], str):
        return encode_pairs(model, pairs)
    return list(pairs)


# ---- evaluation -------------------------------------------------------------


@dataclass
class EvalStats:
    nll: float
    n_segments: int
    n_correct: int
    p_cont_sum: float
    n_words: int
    sparse_fraction_sum: float

    @property
    def perplexity(self) -> float:
        return math.exp(self.nll / self.n_segments)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_segments

    @property
    def mean_p_cont(self) -> float:
        return self.p_cont_sum / self.n_words if self.n_words else 0.0

    @property
    def sparse_fraction(self) -> float:
        return self.sparse_fraction_sum / self.n_words if self.n_words else 0.0


def evaluate(model, pairs, batch_size: int = 32) -> EvalStats:
    """Teacher-forced statistics with point latents and no dropout."""
    data = _as_encoded(model, pairs)
    if not data:
        raise ValueError("evaluate: empty corpus")
    tot = EvalStats(0.0, 0, 0, 0.0, 0, 0.0)
    with ag.no_grad():
        for i in range(0, len(data), batch_size):
            st = model.forward(data[i:i + batch_size], training=False, rng=None, mode="point")
            tot.nll += float(st.nll.data)
            tot.n_segments += st.n_segments
            tot.n_correct += st.n_correct
            tot.p_cont_sum += st.p_cont_sum
            tot.n_words += st.n_words
            tot.sparse_fraction_sum += st.sparse_fraction_sum
    return tot


def perplexity(model, pairs) -> float:
    """exp(total NLL / number of predicted segments)."""
    return evaluate(model, pairs).perplexity


# ---- training loop ----------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_ppl: float
    lr: float
    mean_p_cont: float
    train_accuracy: float = 0.0
    seconds: float = 0.0

    def line(self) -> str:
        return (f"{self.epoch}\t{self.train_loss:.6f}\t{self.dev_ppl:.6f}\t"
                f"{self.lr:.6g}\t{self.mean_p_cont:.6f}")


LOG_HEADER = "epoch\ttrain_loss\tdev_ppl\tlr\tmean_p_cont"


@dataclass
class TrainResult:
    model: object
    history: list
    optimizer: OptimizerState
    best_epoch: int = 0

    @property
    def log_lines(self) -> list[str]:
        return [r.line() for r in self.history]


def make_model(cfg: RunConfig, train_pairs, rng: np.random.Generator):
    src_vocab, src_bpe, tgt_vocab, tgt_bpe = build_vocabularies(
        cfg.variant, [s for s, _ in train_pairs], [t for _, t in train_pairs],
        cfg.src_merges, cfg.tgt_merges)
    return build_model(cfg.variant, cfg.dims(), src_vocab, src_bpe, tgt_vocab, rng, tgt_bpe,
                       cfg.dropout, cfg.stretch_mean)


def _snapshot(params):
    return [p.data.copy() for p in params]


def train(cfg: RunConfig, train_pairs, dev_pairs, log_stream=None, eval_train: bool = False,
          target_accuracy: float | None = None, on_epoch=None) -> TrainResult:
    """Train ``cfg.variant`` on raw (source, target) sentence pairs.

    Every source of randomness (initialisation, batch order, dropout, latent
    noise) derives from ``cfg.seed``.  After each epoch the dev perplexity is
    logged, the learning rate decays on plateau and, when ``cfg.checkpoint``
    is set, the checkpoint is rewritten.  ``target_accuracy`` stops early once
    teacher-forced training accuracy reaches it (requires ``eval_train``).
    ``on_epoch(record, model)`` runs after each epoch's bookkeeping.  With
    ``cfg.keep_best`` the parameters from the epoch with the lowest dev
    perplexity are restored (and checkpointed) when training ends.
    """
    cfg.validate()
    if not train_pairs or not dev_pairs:
        raise ValueError("train: empty training or dev corpus")
    init_ss, order_ss, noise_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    model = make_model(cfg, train_pairs, np.random.default_rng(init_ss))
    order_rng = np.random.default_rng(order_ss)
    noise_rng = np.random.default_rng(noise_ss)
    data = encode_pairs(model, train_pairs)
    dev = encode_pairs(model, dev_pairs)
    params = model.parameters()
    opt = OptimizerState(lr=cfg.lr, decay=cfg.decay)
    rho = cfg.rho if cfg.variant == "lmm" else 0.0
    history: list[EpochRecord] = []
    good = _snapshot(params)
    best_ppl, best_epoch, best_params = math.inf, 0, None
    path = cfg.checkpoint or None
    if log_stream is not None:
        log_stream.write(LOG_HEADER + "\n")

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(data))
        total = 0.0
        for step, start in enumerate(range(0, len(data), cfg.batch)):
            batch = [data[k] for k in order[start:start + cfg.batch]]
            for p in params:
                p.grad = None
            stats = model.forward(batch, training=True, rng=noise_rng)
            terms = loss_terms(stats, rho)
            value = float(terms.total.data)
            try:
                if not math.isfinite(value):
                    raise FloatingPointError("non-finite loss")
                (terms.total * (1.0 / len(batch))).backward()
                clip_grad_norm(params, cfg.clip_norm)
                adam_step(opt, params)
            except FloatingPointError:
                for p, arr in zip(params, good):
                    p.data = arr
                if path:
                    ckpt.save(model, path, cfg.seed, {"epoch": epoch - 1})
                raise TrainingDiverged(epoch, step, path) from None
            total += value
        dev_stats = evaluate(model, dev)
        record = EpochRecord(epoch, total / len(data), dev_stats.perplexity, opt.lr,
                             dev_stats.mean_p_cont)
        plateau_decay(opt, dev_stats.perplexity)
        if eval_train:
            record.train_accuracy = evaluate(model, data).accuracy
        record.seconds = time.perf_counter() - t0
        history.append(record)
        good = _snapshot(params)
        if cfg.keep_best and record.dev_ppl < best_ppl:
            best_ppl, best_epoch, best_params = record.dev_ppl, epoch, good
        if log_stream is not None:
            log_stream.write(record.line() + "\n")
            log_stream.flush()
        if path:
            ckpt.save(model, path, cfg.seed, {"epoch": epoch})
        if on_epoch is not None:
            on_epoch(record, model)
        if target_accuracy is not None and record.train_accuracy >= target_accuracy:
            break
    if best_params is not None and best_epoch != history[-1].epoch:
        for p, arr in zip(params, best_params):
            p.data = arr.copy()
        if path:
            ckpt.save(model, path, cfg.seed, {"epoch": best_epoch})
    return TrainResult(model, history, opt, best_epoch or history[-1].epoch)


def read_parallel(src_path, tgt_path):
    src = Path(src_path).read_text(encoding="utf-8").splitlines()
    tgt = Path(tgt_path).read_text(encoding="utf-8").splitlines()
    if len(src) != len(tgt):
        raise ValueError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    return [(normalize(s), normalize(t)) for s, t in zip(src, tgt) if s.strip() and t.strip()]
