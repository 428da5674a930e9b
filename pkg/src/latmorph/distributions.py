"""Gaussian and (hard) Kumaraswamy machinery for the latent word model.

All sampling routines take their noise as an explicit argument so a sample
is a deterministic, differentiable function of the distribution parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import autograd as ag
from .autograd import Tensor

#: stretch bounds of the rectified distribution
LOWER = -0.1
UPPER = 1.1
#: uniform noise is kept this far from {0, 1}
EPS_CLAMP = 1e-7


@dataclass
class GaussianParams:
    loc: Tensor
    scale: Tensor

    def __post_init__(self):
        self.loc, self.scale = ag.as_tensor(self.loc), ag.as_tensor(self.scale)
        if self.loc.shape != self.scale.shape:
            raise ag.ShapeError("GaussianParams", self.loc.shape, self.scale.shape)


@dataclass
class KumaParams:
    a: Tensor
    b: Tensor

    def __post_init__(self):
        self.a, self.b = ag.as_tensor(self.a), ag.as_tensor(self.b)
        if self.a.shape != self.b.shape:
            raise ag.ShapeError("KumaParams", self.a.shape, self.b.shape)


@dataclass
class HardKumaParams:
    kuma: KumaParams
    lower: float = LOWER
    upper: float = UPPER

    def __post_init__(self):
        if not (self.lower < 0.0 < 1.0 < self.upper):
            raise ValueError(f"need lower < 0 < 1 < upper, got ({self.lower}, {self.upper})")


@dataclass
class SparseMassTriple:
    """Probabilities of a rectified feature being 0, 1, or strictly inside."""

    p_zero: Tensor
    p_one: Tensor
    p_cont: Tensor


# ---- Gaussian ------------------------------------------------------------

def gaussian_sample_reparam(params: GaussianParams, eps) -> Tensor:
    eps = np.asarray(eps.data if isinstance(eps, Tensor) else eps)
    if eps.shape != params.loc.shape:
        raise ag.ShapeError("gaussian_sample_reparam", params.loc.shape, eps.shape)
    return params.loc + params.scale * eps


def gaussian_point_summary(params: GaussianParams) -> Tensor:
    return params.loc


# ---- Kumaraswamy ---------------------------------------------------------

def kuma_cdf(x, a, b) -> Tensor:
    """``1 - (1 - x**a)**b`` for constant ``x`` in [0, 1]."""
    a, b = ag.as_tensor(a), ag.as_tensor(b)
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("kuma_cdf: x must lie in [0, 1]")
    inner = np.clip(x, 1e-300, 1.0 - 1e-16)
    log_x = np.log(inner).astype(a.data.dtype)
    # log(1 - x^a), then F = -expm1(b * that)
    log_tail = ag.log1mexp(a * log_x)
    cdf = 1.0 - ag.exp(b * log_tail)
    if np.any(x == 0) or np.any(x == 1):
        shape = np.broadcast_shapes(cdf.shape, x.shape)
        cdf = ag.where(np.broadcast_to(x == 0, shape), np.zeros(shape), cdf)
        cdf = ag.where(np.broadcast_to(x == 1, shape), np.ones(shape), cdf)
    return cdf


def kuma_sample_reparam(a, b, eps) -> Tensor:
    """Inverse-CDF sample ``(1 - (1 - eps)**(1/b))**(1/a)``.

    ``eps`` is uniform noise; it is clamped to ``[1e-7, 1 - 1e-7]``.
    """
    a, b = ag.as_tensor(a), ag.as_tensor(b)
    eps = np.asarray(eps.data if isinstance(eps, Tensor) else eps, dtype=np.float64)
    if eps.shape != a.shape:
        raise ag.ShapeError("kuma_sample_reparam", a.shape, eps.shape)
    eps = np.clip(eps, EPS_CLAMP, 1.0 - EPS_CLAMP)
    log_keep = np.log1p(-eps).astype(a.data.dtype)
    # log c = log(1 - exp(log(1-eps) / b)) / a
    log_c = ag.log1mexp(log_keep / b) / a
    return ag.exp(log_c)


def kuma_mean(a, b) -> np.ndarray:
    """Mean ``b * Beta(1 + 1/a, b)``, evaluated through log-gamma."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    return np.exp(np.log(b) + gammaln(1.0 + 1.0 / a) + gammaln(b) - gammaln(1.0 + 1.0 / a + b))


# ---- stretch and rectify -------------------------------------------------

def stretch_rectify(c, lower: float = LOWER, upper: float = UPPER) -> Tensor:
    """``min(1, max(0, lower + (upper - lower) * c))``."""
    return ag.clamp(lower + (upper - lower) * ag.as_tensor(c), 0.0, 1.0)


def hardkuma_sample(params: HardKumaParams, eps) -> Tensor:
    c = kuma_sample_reparam(params.kuma.a, params.kuma.b, eps)
    return stretch_rectify(c, params.lower, params.upper)


def hardkuma_masses(params: HardKumaParams) -> SparseMassTriple:
    lo, hi = params.lower, params.upper
    a, b = params.kuma.a, params.kuma.b
    p_zero = kuma_cdf(-lo / (hi - lo), a, b)
    p_one = 1.0 - kuma_cdf((1.0 - lo) / (hi - lo), a, b)
    p_cont = 1.0 - p_zero - p_one
    return SparseMassTriple(p_zero, p_one, p_cont)


def hardkuma_point_summary(params: HardKumaParams, stretch_mean: bool = False) -> np.ndarray:
    """Most probable of {0, 1, continuous} per feature.

    When the continuous configuration wins the Kumaraswamy mean is returned,
    either raw (default) or stretched and rectified like a sample.  Ties go
    to 0, then 1.
    """
    m = hardkuma_masses(params)
    table = np.stack([m.p_zero.data, m.p_one.data, m.p_cont.data])
    choice = np.argmax(table, axis=0)
    mean = kuma_mean(params.kuma.a, params.kuma.b)
    if stretch_mean:
        lo, hi = params.lower, params.upper
        mean = np.clip(lo + (hi - lo) * mean, 0.0, 1.0)
    out = np.where(choice == 0, 0.0, np.where(choice == 1, 1.0, mean))
    return out.astype(params.kuma.a.data.dtype)
