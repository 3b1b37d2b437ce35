"""Similarity maps, the composite reconstruction loss, and ROC AUC.

SSIM and GMS are built from engine primitives so the loss stays
differentiable end to end; the public ``*_map`` functions accept plain
arrays and return plain arrays. Inputs are channel-last ``(..., H, W, C)``
with values in [0, 1]; maps are channel-averaged to ``(..., H, W)``.
"""

from dataclasses import dataclass

import numpy as np

from . import engine as E
from .imgutils import gaussian_kernel1d

__all__ = [
    "LossWeights",
    "ssim_map",
    "gms_map",
    "ssim_tensor",
    "gms_tensor",
    "inpaint_loss",
    "inpaint_loss_tensor",
    "roc_auc",
]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
GMS_C = 0.0026
_GRAD_EPS = 1e-12

_SMOOTH3 = np.array([1.0, 1.0, 1.0]) / 3.0
_DIFF3 = np.array([1.0, 0.0, -1.0])


@dataclass(frozen=True)
class LossWeights:
    """Scales for the gradient-similarity and structural-similarity terms."""

    alpha: float = 0.01
    beta: float = 0.01

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


def _spatial_pads(ndim, pad):
    pads = [(0, 0)] * ndim
    pads[ndim - 3] = (pad, pad)
    pads[ndim - 2] = (pad, pad)
    return pads


def _blur(x, kernel):
    """Same-size separable filtering over the two spatial axes."""
    pad = (kernel.shape[0] - 1) // 2
    x = E.pad_reflect(x, _spatial_pads(x.ndim, pad))
    x = E.correlate1d(x, kernel, axis=x.ndim - 3)
    return E.correlate1d(x, kernel, axis=x.ndim - 2)


def _check_pair(name, a, b):
    if a.shape != b.shape:
        raise E.ShapeError(f"{name}: shapes differ: {a.shape} vs {b.shape}")
    if a.ndim < 3:
        raise E.ShapeError(f"{name}: expected (..., H, W, C), got {a.shape}")


def ssim_tensor(a, b):
    """Structural similarity map as a graph tensor, channel-averaged.

    Gaussian 11x11 window (sigma 1.5), constants for unit dynamic range,
    reflection padding keeps the map the same spatial size as the inputs.
    The five windowed moments share one filtering pass over stacked
    channels, which keeps the graph small on hot training paths.
    """
    a, b = E.as_tensor(a), E.as_tensor(b)
    _check_pair("ssim", a, b)
    kernel = gaussian_kernel1d(SSIM_WINDOW, SSIM_SIGMA)
    stacked = E.concat([a, b, E.mul(a, a), E.mul(b, b), E.mul(a, b)], axis=-1)
    mu_a, mu_b, m_aa, m_bb, m_ab = E.split(_blur(stacked, kernel), 5, axis=-1)
    var_a = E.sub(m_aa, E.mul(mu_a, mu_a))
    var_b = E.sub(m_bb, E.mul(mu_b, mu_b))
    cov = E.sub(m_ab, E.mul(mu_a, mu_b))
    num = E.mul(
        E.add(E.mul(2.0, E.mul(mu_a, mu_b)), SSIM_C1),
        E.add(E.mul(2.0, cov), SSIM_C2),
    )
    den = E.mul(
        E.add(E.add(E.mul(mu_a, mu_a), E.mul(mu_b, mu_b)), SSIM_C1),
        E.add(E.add(var_a, var_b), SSIM_C2),
    )
    return E.mean(E.div(num, den), axis=-1)


def _gradient_magnitude(x):
    rows, cols = x.ndim - 3, x.ndim - 2
    padded = E.pad_reflect(x, _spatial_pads(x.ndim, 1))
    gx = E.correlate1d(E.correlate1d(padded, _SMOOTH3, rows), _DIFF3, cols)
    gy = E.correlate1d(E.correlate1d(padded, _DIFF3, rows), _SMOOTH3, cols)
    # eps keeps the sqrt differentiable on perfectly flat regions
    return E.sqrt(E.add(E.add(E.mul(gx, gx), E.mul(gy, gy)), _GRAD_EPS))


def gms_tensor(a, b):
    """Gradient magnitude similarity map as a graph tensor, channel-averaged.

    3x3 Prewitt gradients with reflection padding; the stability constant
    is the reference value rescaled to unit dynamic range. Both inputs
    share one gradient pass over stacked channels.
    """
    a, b = E.as_tensor(a), E.as_tensor(b)
    _check_pair("gms", a, b)
    m_a, m_b = E.split(_gradient_magnitude(E.concat([a, b], axis=-1)), 2, axis=-1)
    num = E.add(E.mul(2.0, E.mul(m_a, m_b)), GMS_C)
    den = E.add(E.add(E.mul(m_a, m_a), E.mul(m_b, m_b)), GMS_C)
    return E.mean(E.div(num, den), axis=-1)


def _as_map_input(arr):
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -1e-6 or hi > 1.0 + 1e-6:
        raise ValueError(f"inputs must lie in [0, 1], got range [{lo}, {hi}]")
    return arr


def ssim_map(a, b):
    """Per-pixel SSIM of two equal-shaped images, channel-averaged."""
    a, b = _as_map_input(a), _as_map_input(b)
    with E.no_grad():
        return ssim_tensor(a, b).data


def gms_map(a, b):
    """Per-pixel gradient magnitude similarity, channel-averaged."""
    a, b = _as_map_input(a), _as_map_input(b)
    with E.no_grad():
        return gms_tensor(a, b).data


def inpaint_loss_tensor(original, reconstructed, weights=LossWeights()):
    """Mean squared error plus weighted GMS and SSIM dissimilarity terms.

    Accepts single patches ``(K, K, C)`` or batches ``(B, K, K, C)``; for
    batches the per-pair losses are averaged. The SSIM term is clamped at
    zero from below (SSIM may go negative) so the loss stays non-negative.
    """
    x, y = E.as_tensor(original), E.as_tensor(reconstructed)
    _check_pair("inpaint_loss", x, y)
    diff = E.sub(x, y)
    l2 = E.mean(E.mul(diff, diff))
    gms_term = E.mean(E.sub(1.0, gms_tensor(x, y)))
    ssim_term = E.mean(E.relu(E.sub(1.0, ssim_tensor(x, y))))
    return E.add(
        l2,
        E.add(E.mul(weights.alpha, gms_term), E.mul(weights.beta, ssim_term)),
    )


def inpaint_loss(original, reconstructed, weights=LossWeights()):
    """Scalar reconstruction loss between two patches (see the tensor form)."""
    with E.no_grad():
        return float(inpaint_loss_tensor(original, reconstructed, weights).item())


def roc_auc(scores, labels):
    """Probability that a random positive outscores a random negative.

    Computed from average ranks so ties are credited half a win; matches
    exhaustive pair counting exactly, ties included.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(
            f"scores and labels differ in length: {scores.size} vs {labels.size}"
        )
    unique = set(np.unique(labels).tolist())
    if not unique <= {0, 1}:
        raise ValueError(f"labels must be 0 or 1, got {sorted(unique)}")
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    ranked = scores[order]
    new_group = np.r_[True, ranked[1:] != ranked[:-1]]
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank_per_group = starts + (counts - 1) / 2.0 + 1.0
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = avg_rank_per_group[group]
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
