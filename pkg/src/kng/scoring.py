"""Anomaly scoring: per-patch Mahalanobis distance to the nearest neuron,
upsampling to image resolution, Gaussian smoothing, and the image-level max.

Precision matrices are (cov + eps*I)^-1 via Cholesky, computed lazily per
neuron and cached on the model. If factorization fails the ridge escalates
tenfold, at most three times, before giving up; escalation is a numerical
safety valve and in practice never triggers for eps from the default config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from . import kernels
from .errors import NumericError, StateError, ValidationError
from .model import KngModel


@dataclass
class ScoreConfig:
    """Map post-processing: smoothing width and optional output size."""
    sigma: float = 4.0
    target_size: tuple[int, int] | None = None

    def __post_init__(self):
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        if self.target_size is not None:
            h, w = self.target_size
            if h < 1 or w < 1:
                raise ValidationError(f"bad target size {self.target_size}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-d Gaussian tap weights, radius ceil(4*sigma)."""
    if sigma == 0.0:
        return np.ones(1, dtype=np.float64)
    r = math.ceil(4.0 * sigma)
    xs = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-0.5 * (xs / sigma) ** 2)
    return w / w.sum()


def precision(model: KngModel, i: int) -> np.ndarray:
    """Cached (cov_i + eps*I)^-1, symmetrized."""
    cached = model._precisions.get(i)
    if cached is not None:
        return cached
    d = model.config.dim
    cov = model.covs[i]
    eps = model.config.epsilon
    eye = np.eye(d)
    for attempt in range(4):
        try:
            chol = np.linalg.cholesky(cov + eps * eye)
        except np.linalg.LinAlgError:
            eps *= 10.0  # escalate the ridge, three retries max
            continue
        p = cho_solve((chol, True), eye)
        p = 0.5 * (p + p.T)
        model._precisions[i] = p
        return p
    raise NumericError(
        f"covariance of neuron {i} cannot be factorized even with "
        f"ridge {eps / 10.0}")


def mahalanobis(model: KngModel, i: int, x: np.ndarray) -> np.ndarray:
    """Mahalanobis distance from embeddings x (n, dim) to neuron i."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.dim:
        raise ValidationError(
            f"embeddings must be (n, {model.config.dim}), got {x.shape}")
    q = kernels.quad_form(x - model.centers[i], precision(model, i))
    return np.sqrt(np.maximum(q, 0.0))


def score_map(model: KngModel, t: np.ndarray,
              cfg: ScoreConfig | None = None) -> np.ndarray:
    """Anomaly map for one feature tensor (H, W, model dim).

    Each patch is scored against its nearest neuron by Mahalanobis distance;
    the patch-grid map is then bilinearly resized to cfg.target_size (if set)
    and Gaussian-smoothed. Returns float64 (H', W').
    """
    if not model.trained:
        raise StateError("model is not initialized")
    if cfg is None:
        cfg = ScoreConfig()
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[-1] != model.config.dim:
        raise ValidationError(
            f"feature tensor must be (H, W, {model.config.dim}), got {t.shape}")
    h, w = t.shape[:2]
    x = np.ascontiguousarray(t.reshape(-1, model.config.dim), dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValidationError("feature tensor contains non-finite values")

    s1, _, _, _ = kernels.nearest_two(x, model.centers)
    scores = np.empty(len(x), dtype=np.float64)
    order = np.argsort(s1, kind="stable")
    sorted_s1 = s1[order]
    uniq, starts = np.unique(sorted_s1, return_index=True)
    bounds = np.append(starts, len(sorted_s1))
    for u, lo, hi in zip(uniq, bounds[:-1], bounds[1:]):
        i = int(u)
        rows = order[lo:hi]
        q = kernels.quad_form(x[rows] - model.centers[i], precision(model, i))
        scores[rows] = np.sqrt(np.maximum(q, 0.0))

    m = scores.reshape(h, w)
    if cfg.target_size is not None and tuple(cfg.target_size) != (h, w):
        m = kernels.bilinear_resize(m, cfg.target_size[0], cfg.target_size[1])
    return kernels.gaussian_blur_2d(m, gaussian_kernel(cfg.sigma))


def image_score(m: np.ndarray) -> float:
    """Image-level anomaly score: the map maximum."""
    m = np.asarray(m)
    if m.size == 0:
        raise ValidationError("empty anomaly map")
    if not np.isfinite(m).all():
        raise ValidationError("anomaly map contains non-finite values")
    return float(m.max())
