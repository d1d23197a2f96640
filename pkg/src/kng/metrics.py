"""Evaluation metrics: ROC-AUC, connected components, per-region overlap.

All three are exact, deterministic computations; no sampling or
approximation is involved anywhere.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import MetricUndefinedError, ValidationError

_EIGHT = np.ones((3, 3), dtype=np.int32)


def _check_binary(labels: np.ndarray, what: str) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype == bool:
        return labels.astype(np.int64)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError(f"{what} must be integer or bool")
    if labels.size and (labels.min() < 0 or labels.max() > 1):
        raise ValidationError(f"{what} must contain only 0 and 1")
    return labels.astype(np.int64)


def rocauc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve, exact under ties.

    Computed as the rank-sum (Mann-Whitney) statistic with average ranks for
    tied scores, equivalent to P(pos > neg) + 0.5 * P(pos == neg). Raises
    MetricUndefinedError unless both classes are present.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = _check_binary(labels, "labels").ravel()
    if scores.shape != labels.shape:
        raise ValidationError(
            f"scores and labels disagree: {scores.shape} vs {labels.shape}")
    if not np.isfinite(scores).all():
        raise ValidationError("scores must be finite")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError(
            f"rocauc needs both classes, got {n_pos} pos / {n_neg} neg")
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    # average rank per tie group, 1-based
    boundaries = np.nonzero(np.diff(s))[0] + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(s)]))
    ranks = np.repeat(0.5 * (starts + 1 + ends), ends - starts)
    rank_sum = ranks[labels[order] == 1].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of a binary mask.

    Returns one sorted flat-index array per component, ordered by each
    component's first pixel in row-major order.
    """
    mask = _check_binary(mask, "mask")
    if mask.ndim != 2:
        raise ValidationError(f"mask must be rank 2, got rank {mask.ndim}")
    labeled, n = ndimage.label(mask, structure=_EIGHT)
    flat = labeled.ravel()
    comps = []
    for lab in range(1, n + 1):
        comps.append(np.nonzero(flat == lab)[0])
    comps.sort(key=lambda ix: ix[0])
    return comps


def pro_score(maps: list[np.ndarray], masks: list[np.ndarray],
              fpr_limit: float = 0.3) -> float:
    """Per-region overlap averaged over components, integrated over the
    false-positive-rate range [0, fpr_limit] and normalized by the limit.

    The operating points sweep every distinct score value in the pooled maps,
    descending, with prediction rule score >= threshold. Between points the
    curve is a left step function anchored at the virtual point
    (FPR=0, PRO=0), so a constant map integrates to exactly 0 and a perfect
    detector to exactly 1.
    """
    if not 0.0 < fpr_limit <= 1.0:
        raise ValidationError(f"fpr_limit must be in (0, 1], got {fpr_limit}")
    if len(maps) != len(masks) or not maps:
        raise ValidationError("need equally many maps and masks, at least one")

    comp_scores = []      # sorted scores inside each anomalous component
    neg_scores = []       # pooled scores of all normal pixels
    for m, mask in zip(maps, masks):
        m = np.asarray(m, dtype=np.float64)
        mk = _check_binary(mask, "mask")
        if m.shape != mk.shape or m.ndim != 2:
            raise ValidationError(
                f"map {m.shape} and mask {mk.shape} must be equal rank-2 shapes")
        if not np.isfinite(m).all():
            raise ValidationError("maps must be finite")
        flat = m.ravel()
        for comp in connected_components(mk):
            comp_scores.append(np.sort(flat[comp]))
        neg_scores.append(flat[mk.ravel() == 0])
    if not comp_scores:
        raise MetricUndefinedError("no anomalous components in any mask")
    neg = np.sort(np.concatenate(neg_scores))
    if len(neg) == 0:
        raise MetricUndefinedError("no normal pixels, FPR undefined")

    thr = np.unique(np.concatenate([np.concatenate(comp_scores), neg]))[::-1]
    # share of entries >= v, via position in the ascending sort
    fpr = 1.0 - np.searchsorted(neg, thr, side="left") / len(neg)
    pro = np.zeros(len(thr), dtype=np.float64)
    for sc in comp_scores:
        pro += 1.0 - np.searchsorted(sc, thr, side="left") / len(sc)
    pro /= len(comp_scores)

    clipped = np.minimum(fpr, fpr_limit)
    # left-step integral from the virtual (0, 0) start
    widths = np.diff(np.concatenate(([0.0], clipped)))
    heights = np.concatenate(([0.0], pro[:-1]))
    return float((heights * widths).sum() / fpr_limit)
