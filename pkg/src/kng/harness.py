"""Shuffled-session evaluation protocol and JSON reporting.

A run shuffles the labeled stream deterministically, partitions it into
equal sessions (a trailing remainder becomes a final shorter session,
flagged and excluded from averages), and walks each session in batches:
every image in the batch is scored against the current model first, then,
in online mode only, the batch is folded into the model. Per-session
metrics are computed once the session completes, so a session's scores mix
model states only across batch boundaries, never within a batch.

Reports are plain dicts ready for JSON. Everything in them is deterministic
except the top-level "timing" section; comparisons for reproducibility
should strip that one key (strip_timing does exactly that).

KNG_THREADS > 1 parallelizes scoring inside a batch with threads; results
are collected in submission order, so reports stay bit-identical.
"""

from __future__ import annotations

import hashlib
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError, ValidationError
from .metrics import pro_score, rocauc
from .model import (
    KngModel,
    model_to_bytes,
    online_update,
    prepare_features,
)
from .rng import MASK64, Xoshiro256
from .scoring import ScoreConfig, image_score, score_map
from .tensor_io import ManifestItem, read_tensor

MODES = ("online", "offline")


@dataclass
class SessionPlan:
    shuffle_seed: int = 0
    session_size: int = 50
    batch_size: int = 10
    mode: str = "online"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.session_size >= self.batch_size >= 1:
            raise ValidationError(
                f"need session_size >= batch_size >= 1, got "
                f"{self.session_size} / {self.batch_size}")
        if not 0 <= self.shuffle_seed <= MASK64:
            raise ValidationError("shuffle_seed must fit in 64 bits")


def model_hash(model: KngModel) -> str:
    return hashlib.sha256(model_to_bytes(model)).hexdigest()


def strip_timing(report: dict) -> dict:
    """Copy of a report without its nondeterministic timing section."""
    return {k: v for k, v in report.items() if k != "timing"}


def _score_worker(model, cfg):
    def work(item: ManifestItem):
        feats = read_tensor(item.features)
        if feats.ndim != 3:
            raise ValidationError(f"{item.features}: features must be rank 3")
        feats = prepare_features(model, feats)
        m = score_map(model, feats, cfg)
        return feats, m, image_score(m)
    return work


def _score_batch(model, items, cfg):
    work = _score_worker(model, cfg)
    workers = int(os.environ.get("KNG_THREADS", "1"))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, items))
    return [work(it) for it in items]


def _item_mask(item: ManifestItem, map_shape) -> np.ndarray | None:
    """Ground-truth mask at map resolution; implicit zeros for normal items,
    None when an anomalous item has no mask on record."""
    if item.label == "normal":
        return np.zeros(map_shape, dtype=np.uint8)
    if item.mask is None:
        return None
    mask = read_tensor(item.mask)
    if mask.dtype != np.uint8 or mask.ndim != 2:
        raise ValidationError(f"{item.mask}: mask must be a rank-2 binary tensor")
    if mask.shape != tuple(map_shape):
        raise ValidationError(
            f"{item.mask}: mask shape {mask.shape} does not match anomaly map "
            f"{tuple(map_shape)}; set the score target size to the mask size")
    return mask


def _session_metrics(records, fpr_limit, session_name, warnings):
    """records: list of (item, map, score, mask-or-None)."""
    out = {"image_rocauc": None, "pixel_rocauc": None, "pro": None}
    undefined = []

    scores = np.array([r[2] for r in records])
    labels = np.array([1 if r[0].label == "anomalous" else 0 for r in records])
    try:
        out["image_rocauc"] = rocauc(scores, labels)
    except MetricUndefinedError:
        undefined.append("image_rocauc")
        warnings.append(f"{session_name}: single-class, image_rocauc undefined")

    missing = [r[0].id for r in records if r[0].label == "anomalous" and r[3] is None]
    if missing:
        undefined.extend(["pixel_rocauc", "pro"])
        warnings.append(
            f"{session_name}: anomalous items without masks "
            f"({', '.join(missing[:3])}{'...' if len(missing) > 3 else ''}); "
            f"pixel metrics omitted")
        return out, undefined

    maps = [r[1] for r in records]
    masks = [r[3] for r in records]
    try:
        pix = np.concatenate([m.ravel() for m in maps])
        lab = np.concatenate([mk.ravel() for mk in masks])
        out["pixel_rocauc"] = rocauc(pix, lab)
    except MetricUndefinedError:
        undefined.append("pixel_rocauc")
        warnings.append(f"{session_name}: single-class pixels, pixel_rocauc undefined")
    try:
        out["pro"] = pro_score(maps, masks, fpr_limit)
    except MetricUndefinedError:
        undefined.append("pro")
        warnings.append(f"{session_name}: no anomalous components, pro undefined")
    return out, undefined


def run_sessions(model: KngModel, items: list[ManifestItem], plan: SessionPlan,
                 score_cfg: ScoreConfig | None = None,
                 fpr_limit: float = 0.3) -> dict:
    """Run the session protocol; mutates the model in online mode.

    All items must be labeled. Returns the report dict.
    """
    if not items:
        raise ValidationError("empty manifest")
    unlabeled = [it.id for it in items if it.label is None]
    if unlabeled:
        raise ValidationError(
            f"eval manifests must be fully labeled; unlabeled: {unlabeled[:5]}")
    if score_cfg is None:
        score_cfg = ScoreConfig()

    t0 = time.perf_counter()
    hash_before = model_hash(model)
    warnings: list[str] = []

    order = list(range(len(items)))
    Xoshiro256(plan.shuffle_seed).shuffle(order)
    shuffled = [items[i] for i in order]

    per_session = []
    n = len(shuffled)
    n_sessions = (n + plan.session_size - 1) // plan.session_size
    for s in range(n_sessions):
        chunk = shuffled[s * plan.session_size:(s + 1) * plan.session_size]
        partial = len(chunk) < plan.session_size
        name = f"session {s}"
        if partial:
            warnings.append(
                f"{name}: trailing partial session ({len(chunk)} items), "
                f"excluded from averages")
        records = []
        accepted = rejected = removed = 0
        for b in range(0, len(chunk), plan.batch_size):
            batch = chunk[b:b + plan.batch_size]
            scored = _score_batch(model, batch, score_cfg)
            for item, (feats, m, sc) in zip(batch, scored):
                records.append((item, m, sc, _item_mask(item, m.shape)))
            if plan.mode == "online":
                rep = online_update(model, [f for f, _, _ in scored])
                accepted += rep.accepted
                rejected += rep.rejected
                removed += rep.edges_removed
        metrics, undefined = _session_metrics(records, fpr_limit, name, warnings)
        per_session.append({
            "session_index": s,
            "n_items": len(chunk),
            "partial": partial,
            "image_rocauc": metrics["image_rocauc"],
            "pixel_rocauc": metrics["pixel_rocauc"],
            "pro": metrics["pro"],
            "accepted": accepted,
            "rejected": rejected,
            "edges_removed": removed,
            "undefined": sorted(undefined),
        })

    averages = {}
    for key in ("image_rocauc", "pixel_rocauc", "pro"):
        vals = [s[key] for s in per_session if not s["partial"] and s[key] is not None]
        averages[key] = float(np.mean(vals)) if vals else None

    total = time.perf_counter() - t0
    return {
        "schema_version": 1,
        "mode": plan.mode,
        "plan": {
            "shuffle_seed": plan.shuffle_seed,
            "session_size": plan.session_size,
            "batch_size": plan.batch_size,
            "mode": plan.mode,
        },
        "score_config": {
            "sigma": score_cfg.sigma,
            "target_size": list(score_cfg.target_size) if score_cfg.target_size else None,
        },
        "fpr_limit": fpr_limit,
        "model_config": {
            "k": model.config.k, "dim": model.config.dim,
            "epochs": model.config.epochs, "age_max": model.config.age_max,
            "epsilon": model.config.epsilon,
            "threshold_mode": model.config.threshold_mode,
            "batch_size": model.config.batch_size, "seed": model.config.seed,
        },
        "model_hash_before": hash_before,
        "model_hash_after": model_hash(model),
        "n_items": n,
        "per_session": per_session,
        "averages": averages,
        "accepted": int(sum(s["accepted"] for s in per_session)),
        "rejected": int(sum(s["rejected"] for s in per_session)),
        "warnings": warnings,
        "timing": {
            "wall_clock_total_s": total,
            "wall_clock_per_image_s": total / n,
        },
    }


def evaluate_once(model: KngModel, items: list[ManifestItem],
                  score_cfg: ScoreConfig | None = None,
                  fpr_limit: float = 0.3) -> dict:
    """Single-pass evaluation over the whole manifest, no updates."""
    if not items:
        raise ValidationError("empty manifest")
    unlabeled = [it.id for it in items if it.label is None]
    if unlabeled:
        raise ValidationError(
            f"eval manifests must be fully labeled; unlabeled: {unlabeled[:5]}")
    if score_cfg is None:
        score_cfg = ScoreConfig()

    t0 = time.perf_counter()
    warnings: list[str] = []
    records = []
    for item, (feats, m, sc) in zip(items, _score_batch(model, items, score_cfg)):
        records.append((item, m, sc, _item_mask(item, m.shape)))
    metrics, undefined = _session_metrics(records, fpr_limit, "eval", warnings)
    total = time.perf_counter() - t0
    return {
        "schema_version": 1,
        "mode": "eval",
        "n_items": len(items),
        "image_rocauc": metrics["image_rocauc"],
        "pixel_rocauc": metrics["pixel_rocauc"],
        "pro": metrics["pro"],
        "undefined": sorted(undefined),
        "warnings": warnings,
        "timing": {
            "wall_clock_total_s": total,
            "wall_clock_per_image_s": total / len(items),
        },
    }


def aggregate_repeats(reports: list[dict]) -> dict:
    """Mean and stddev of the session averages across repeated runs."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    agg = {}
    for key in ("image_rocauc", "pixel_rocauc", "pro"):
        vals = [r["averages"][key] for r in reports if r["averages"][key] is not None]
        if vals:
            agg[key] = {"mean": float(np.mean(vals)),
                        "stddev": float(np.std(vals))}
        else:
            agg[key] = None
    return {
        "schema_version": 1,
        "repeats": len(reports),
        "aggregate": agg,
        "runs": reports,
    }
