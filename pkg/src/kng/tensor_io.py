"""Tensor file format, dataset manifests, and channel selection.

FTEN is the interchange format for feature tensors, anomaly maps and masks.
Layout, all little-endian:

    magic    4 bytes  b"FTEN"
    version  u32      currently 1
    rank     u32      2 or 3
    dims     rank*u64 each >= 1
    dtype    u8       1 = float32, 2 = uint8
    payload  row-major element data

float32 payloads must be finite; uint8 payloads are binary masks and must
contain only 0 and 1. Reads and writes round-trip bit-exactly.

Manifests are JSON: {"items": [{"id", "features", "label", "mask"}, ...]}
with labels "normal" / "anomalous" / null and mask paths only on anomalous
items. Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .rng import Xoshiro256

MAGIC = b"FTEN"
VERSION = 1
DTYPE_F32 = 1
DTYPE_U8 = 2

_DTYPE_CODES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("u1")}


def write_tensor(arr: np.ndarray, path) -> None:
    """Serialize a 2-d or 3-d tensor to ``path`` in FTEN format."""
    arr = np.asarray(arr)
    if arr.ndim not in (2, 3):
        raise ValidationError(f"tensor rank must be 2 or 3, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ValidationError(f"all dims must be >= 1, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        code = DTYPE_U8
        if arr.ndim != 2:
            raise ValidationError("uint8 tensors (masks) must be rank 2")
        bad = (arr > 1)
        if bad.any():
            raise ValidationError("mask values must be 0 or 1")
        payload = np.ascontiguousarray(arr)
    elif np.issubdtype(arr.dtype, np.floating):
        code = DTYPE_F32
        payload = np.ascontiguousarray(arr, dtype="<f4")
        if not np.isfinite(payload).all():
            raise ValidationError("float tensors must be finite (no NaN/Inf)")
    else:
        raise ValidationError(f"unsupported dtype {arr.dtype}")

    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    header += struct.pack("<B", code)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read an FTEN file; returns float32 or uint8 ndarray."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if rank not in (2, 3):
        raise FormatError(f"{path}: rank must be 2 or 3, got {rank}")
    need = 12 + 8 * rank + 1
    if len(blob) < need:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", blob, 12)
    if any(d < 1 for d in dims):
        raise FormatError(f"{path}: zero-sized dim in {dims}")
    code = blob[12 + 8 * rank]
    if code not in _DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dt = _DTYPE_CODES[code]
    n = 1
    for d in dims:
        n *= d
    expect = need + n * dt.itemsize
    if len(blob) != expect:
        raise FormatError(f"{path}: payload is {len(blob) - need} bytes, "
                          f"expected {n * dt.itemsize}")
    arr = np.frombuffer(blob, dtype=dt, count=n, offset=need).reshape(dims)
    if code == DTYPE_F32:
        arr = arr.astype(np.float32)  # native byte order, owns its memory
        if not np.isfinite(arr).all():
            raise FormatError(f"{path}: non-finite float payload")
    else:
        arr = arr.copy()
        if (arr > 1).any():
            raise FormatError(f"{path}: mask values must be 0 or 1")
    return arr


@dataclass
class ManifestItem:
    id: str
    features: Path
    label: str | None = None  # "normal" | "anomalous" | None
    mask: Path | None = None


_LABELS = {"normal", "anomalous", None}


def load_manifest(path) -> list[ManifestItem]:
    """Load and validate a manifest; paths come back resolved."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("items"), list):
        raise FormatError(f"{path}: manifest must be an object with an 'items' list")
    base = path.parent
    items = []
    seen = set()
    for pos, raw in enumerate(doc["items"]):
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: item {pos} is not an object")
        item_id = raw.get("id")
        feats = raw.get("features")
        if not isinstance(item_id, str) or not item_id:
            raise ValidationError(f"{path}: item {pos} needs a non-empty string id")
        if item_id in seen:
            raise ValidationError(f"{path}: duplicate id {item_id!r}")
        seen.add(item_id)
        if not isinstance(feats, str) or not feats:
            raise ValidationError(f"{path}: item {item_id!r} needs a features path")
        label = raw.get("label")
        if label not in _LABELS:
            raise ValidationError(f"{path}: item {item_id!r} has bad label {label!r}")
        mask = raw.get("mask")
        if mask is not None and not isinstance(mask, str):
            raise ValidationError(f"{path}: item {item_id!r} mask must be a path or null")
        if mask is not None and label != "anomalous":
            raise ValidationError(
                f"{path}: item {item_id!r} has a mask but label {label!r}")
        items.append(ManifestItem(
            id=item_id,
            features=(base / feats).resolve(),
            label=label,
            mask=(base / mask).resolve() if mask else None,
        ))
    return items


def save_manifest(items: list[ManifestItem], path) -> None:
    """Write a manifest; paths are stored relative to it when possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        p = Path(p)
        try:
            return p.resolve().relative_to(base).as_posix()
        except ValueError:
            return str(p)

    doc = {"items": [
        {"id": it.id, "features": rel(it.features), "label": it.label,
         "mask": rel(it.mask) if it.mask else None}
        for it in items
    ]}
    path.write_text(json.dumps(doc, indent=2) + "\n")


@dataclass(frozen=True)
class ChannelSelection:
    """A fixed random choice of feature channels, reproducible from its seed."""
    source_dim: int
    indices: tuple[int, ...]  # sorted, distinct, in [0, source_dim)
    seed: int

    @property
    def target_dim(self) -> int:
        return len(self.indices)


def make_selection(source_dim: int, target_dim: int, seed: int) -> ChannelSelection:
    """Choose target_dim of source_dim channels without replacement."""
    if source_dim < 1:
        raise ValidationError(f"source_dim must be >= 1, got {source_dim}")
    if not 1 <= target_dim <= source_dim:
        raise ValidationError(
            f"target_dim must be in [1, {source_dim}], got {target_dim}")
    rng = Xoshiro256(seed)
    idx = sorted(rng.sample_indices(source_dim, target_dim))
    return ChannelSelection(source_dim=source_dim, indices=tuple(idx), seed=seed)


def apply_selection(arr: np.ndarray, sel: ChannelSelection) -> np.ndarray:
    """Keep the selected channels of the last axis."""
    arr = np.asarray(arr)
    if arr.shape[-1] != sel.source_dim:
        raise ValidationError(
            f"tensor has {arr.shape[-1]} channels, selection expects {sel.source_dim}")
    return np.ascontiguousarray(arr[..., list(sel.indices)])
