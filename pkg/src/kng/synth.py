"""Synthetic streaming corpus with learnable structure.

Normal patches live near a low-dimensional manifold embedded in the ambient
feature space: a mixture of anisotropic Gaussian components in latent space,
pushed through a fixed orthonormal map, plus small ambient noise. The
few-shot training images draw the same mixture as the stream but with a
shrunken within-component scatter, so the initial model underestimates the
manifold's spread: stream normals in the outer shells of each component
score high at first, yet they sit within threshold reach of the trained
cores and are absorbed by online updates. Anomalous images
displace one contiguous patch block off the manifold; the displacement is
orthogonal to the manifold, which keeps it separable both before and after
the covariances tighten.

Everything is derived from SynthSpec.seed through the package's portable
generator: per-image seeds come from one splitmix64 stream, each image is
filled from a bank of xoshiro lanes (one lane per patch plus one lane for
image-level choices), so corpora are reproducible byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .rng import (
    MASK64,
    Xoshiro256,
    XoshiroLanes,
    normals_from_u64,
    splitmix64_stream,
    uniform_from_u64,
)
from .tensor_io import ManifestItem, save_manifest, write_tensor

# generation constants; tuned so that a default model shows a clear
# online-learning gain over a frozen one on the default spec
LATENT_DIM = 8
N_COMPONENTS = 12
MEAN_SPREAD = 2.5
SCALE_LO = 0.3
SCALE_HI = 1.0
AMBIENT_NOISE = 0.02
TRAIN_SHRINK = 0.40   # train-time within-component scatter multiplier
ANOMALY_SHIFT = 1.15
BLOCK_MIN = 3
BLOCK_MAX = 5


@dataclass
class SynthSpec:
    """Shape of a generated corpus."""
    ambient_dim: int = 100
    grid: tuple[int, int] = (14, 14)
    n_train: int = 10
    n_sessions: int = 20
    session_size: int = 50
    anomaly_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise ValidationError(f"ambient_dim must be >= 1, got {self.ambient_dim}")
        h, w = self.grid
        if h < 1 or w < 1:
            raise ValidationError(f"grid dims must be >= 1, got {self.grid}")
        if self.n_train < 1 or self.n_sessions < 1 or self.session_size < 1:
            raise ValidationError("n_train, n_sessions, session_size must be >= 1")
        if not 0.0 < self.anomaly_ratio < 1.0:
            raise ValidationError(
                f"anomaly_ratio must be strictly between 0 and 1, "
                f"got {self.anomaly_ratio}")
        if not 0 <= self.seed <= MASK64:
            raise ValidationError("seed must fit in 64 bits")


@dataclass
class _Structure:
    w: np.ndarray             # (ambient, latent), orthonormal columns
    means: np.ndarray         # (components, latent)
    scales: np.ndarray        # (components, latent)
    cum: np.ndarray           # cumulative component weights
    latent: int


def _build_structure(spec: SynthSpec, seed: int) -> _Structure:
    latent = min(LATENT_DIM, spec.ambient_dim)
    c = N_COMPONENTS
    lanes = XoshiroLanes(seed, spec.ambient_dim)
    cols = 2 * ((latent + 1) // 2)
    g = normals_from_u64(lanes.block_u64(cols))[:, :latent]  # (ambient, latent)
    q, r = np.linalg.qr(g)
    w = q * np.sign(np.diag(r))  # fix the sign ambiguity of QR

    need = c * latent
    block = lanes.block_u64(3 * need)
    means = normals_from_u64(block[:, :2 * need]).ravel()[:need].reshape(c, latent)
    means *= MEAN_SPREAD
    u = uniform_from_u64(block[:, 2 * need:])
    log_scale = np.log(SCALE_LO) + u.ravel()[:need] * (np.log(SCALE_HI) - np.log(SCALE_LO))
    scales = np.exp(log_scale).reshape(c, latent)
    return _Structure(
        w=w, means=means, scales=scales,
        cum=np.cumsum(np.full(c, 1.0 / c)),
        latent=latent,
    )


def _make_image(st: _Structure, spec: SynthSpec, image_seed: int,
                anomalous: bool, from_train: bool):
    """One image tensor (H, W, ambient) f32 and its mask (or None)."""
    h, w = spec.grid
    n_patch = h * w
    ambient = spec.ambient_dim
    lanes = XoshiroLanes(image_seed, n_patch + 1)
    n_lat = 2 * ((st.latent + 1) // 2)
    n_amb = 2 * ((ambient + 1) // 2)
    # the image lane consumes 4 geometry draws plus a direction vector
    block = lanes.block_u64(max(1 + n_lat + n_amb, 4 + n_amb))

    patch_rows = block[:n_patch]
    img_row = block[n_patch]

    comp = np.searchsorted(st.cum, uniform_from_u64(patch_rows[:, 0]), side="right")
    comp = np.minimum(comp, len(st.cum) - 1)

    sc = st.scales * TRAIN_SHRINK if from_train else st.scales
    z = normals_from_u64(patch_rows[:, 1:1 + n_lat])[:, :st.latent]
    z = z * sc[comp] + st.means[comp]
    noise = normals_from_u64(patch_rows[:, 1 + n_lat:1 + n_lat + n_amb])[:, :ambient]
    x = z @ st.w.T + AMBIENT_NOISE * noise

    mask = None
    if anomalous:
        u = uniform_from_u64(img_row[:4])
        bmax = min(BLOCK_MAX, h, w)
        bmin = min(BLOCK_MIN, bmax)
        span = bmax - bmin + 1
        bh = bmin + min(int(u[0] * span), span - 1)
        bw = bmin + min(int(u[1] * span), span - 1)
        r0 = min(int(u[2] * (h - bh + 1)), h - bh)
        c0 = min(int(u[3] * (w - bw + 1)), w - bw)
        g = normals_from_u64(img_row[4:4 + n_amb])[:ambient]
        g = g - st.w @ (st.w.T @ g)  # push the direction off the manifold
        norm = np.linalg.norm(g)
        if norm == 0.0:
            g = np.zeros(ambient)
            g[0] = 1.0
        else:
            g = g / norm
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[r0:r0 + bh, c0:c0 + bw] = 1
        x = x.reshape(h, w, ambient)
        x[r0:r0 + bh, c0:c0 + bw] += ANOMALY_SHIFT * g
        x = x.reshape(n_patch, ambient)

    return x.reshape(h, w, ambient).astype(np.float32), mask


def generate_synthetic(spec: SynthSpec, out_dir) -> tuple[Path, Path]:
    """Write a corpus under out_dir; returns (train_manifest, stream_manifest).

    Layout: train/*.ften and stream/*.ften plus *_mask.ften for anomalous
    items, with manifests train.json and stream.json next to them. The
    stream manifest carries ground-truth labels and masks for evaluation;
    model updates never see them.
    """
    out_dir = Path(out_dir)
    (out_dir / "train").mkdir(parents=True, exist_ok=True)
    (out_dir / "stream").mkdir(parents=True, exist_ok=True)

    struct_seed, image_tag, place_tag = splitmix64_stream(spec.seed, 3)
    st = _build_structure(spec, struct_seed)

    n_stream = spec.n_sessions * spec.session_size
    n_anom = int(spec.anomaly_ratio * n_stream + 0.5)
    placer = Xoshiro256(place_tag)
    anom_at = set(placer.sample_indices(n_stream, n_anom))

    image_seeds = splitmix64_stream(image_tag, spec.n_train + n_stream)

    train_items = []
    for i in range(spec.n_train):
        x, _ = _make_image(st, spec, image_seeds[i], anomalous=False,
                           from_train=True)
        rel = f"train/train_{i:03d}.ften"
        write_tensor(x, out_dir / rel)
        train_items.append(ManifestItem(id=f"train_{i:03d}",
                                        features=out_dir / rel, label="normal"))
    train_manifest = out_dir / "train.json"
    save_manifest(train_items, train_manifest)

    stream_items = []
    for i in range(n_stream):
        anomalous = i in anom_at
        x, mask = _make_image(st, spec, image_seeds[spec.n_train + i],
                              anomalous=anomalous, from_train=False)
        rel = f"stream/stream_{i:04d}.ften"
        write_tensor(x, out_dir / rel)
        mask_path = None
        if anomalous:
            mask_rel = f"stream/stream_{i:04d}_mask.ften"
            write_tensor(mask, out_dir / mask_rel)
            mask_path = out_dir / mask_rel
        stream_items.append(ManifestItem(
            id=f"stream_{i:04d}", features=out_dir / rel,
            label="anomalous" if anomalous else "normal", mask=mask_path))
    stream_manifest = out_dir / "stream.json"
    save_manifest(stream_items, stream_manifest)
    return train_manifest, stream_manifest
