"""The cluster-network model: few-shot initialization and online updates.

The model is a set of k neurons, each holding a center, a sample count, an
unregularized sample covariance and an acceptance threshold, plus a topology
graph whose edges connect neurons that were first/second nearest to the same
embedding. Initialization runs k-means-style epochs over the few-shot training
embeddings while wiring the graph; online updates filter an unlabeled batch
through the per-neuron thresholds and fold the survivors into the per-neuron
statistics by exact streaming merges, so no past samples are kept.

Edge ages use one global event counter: a touch stamps the edge with the
current event number and every other edge implicitly ages by one. An edge's
age is (event_counter - stamp); the sweep drops ages strictly greater than
age_max. Deletions are applied lazily at the points where the graph is read
(threshold recomputation), which is observationally identical to deleting
eagerly after every touch.

Covariances stay unregularized in memory and on disk; the epsilon*I ridge is
added only when a precision matrix is needed (see kng.scoring).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import FormatError, StateError, ValidationError
from .rng import MASK64, Xoshiro256
from .tensor_io import ChannelSelection, apply_selection, make_selection

THRESHOLD_MODES = ("min", "mean", "max", "none")
_MODE_CODES = {m: i for i, m in enumerate(THRESHOLD_MODES)}

MODEL_MAGIC = b"KNGM"
MODEL_VERSION = 1


@dataclass
class KngConfig:
    """Model hyperparameters. Defaults follow the reference workload."""
    k: int
    dim: int
    epochs: int = 10
    age_max: int = 25
    epsilon: float = 0.01
    threshold_mode: str = "mean"
    batch_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(f"k must be >= 2, got {self.k}")
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.age_max < 0:
            raise ValidationError(f"age_max must be >= 0, got {self.age_max}")
        if not (self.epsilon > 0.0 and np.isfinite(self.epsilon)):
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValidationError(
                f"threshold_mode must be one of {THRESHOLD_MODES}, "
                f"got {self.threshold_mode!r}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.seed <= MASK64:
            raise ValidationError("seed must fit in 64 bits")


@dataclass
class BatchStats:
    """Sufficient statistics of a group of embeddings."""
    count: int
    mean: np.ndarray     # (dim,)
    cov: np.ndarray      # (dim, dim), unregularized, zero when count < 2


@dataclass
class Assignment:
    """Nearest/second-nearest neuron per embedding."""
    s1: np.ndarray       # (n,) int64
    s2: np.ndarray       # (n,) int64
    d1: np.ndarray       # (n,) float64, euclidean distance to s1


@dataclass
class UpdateReport:
    accepted: int
    rejected: int
    edges_removed: int


@dataclass
class Neuron:
    """Read-only view of one neuron's state."""
    index: int
    center: np.ndarray
    count: int
    cov: np.ndarray
    threshold: float


class TopologyGraph:
    """Undirected edges with lazily-aged stamps."""

    def __init__(self):
        self.edges: dict[tuple[int, int], int] = {}
        self.event_counter = 0

    def touch(self, i: int, j: int) -> None:
        """Create or refresh the edge i-j; this is one aging event."""
        if i == j:
            raise ValidationError(f"self edge at neuron {i}")
        if i < 0 or j < 0:
            raise ValidationError(f"negative neuron index ({i}, {j})")
        pair = (i, j) if i < j else (j, i)
        self.event_counter += 1
        self.edges[pair] = self.event_counter

    def age(self, i: int, j: int) -> int:
        pair = (i, j) if i < j else (j, i)
        return self.event_counter - self.edges[pair]

    def sweep(self, age_max: int) -> int:
        """Drop edges with age > age_max; returns how many were removed."""
        cutoff = self.event_counter - age_max
        dead = [p for p, stamp in self.edges.items() if stamp < cutoff]
        for p in dead:
            del self.edges[p]
        return len(dead)

    def neighbor_lists(self, k: int) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(k)]
        for i, j in self.edges:
            out[i].append(j)
            out[j].append(i)
        return out


class KngModel:
    """Full model state; construct via init_model or load_model."""

    def __init__(self, config: KngConfig, selection: ChannelSelection):
        if selection.target_dim != config.dim:
            raise ValidationError(
                f"selection keeps {selection.target_dim} channels, "
                f"config.dim is {config.dim}")
        self.config = config
        self.selection = selection
        k, d = config.k, config.dim
        self.centers = np.zeros((k, d), dtype=np.float64)
        self.counts = np.zeros(k, dtype=np.int64)
        self.covs = np.zeros((k, d, d), dtype=np.float64)
        self.thresholds = np.zeros(k, dtype=np.float64)
        self.graph = TopologyGraph()
        self.rng = Xoshiro256(config.seed)
        self.trained = False
        self._precisions: dict[int, np.ndarray] = {}  # cache, never serialized

    def neuron(self, i: int) -> Neuron:
        if not 0 <= i < self.config.k:
            raise ValidationError(f"neuron index {i} out of range")
        return Neuron(index=i, center=self.centers[i], count=int(self.counts[i]),
                      cov=self.covs[i], threshold=float(self.thresholds[i]))

    def invalidate_precision(self, i: int | None = None) -> None:
        if i is None:
            self._precisions.clear()
        else:
            self._precisions.pop(i, None)


def _as_embeddings(t: np.ndarray, dim: int) -> np.ndarray:
    """Flatten an (H, W, dim) tensor to (H*W, dim) float64."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValidationError(f"feature tensor must be rank 3, got rank {t.ndim}")
    if t.shape[-1] != dim:
        raise ValidationError(
            f"feature tensor has {t.shape[-1]} channels, model wants {dim}")
    return np.ascontiguousarray(t.reshape(-1, dim), dtype=np.float64)


def prepare_features(model: KngModel, t: np.ndarray) -> np.ndarray:
    """Bring a feature tensor to model dim, applying the stored channel
    selection when the tensor is still at the selection's source dim."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValidationError(f"feature tensor must be rank 3, got rank {t.ndim}")
    if t.shape[-1] == model.config.dim:
        return t
    if t.shape[-1] == model.selection.source_dim:
        return apply_selection(t, model.selection)
    raise ValidationError(
        f"feature tensor has {t.shape[-1]} channels; expected "
        f"{model.config.dim} or {model.selection.source_dim}")


def assign(model: KngModel, x: np.ndarray) -> Assignment:
    """Nearest and second-nearest neuron for each embedding row."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.dim:
        raise ValidationError(
            f"embeddings must be (n, {model.config.dim}), got {x.shape}")
    s1, s2, d1, _ = kernels.nearest_two(x, model.centers)
    return Assignment(s1=s1, s2=s2, d1=d1)


def batch_stats(x: np.ndarray) -> BatchStats:
    """Count, mean and sample covariance (N-1 denominator) of a group.

    Covariance is defined as zero for groups of fewer than two samples.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected (n, dim) embeddings, got shape {x.shape}")
    n, d = x.shape
    if n == 0:
        return BatchStats(count=0, mean=np.zeros(d), cov=np.zeros((d, d)))
    mean = x.mean(axis=0)
    if n == 1:
        return BatchStats(count=1, mean=mean, cov=np.zeros((d, d)))
    xc = x - mean
    cov = (xc.T @ xc) / (n - 1)
    cov = 0.5 * (cov + cov.T)  # keep bitwise symmetry through later merges
    return BatchStats(count=n, mean=mean, cov=cov)


def merge_stats(a: BatchStats, b: BatchStats) -> BatchStats:
    """Exact pooled statistics of two disjoint groups.

    Equivalent to concatenating the raw samples and recomputing: the pooled
    mean is the count-weighted mean, and the pooled scatter is the sum of the
    two group scatters plus the between-group mean-shift terms, divided by
    (total - 1). Zero-count operands contribute nothing.
    """
    if a.count < 0 or b.count < 0:
        raise ValidationError("negative count")
    total = a.count + b.count
    d = a.mean.shape[0]
    if b.mean.shape[0] != d:
        raise ValidationError("dim mismatch in merge")
    if total == 0:
        return BatchStats(count=0, mean=np.zeros(d), cov=np.zeros((d, d)))
    mean = (a.count * a.mean + b.count * b.mean) / total
    if total < 2:
        return BatchStats(count=total, mean=mean, cov=np.zeros((d, d)))
    scatter = np.zeros((d, d))
    if a.count > 1:
        scatter += (a.count - 1) * a.cov
    if a.count > 0:
        da = mean - a.mean
        scatter += a.count * np.outer(da, da)
    if b.count > 1:
        scatter += (b.count - 1) * b.cov
    if b.count > 0:
        db = mean - b.mean
        scatter += b.count * np.outer(db, db)
    return BatchStats(count=total, mean=mean, cov=scatter / (total - 1))


def _isolated_fallback(centers: np.ndarray, iso: np.ndarray) -> np.ndarray:
    """Min distance from each isolated neuron to any other neuron."""
    s1, _, d1, d2 = kernels.nearest_two(centers[iso], centers)
    # the nearest hit is usually the neuron itself at distance ~0
    return np.where(s1 == iso, d2, d1)


def update_thresholds(model: KngModel) -> None:
    """Recompute every neuron's acceptance threshold from the current graph.

    Connected neurons aggregate (min/mean/max) the center distances to their
    graph neighbors; isolated neurons fall back to the distance of the
    closest other neuron. Mode "none" disables filtering entirely.
    """
    k = model.config.k
    mode = model.config.threshold_mode
    if mode == "none":
        model.thresholds = np.full(k, np.inf)
        return
    t = np.empty(k, dtype=np.float64)
    pairs = np.array(sorted(model.graph.edges), dtype=np.int64).reshape(-1, 2)
    deg = np.zeros(k, dtype=np.int64)
    if len(pairs):
        dist = np.linalg.norm(
            model.centers[pairs[:, 0]] - model.centers[pairs[:, 1]], axis=1)
        np.add.at(deg, pairs[:, 0], 1)
        np.add.at(deg, pairs[:, 1], 1)
        if mode == "mean":
            acc = np.zeros(k)
            np.add.at(acc, pairs[:, 0], dist)
            np.add.at(acc, pairs[:, 1], dist)
            with np.errstate(invalid="ignore"):
                t = acc / deg
        elif mode == "min":
            acc = np.full(k, np.inf)
            np.minimum.at(acc, pairs[:, 0], dist)
            np.minimum.at(acc, pairs[:, 1], dist)
            t = acc
        else:  # max
            acc = np.full(k, -np.inf)
            np.maximum.at(acc, pairs[:, 0], dist)
            np.maximum.at(acc, pairs[:, 1], dist)
            t = acc
    iso = np.nonzero(deg == 0)[0]
    if len(iso):
        t[iso] = _isolated_fallback(model.centers, iso)
    model.thresholds = t


def init_model(train: list[np.ndarray], config: KngConfig) -> KngModel:
    """Build a model from few-shot training tensors (rank-3, same channels).

    Channels are reduced to config.dim by a seeded random selection; centers
    start as k distinct random training embeddings; then config.epochs rounds
    of assign / wire-graph / recompute-stats run over the full embedding set.
    """
    if not train:
        raise ValidationError("need at least one training tensor")
    shapes = {np.asarray(t).shape[-1] for t in train}
    if len(shapes) != 1:
        raise ValidationError(f"training tensors disagree on channels: {shapes}")
    source_dim = shapes.pop()
    selection = make_selection(source_dim, config.dim, config.seed)
    model = KngModel(config, selection)
    x = np.concatenate(
        [_as_embeddings(apply_selection(t, selection), config.dim) for t in train])
    if not np.isfinite(x).all():
        raise ValidationError("training embeddings contain non-finite values")
    m = x.shape[0]
    k = config.k
    if m < k:
        raise ValidationError(f"{m} training embeddings < k={k}")

    picks = model.rng.sample_indices(m, k)
    model.centers = np.ascontiguousarray(x[picks])

    for _ in range(config.epochs):
        # distances against the centers frozen at epoch start
        s1, s2, _, _ = kernels.nearest_two(x, model.centers)
        for l in range(m):
            model.graph.touch(int(s1[l]), int(s2[l]))
        model.graph.sweep(config.age_max)

        model.counts[:] = 0
        model.covs[:] = 0.0
        order = np.argsort(s1, kind="stable")
        sorted_s1 = s1[order]
        starts = np.searchsorted(sorted_s1, np.arange(k), side="left")
        ends = np.searchsorted(sorted_s1, np.arange(k), side="right")
        for i in range(k):
            if starts[i] == ends[i]:
                continue  # cluster lost all members; keeps its old center
            stats = batch_stats(x[order[starts[i]:ends[i]]])
            model.counts[i] = stats.count
            model.centers[i] = stats.mean
            model.covs[i] = stats.cov
        update_thresholds(model)

    model.invalidate_precision()
    model.trained = True
    return model


def online_update(model: KngModel, batch: list[np.ndarray]) -> UpdateReport:
    """Fold one unlabeled batch of feature tensors into the model.

    Embeddings are screened against the thresholds frozen at batch start;
    accepted ones touch the graph (in arrival order) and are pooled per
    neuron, then merged into that neuron's stats. Rejected embeddings leave
    no trace. A batch with no survivors is a complete no-op.
    """
    if not model.trained:
        raise StateError("model is not initialized")
    if not batch:
        raise ValidationError("empty batch")
    x = np.concatenate([_as_embeddings(t, model.config.dim) for t in batch])
    if not np.isfinite(x).all():
        raise ValidationError("batch embeddings contain non-finite values")

    s1, s2, d1, _ = kernels.nearest_two(x, model.centers)
    accepted = d1 <= model.thresholds[s1]
    n_acc = int(accepted.sum())

    acc_idx = np.nonzero(accepted)[0]
    for l in acc_idx:
        model.graph.touch(int(s1[l]), int(s2[l]))

    if n_acc:
        acc_s1 = s1[acc_idx]
        order = np.argsort(acc_s1, kind="stable")
        sorted_s1 = acc_s1[order]
        uniq, starts = np.unique(sorted_s1, return_index=True)
        bounds = np.append(starts, len(sorted_s1))
        for u, lo, hi in zip(uniq, bounds[:-1], bounds[1:]):
            i = int(u)
            grp = x[acc_idx[order[lo:hi]]]
            incoming = batch_stats(grp)
            current = BatchStats(count=int(model.counts[i]),
                                 mean=model.centers[i], cov=model.covs[i])
            merged = merge_stats(current, incoming)
            model.counts[i] = merged.count
            model.centers[i] = merged.mean
            model.covs[i] = merged.cov
            model.invalidate_precision(i)

    removed = model.graph.sweep(model.config.age_max)
    update_thresholds(model)
    return UpdateReport(accepted=n_acc, rejected=len(x) - n_acc,
                        edges_removed=removed)


# ---------------------------------------------------------------------------
# serialization

def _pack_config(cfg: KngConfig) -> bytes:
    return struct.pack("<IIIQdBIQ", cfg.k, cfg.dim, cfg.epochs, cfg.age_max,
                       cfg.epsilon, _MODE_CODES[cfg.threshold_mode],
                       cfg.batch_size, cfg.seed)


def model_to_bytes(model: KngModel) -> bytes:
    """Serialize to the KNGM binary format (little-endian, CRC-checked).

    The layout is deterministic: identical model state always produces
    identical bytes. Covariances are stored as their lower triangles.
    """
    cfg = model.config
    k, d = cfg.k, cfg.dim
    parts = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION), _pack_config(cfg)]
    sel = model.selection
    parts.append(struct.pack("<II", sel.source_dim, len(sel.indices)))
    parts.append(np.asarray(sel.indices, dtype="<u4").tobytes())
    parts.append(struct.pack("<Q", sel.seed))

    il = np.tril_indices(d)
    parts.append(np.ascontiguousarray(model.centers, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(model.counts, dtype="<u8").tobytes())
    parts.append(np.ascontiguousarray(model.thresholds, dtype="<f8").tobytes())
    tri = np.ascontiguousarray(model.covs[:, il[0], il[1]], dtype="<f8")
    parts.append(tri.tobytes())

    edges = sorted(model.graph.edges.items())
    parts.append(struct.pack("<Q", len(edges)))
    for (i, j), stamp in edges:
        parts.append(struct.pack("<IIQ", i, j, stamp))
    parts.append(struct.pack("<Q", model.graph.event_counter))
    parts.append(struct.pack("<4Q", *model.rng.state))

    blob = b"".join(parts)
    return blob + struct.pack("<I", zlib.crc32(blob))


def save_model(model: KngModel, path) -> None:
    """Write the model to a KNGM file."""
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> KngModel:
    """Read a KNGM file back; validates structure, bounds and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return model_from_bytes(blob, origin=str(path))


def model_from_bytes(blob: bytes, origin: str = "<bytes>") -> KngModel:
    """Deserialize a KNGM byte string; validates structure, bounds, checksum."""
    path = origin
    if len(blob) < 8 or blob[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated")
    crc_stored = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) != crc_stored:
        raise FormatError(f"{path}: checksum mismatch")

    off = 8
    try:
        k, dim, epochs, age_max, epsilon, mode_code, batch_size, seed = \
            struct.unpack_from("<IIIQdBIQ", blob, off)
        off += struct.calcsize("<IIIQdBIQ")
        if mode_code >= len(THRESHOLD_MODES):
            raise FormatError(f"{path}: bad threshold mode {mode_code}")
        try:
            cfg = KngConfig(k=k, dim=dim, epochs=epochs, age_max=age_max,
                            epsilon=epsilon,
                            threshold_mode=THRESHOLD_MODES[mode_code],
                            batch_size=batch_size, seed=seed)
        except ValidationError as exc:
            raise FormatError(f"{path}: invalid config ({exc})") from None

        source_dim, n_idx = struct.unpack_from("<II", blob, off)
        off += 8
        idx = np.frombuffer(blob, dtype="<u4", count=n_idx, offset=off)
        off += 4 * n_idx
        (sel_seed,) = struct.unpack_from("<Q", blob, off)
        off += 8
        if n_idx != dim:
            raise FormatError(f"{path}: selection keeps {n_idx} != dim {dim}")
        if len(idx) and (idx[-1] >= source_dim or
                         (np.diff(idx.astype(np.int64)) <= 0).any()):
            raise FormatError(f"{path}: selection indices not sorted/distinct/in range")
        sel = ChannelSelection(source_dim=source_dim,
                               indices=tuple(int(v) for v in idx), seed=sel_seed)

        model = KngModel(cfg, sel)
        n_tri = dim * (dim + 1) // 2
        centers = np.frombuffer(blob, dtype="<f8", count=k * dim, offset=off)
        off += 8 * k * dim
        counts = np.frombuffer(blob, dtype="<u8", count=k, offset=off)
        off += 8 * k
        thresholds = np.frombuffer(blob, dtype="<f8", count=k, offset=off)
        off += 8 * k
        tri = np.frombuffer(blob, dtype="<f8", count=k * n_tri, offset=off)
        off += 8 * k * n_tri

        model.centers = centers.reshape(k, dim).astype(np.float64)
        model.counts = counts.astype(np.int64)
        model.thresholds = thresholds.astype(np.float64)
        il = np.tril_indices(dim)
        covs = np.zeros((k, dim, dim), dtype=np.float64)
        covs[:, il[0], il[1]] = tri.reshape(k, n_tri)
        covs[:, il[1], il[0]] = tri.reshape(k, n_tri)
        model.covs = covs

        (n_edges,) = struct.unpack_from("<Q", blob, off)
        off += 8
        if len(blob) - off < 16 * n_edges:
            raise FormatError(f"{path}: edge table overruns the file")
        for _ in range(n_edges):
            i, j, stamp = struct.unpack_from("<IIQ", blob, off)
            off += 16
            if not (i < j < k):
                raise FormatError(f"{path}: bad edge ({i}, {j}) for k={k}")
            model.graph.edges[(i, j)] = stamp
        (model.graph.event_counter,) = struct.unpack_from("<Q", blob, off)
        off += 8
        rng_state = struct.unpack_from("<4Q", blob, off)
        off += 32
        model.rng = Xoshiro256.from_state(rng_state)
    except struct.error:
        raise FormatError(f"{path}: truncated") from None

    if off != len(blob) - 4:
        raise FormatError(f"{path}: {len(blob) - 4 - off} unexpected trailing bytes")
    for (i, j), stamp in model.graph.edges.items():
        if stamp > model.graph.event_counter:
            raise FormatError(f"{path}: edge ({i}, {j}) stamped in the future")
    if not np.isfinite(model.centers).all() or not np.isfinite(model.covs).all():
        raise FormatError(f"{path}: non-finite model state")
    if np.isnan(model.thresholds).any():
        raise FormatError(f"{path}: NaN thresholds")
    if (model.counts < 0).any():
        raise FormatError(f"{path}: negative counts")
    model.trained = True
    return model
