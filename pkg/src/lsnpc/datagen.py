"""Synthetic correlated multilabel data and the dataset file format.

The generator draws a low-rank latent factor per instance, produces labels by
thresholding random linear label prototypes of that factor, and emits features
as a random linear embedding of the same factor plus Gaussian noise.  Shared
factors make labels correlated, and the threshold offsets control imbalance;
labels stay recoverable from features up to the injected feature noise.

Datasets persist in a fixed little-endian binary layout so that identical
configs reproduce byte-identical files:

    magic 'LSDS' | version u8 | n u32 | d u32 | k u32 | meta_len u32 |
    metadata utf-8 | X float32 row-major | Y bit-packed rows (flattened)
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import rngs

__all__ = [
    "FeatureDataset",
    "GeneratorConfig",
    "SyntheticAux",
    "generate_synthetic",
    "save_dataset",
    "load_dataset",
    "load_csv",
    "save_csv",
]

_MAGIC = b"LSDS"
_VERSION = 1


@dataclass
class FeatureDataset:
    """Feature matrix X (n x d float32) and binary label matrix Y (n x k)."""

    X: np.ndarray
    Y: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float32)
        self.Y = np.asarray(self.Y, dtype=np.uint8)
        if self.X.ndim != 2 or self.Y.ndim != 2:
            raise ValueError("X and Y must be 2-d")
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError(
                f"row counts differ: X has {self.X.shape[0]}, Y has {self.Y.shape[0]}"
            )
        if self.X.shape[0] == 0 or self.X.shape[1] == 0 or self.Y.shape[1] == 0:
            raise ValueError("n, d, k must all be positive")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("features contain NaN or Inf")
        if not np.all((self.Y == 0) | (self.Y == 1)):
            raise ValueError("labels must be binary")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic generator.

    ``rank`` is the latent factor dimension shared by features and labels;
    ``b_loc``/``b_scale`` set the distribution of per-label threshold offsets
    (negative locations make positives rarer, dialing in imbalance);
    ``identity_embedding`` replaces the random feature map with the identity
    (requires rank == d) so features determine labels exactly at zero noise.
    """

    n: int = 2000
    d: int = 32
    k: int = 10
    rank: int = 8
    noise_scale: float = 0.5
    b_loc: float = -2.0
    b_scale: float = 0.5
    seed: int = 0
    identity_embedding: bool = False

    def __post_init__(self):
        if min(self.n, self.d, self.k, self.rank) <= 0:
            raise ValueError("n, d, k, rank must be positive")
        if self.rank > min(self.d, self.k) and not self.identity_embedding:
            if self.rank > self.d:
                raise ValueError("rank must not exceed the feature dimension")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be non-negative")
        if self.identity_embedding and self.rank != self.d:
            raise ValueError("identity embedding requires rank == d")


@dataclass
class SyntheticAux:
    """Generator internals kept for oracle checks; never persisted."""

    factors: np.ndarray
    label_weights: np.ndarray
    label_offsets: np.ndarray
    embedding: np.ndarray


def generate_synthetic(cfg: GeneratorConfig) -> tuple[FeatureDataset, SyntheticAux]:
    """Sample a dataset; same config (including seed) gives identical bytes."""
    rng = rngs.stream(cfg.seed, "datagen")
    u = rng.standard_normal((cfg.n, cfg.rank))
    W = rng.standard_normal((cfg.k, cfg.rank))
    b = cfg.b_loc + cfg.b_scale * rng.standard_normal(cfg.k)
    logits = u @ W.T + b
    Y = (logits > 0.0).astype(np.uint8)
    if cfg.identity_embedding:
        A = np.eye(cfg.d)
    else:
        A = rng.standard_normal((cfg.d, cfg.rank))
    X = u @ A.T
    if cfg.noise_scale > 0:
        X = X + cfg.noise_scale * rng.standard_normal((cfg.n, cfg.d))
    metadata = {
        "generator": "synthetic-latent-factor",
        "n": cfg.n,
        "d": cfg.d,
        "k": cfg.k,
        "rank": cfg.rank,
        "noise_scale": cfg.noise_scale,
        "b_loc": cfg.b_loc,
        "b_scale": cfg.b_scale,
        "seed": cfg.seed,
        "identity_embedding": cfg.identity_embedding,
    }
    ds = FeatureDataset(X=X.astype(np.float32), Y=Y, metadata=metadata)
    aux = SyntheticAux(factors=u, label_weights=W, label_offsets=b, embedding=A)
    return ds, aux


# --------------------------------------------------------------------------
# Binary persistence


def _encode_metadata(metadata: dict) -> bytes:
    lines = [f"{key}={metadata[key]!r}" for key in sorted(metadata)]
    return "\n".join(lines).encode("utf-8")


def _decode_metadata(blob: bytes) -> dict:
    metadata = {}
    for line in blob.decode("utf-8").splitlines():
        if not line:
            continue
        key, _, raw = line.partition("=")
        metadata[key] = _parse_literal(raw)
    return metadata


def _parse_literal(raw: str):
    import ast

    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def save_dataset(ds: FeatureDataset, path) -> None:
    meta = _encode_metadata(ds.metadata)
    header = io.BytesIO()
    header.write(_MAGIC)
    header.write(bytes([_VERSION]))
    for value in (ds.n, ds.d, ds.k, len(meta)):
        header.write(int(value).to_bytes(4, "little"))
    packed = np.packbits(ds.Y.reshape(-1))
    with open(path, "wb") as fh:
        fh.write(header.getvalue())
        fh.write(meta)
        fh.write(np.ascontiguousarray(ds.X, dtype="<f4").tobytes())
        fh.write(packed.tobytes())


def load_dataset(path) -> FeatureDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"not a dataset file: bad magic {blob[:4]!r}")
    if blob[4] != _VERSION:
        raise ValueError(f"unsupported dataset format version {blob[4]}")
    n, d, k, meta_len = (
        int.from_bytes(blob[5 + 4 * i : 9 + 4 * i], "little") for i in range(4)
    )
    offset = 21
    meta = _decode_metadata(blob[offset : offset + meta_len])
    offset += meta_len
    x_bytes = 4 * n * d
    y_bytes = math.ceil(n * k / 8)
    if len(blob) != offset + x_bytes + y_bytes:
        raise ValueError(
            f"truncated or oversized dataset file: expected "
            f"{offset + x_bytes + y_bytes} bytes, found {len(blob)}"
        )
    X = np.frombuffer(blob, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    packed = np.frombuffer(blob, dtype=np.uint8, offset=offset + x_bytes)
    Y = np.unpackbits(packed, count=n * k).reshape(n, k)
    return FeatureDataset(X=X.copy(), Y=Y.copy(), metadata=meta)


# --------------------------------------------------------------------------
# CSV interchange


def save_csv(ds: FeatureDataset, path) -> None:
    """Write d feature columns then k 0/1 label columns with a header row."""
    headers = [f"f{i}" for i in range(ds.d)] + [f"label{j}" for j in range(ds.k)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(headers) + "\n")
        for xi, yi in zip(ds.X, ds.Y):
            cells = [repr(float(v)) for v in xi] + [str(int(v)) for v in yi]
            fh.write(",".join(cells) + "\n")


def load_csv(path, n_labels: int | None = None) -> FeatureDataset:
    """Read the comma-separated interchange format.

    The header row is required.  Label columns are those whose header starts
    with 'label'; alternatively pass ``n_labels`` to take the trailing
    columns regardless of their names.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ValueError("empty csv file")
    headers = lines[0].split(",")
    if n_labels is None:
        label_cols = [i for i, h in enumerate(headers) if h.startswith("label")]
        if not label_cols:
            raise ValueError(
                "no 'label*' columns found in header; pass n_labels explicitly"
            )
    else:
        label_cols = list(range(len(headers) - n_labels, len(headers)))
    label_set = set(label_cols)
    feature_cols = [i for i in range(len(headers)) if i not in label_set]
    rows = [line.split(",") for line in lines[1:]]
    X = np.array([[float(r[i]) for i in feature_cols] for r in rows], dtype=np.float32)
    Y = np.array([[int(r[i]) for i in label_cols] for r in rows], dtype=np.uint8)
    return FeatureDataset(X=X, Y=Y, metadata={"source": "csv"})
