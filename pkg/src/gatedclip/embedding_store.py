"""Embedding datasets: on-disk format, batching, and synthetic generation.

The on-disk GCEB format (little-endian throughout):

    header (16 bytes): magic "GCEB" | version u32 | dim u32 | record_count u32
    per record:        id u64 | label u8 | flags u8 | image f32[dim]
                       | text f32[dim] | flipped image f32[dim] if flags bit0
                       | meta_tag u8 when version == 2

Version 1 holds real data; version 2 is the same layout plus a trailing
provenance tag byte per record and is written for synthetic datasets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    InvariantError,
    NormViolationError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .rng import coin, derive_rng

MAGIC = b"GCEB"
NORM_TOL = 1e-3
UNLABELED = 255

_HEADER = struct.Struct("<4sIII")
_REC_FIXED = struct.Struct("<QBB")
_FLAG_FLIPPED = 0x01


class MetaTag(IntEnum):
    """Synthetic provenance: which modality carries the label signal."""

    NONE = 0
    IMAGE_SIGNAL = 1
    TEXT_SIGNAL = 2


@dataclass
class EmbeddingRecord:
    """One example: paired unit-norm image/text embeddings and a label."""

    id: int
    label: int
    image_emb: np.ndarray
    text_emb: np.ndarray
    flipped_image_emb: np.ndarray | None = None
    meta_tag: MetaTag = MetaTag.NONE

    def validate(self, dim: int) -> None:
        if self.label not in (0, 1, UNLABELED):
            raise InvariantError(f"record {self.id}: label {self.label} not in {{0,1,255}}")
        for name, vec in (
            ("image_emb", self.image_emb),
            ("text_emb", self.text_emb),
            ("flipped_image_emb", self.flipped_image_emb),
        ):
            if vec is None:
                continue
            if vec.shape != (dim,):
                raise InvariantError(
                    f"record {self.id}: {name} has shape {vec.shape}, expected ({dim},)"
                )
            norm = float(np.linalg.norm(np.asarray(vec, dtype=np.float64)))
            if abs(norm - 1.0) > NORM_TOL:
                raise NormViolationError(
                    f"record {self.id}: {name} norm {norm:.6f} outside 1 +/- {NORM_TOL}"
                )


@dataclass
class Dataset:
    """Ordered embedding records sharing one dimensionality."""

    records: list[EmbeddingRecord]
    dim: int
    has_flip: bool = False
    synthetic: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def validate(self) -> None:
        ids = set()
        for rec in self.records:
            if rec.id in ids:
                raise InvariantError(f"duplicate record id {rec.id}")
            ids.add(rec.id)
            rec.validate(self.dim)

    def label_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for rec in self.records:
            counts[rec.label] = counts.get(rec.label, 0) + 1
        return counts


@dataclass
class Batch:
    """Index-aligned matrices for one training/eval step."""

    image_matrix: np.ndarray  # (N, D) float32
    text_matrix: np.ndarray  # (N, D) float32
    labels: np.ndarray  # (N,) uint8
    ids: np.ndarray  # (N,) uint64

    def __len__(self) -> int:
        return self.image_matrix.shape[0]


@dataclass
class SyntheticConfig:
    """Controls the synthetic cross-modal generator."""

    n: int
    dim: int = 512
    mode: str = "xor"  # "xor" or "single_modality"
    signal_strength: float = 0.5
    noise_sigma: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.n < 2:
            raise InvariantError(f"n must be >= 2, got {self.n}")
        if self.mode not in ("xor", "single_modality"):
            raise InvariantError(f"unknown synthetic mode {self.mode!r}")
        if self.signal_strength <= 0:
            raise InvariantError("signal_strength must be positive")
        if self.noise_sigma < 0:
            raise InvariantError("noise_sigma must be non-negative")


def write_embedding_file(
    dataset: Dataset, path: str | Path, version: int | None = None
) -> None:
    """Serialize a dataset to the GCEB format.

    Version is chosen automatically: 2 when the dataset is synthetic or any
    record carries a provenance tag, else 1. Validates invariants first and
    refuses to write a dataset that would not read back cleanly.
    """
    dataset.validate()
    if version is None:
        tagged = any(rec.meta_tag != MetaTag.NONE for rec in dataset.records)
        version = 2 if (dataset.synthetic or tagged) else 1
    if version not in (1, 2):
        raise UnsupportedVersionError(f"cannot write version {version}")

    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, dataset.dim, len(dataset.records)))
        for rec in dataset.records:
            flags = _FLAG_FLIPPED if rec.flipped_image_emb is not None else 0
            fh.write(_REC_FIXED.pack(rec.id, rec.label, flags))
            fh.write(np.asarray(rec.image_emb, dtype="<f4").tobytes())
            fh.write(np.asarray(rec.text_emb, dtype="<f4").tobytes())
            if rec.flipped_image_emb is not None:
                fh.write(np.asarray(rec.flipped_image_emb, dtype="<f4").tobytes())
            if version == 2:
                fh.write(struct.pack("<B", int(rec.meta_tag)))


def read_embedding_file(path: str | Path) -> Dataset:
    """Parse a GCEB file, validating magic, version, payload size and norms."""
    with open(path, "rb") as fh:
        raw = fh.read()

    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: magic {magic!r}, expected {MAGIC!r}")
    if version not in (1, 2):
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")

    vec_bytes = 4 * dim
    offset = _HEADER.size
    records: list[EmbeddingRecord] = []
    has_flip = False
    for i in range(count):
        if offset + _REC_FIXED.size > len(raw):
            raise TruncatedFileError(f"{path}: truncated in record {i}")
        rec_id, label, flags = _REC_FIXED.unpack_from(raw, offset)
        offset += _REC_FIXED.size

        n_vecs = 3 if flags & _FLAG_FLIPPED else 2
        need = n_vecs * vec_bytes + (1 if version == 2 else 0)
        if offset + need > len(raw):
            raise TruncatedFileError(f"{path}: truncated in record {i}")

        def take() -> np.ndarray:
            nonlocal offset
            vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).copy()
            offset += vec_bytes
            return vec

        image = take()
        text = take()
        flipped = take() if flags & _FLAG_FLIPPED else None
        if flipped is not None:
            has_flip = True
        tag = MetaTag.NONE
        if version == 2:
            tag = MetaTag(raw[offset])
            offset += 1
        records.append(EmbeddingRecord(rec_id, label, image, text, flipped, tag))

    ds = Dataset(records, dim=dim, has_flip=has_flip, synthetic=(version == 2))
    ds.validate()
    return ds


def make_batches(
    dataset: Dataset,
    batch_size: int,
    shuffle: bool,
    flip_prob: float,
    seed: int,
    epoch: int,
) -> list[Batch]:
    """Partition one epoch into batches.

    The permutation depends only on (seed, epoch); each record's flip choice
    only on (seed, epoch, id), so a record keeps its decision wherever the
    shuffle places it. The final batch may be short.
    """
    n = len(dataset.records)
    if n == 0:
        raise InvariantError("cannot batch an empty dataset")
    if batch_size < 1:
        raise InvariantError(f"batch_size must be >= 1, got {batch_size}")

    order = np.arange(n)
    if shuffle:
        order = derive_rng(seed, "shuffle", epoch).permutation(n)

    batches: list[Batch] = []
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        image = np.empty((len(idx), dataset.dim), dtype=np.float32)
        text = np.empty((len(idx), dataset.dim), dtype=np.float32)
        labels = np.empty(len(idx), dtype=np.uint8)
        ids = np.empty(len(idx), dtype=np.uint64)
        for row, j in enumerate(idx):
            rec = dataset.records[j]
            vec = rec.image_emb
            if (
                flip_prob > 0.0
                and rec.flipped_image_emb is not None
                and coin(seed, "flip", epoch, rec.id) < flip_prob
            ):
                vec = rec.flipped_image_emb
            image[row] = vec
            text[row] = rec.text_emb
            labels[row] = rec.label
            ids[row] = rec.id
        batches.append(Batch(image, text, labels, ids))
    return batches


def _normalize(v: np.ndarray) -> np.ndarray:
    return (v / np.linalg.norm(v)).astype(np.float32)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Build a synthetic dataset around two orthonormal signal directions.

    xor mode: each modality carries an independent latent bit with strength
    ``signal_strength`` along its direction plus isotropic Gaussian noise;
    the label is the XOR of the bits, so no linear function of the averaged
    embeddings can separate the classes. single_modality mode: half the
    records encode the label in the image direction only (text is pure
    noise), half in the text direction only. Label counts are balanced
    within one by cycling fixed assignment patterns before shuffling.
    """
    config.validate()
    rng = derive_rng(config.seed, "synthetic")

    # Two orthonormal directions via Gram-Schmidt on Gaussian draws.
    u_img = rng.standard_normal(config.dim)
    u_img /= np.linalg.norm(u_img)
    u_txt = rng.standard_normal(config.dim)
    u_txt -= u_img * (u_img @ u_txt)
    u_txt /= np.linalg.norm(u_txt)

    alpha = config.signal_strength
    sigma = config.noise_sigma

    def noisy(signal: np.ndarray | None) -> np.ndarray:
        # Pure-noise vectors are a uniformly random direction for every
        # sigma > 0, so use the unscaled draw; this also keeps sigma == 0
        # well defined.
        eps = rng.standard_normal(config.dim)
        if signal is None:
            return _normalize(eps)
        return _normalize(sigma * eps + signal)

    records: list[EmbeddingRecord] = []
    if config.mode == "xor":
        patterns = [(0, 0), (0, 1), (1, 0), (1, 1)]  # label = a ^ b
        for i in range(config.n):
            a, b = patterns[i % 4]
            image = noisy((2 * a - 1) * alpha * u_img)
            text = noisy((2 * b - 1) * alpha * u_txt)
            records.append(EmbeddingRecord(i, a ^ b, image, text))
    else:
        # Cycle (group, label) so both group sizes and labels stay within
        # one of an even split for every n.
        patterns = [
            (MetaTag.IMAGE_SIGNAL, 0),
            (MetaTag.TEXT_SIGNAL, 1),
            (MetaTag.IMAGE_SIGNAL, 1),
            (MetaTag.TEXT_SIGNAL, 0),
        ]
        for i in range(config.n):
            tag, label = patterns[i % 4]
            signal = (2 * label - 1) * alpha
            if tag is MetaTag.IMAGE_SIGNAL:
                image = noisy(signal * u_img)
                text = noisy(None)
            else:
                image = noisy(None)
                text = noisy(signal * u_txt)
            records.append(EmbeddingRecord(i, label, image, text, meta_tag=tag))

    perm = rng.permutation(config.n)
    records = [records[j] for j in perm]
    ds = Dataset(records, dim=config.dim, has_flip=False, synthetic=True)
    ds.validate()
    return ds


def split_dataset(dataset: Dataset, n_first: int) -> tuple[Dataset, Dataset]:
    """Split into the first n_first records and the rest (e.g. train/val
    halves of one synthetic draw, which must share signal directions)."""
    if not 0 < n_first < len(dataset.records):
        raise InvariantError(
            f"split point {n_first} outside (0, {len(dataset.records)})"
        )
    head = Dataset(
        dataset.records[:n_first], dataset.dim, dataset.has_flip, dataset.synthetic
    )
    tail = Dataset(
        dataset.records[n_first:], dataset.dim, dataset.has_flip, dataset.synthetic
    )
    return head, tail
