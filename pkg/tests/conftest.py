"""Shared fixtures: synthetic datasets and the (slow) seeded training runs
reused by the trainer, gate-analysis, and acceptance tests."""

from __future__ import annotations

import time
from types import SimpleNamespace

import numpy as np
import pytest

from gatedclip.embedding_store import (
    Dataset,
    EmbeddingRecord,
    SyntheticConfig,
    generate_synthetic,
    split_dataset,
)
from gatedclip.model import BASELINE, GATEDCLIP, ModelConfig
from gatedclip.trainer import TrainConfig, train

TINY = ModelConfig(
    dim_in=6, proj_hidden=5, proj_out=4, gate_hidden=3, cls_hidden=3, num_classes=2
)


def random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def make_random_dataset(
    seed: int,
    n: int = 10,
    dim: int = 8,
    with_flip: bool = False,
    synthetic: bool = False,
    labels: list[int] | None = None,
) -> Dataset:
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        label = labels[i] if labels is not None else int(rng.integers(0, 2))
        records.append(
            EmbeddingRecord(
                id=i,
                label=label,
                image_emb=random_unit(rng, dim),
                text_emb=random_unit(rng, dim),
                flipped_image_emb=random_unit(rng, dim) if with_flip else None,
            )
        )
    return Dataset(records, dim=dim, has_flip=with_flip, synthetic=synthetic)


@pytest.fixture(scope="session")
def xor_split():
    full = generate_synthetic(
        SyntheticConfig(n=5000, mode="xor", signal_strength=0.5, noise_sigma=0.1, seed=7)
    )
    return split_dataset(full, 4000)


@pytest.fixture(scope="session")
def xor_runs(xor_split, tmp_path_factory):
    """Both models trained on the 4000/1000 XOR split with the default
    configuration at seed 7. Elapsed wall time covers both runs."""
    train_ds, val_ds = xor_split
    t0 = time.perf_counter()
    gated_cfg = TrainConfig(
        model_kind=GATEDCLIP, seed=7, out_dir=str(tmp_path_factory.mktemp("xor_gated"))
    )
    gated = train(train_ds, val_ds, gated_cfg)
    baseline_cfg = TrainConfig(
        model_kind=BASELINE, seed=7, out_dir=str(tmp_path_factory.mktemp("xor_base"))
    )
    baseline = train(train_ds, val_ds, baseline_cfg)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(
        train_ds=train_ds,
        val_ds=val_ds,
        gated_cfg=gated_cfg,
        gated=gated,
        baseline_cfg=baseline_cfg,
        baseline=baseline,
        elapsed=elapsed,
    )


@pytest.fixture(scope="session")
def single_modality_run(tmp_path_factory):
    """Gated model trained on single_modality synthetic data (defaults,
    seed 7), for gate-directionality checks."""
    full = generate_synthetic(
        SyntheticConfig(
            n=5000, mode="single_modality", signal_strength=0.5, noise_sigma=0.1, seed=7
        )
    )
    train_ds, val_ds = split_dataset(full, 4000)
    t0 = time.perf_counter()
    cfg = TrainConfig(
        model_kind=GATEDCLIP, seed=7, out_dir=str(tmp_path_factory.mktemp("single_mod"))
    )
    result = train(train_ds, val_ds, cfg)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(
        train_ds=train_ds, val_ds=val_ds, cfg=cfg, result=result, elapsed=elapsed
    )
