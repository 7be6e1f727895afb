"""Gate behavior analysis: per-example gate values, aggregate statistics,
and group means by provenance tag (synthetic) or label (real data)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding_store import Dataset, MetaTag, make_batches
from .errors import InvariantError
from .model import GATEDCLIP, ModelConfig, gatedclip_forward
from .nn_core import ParameterSet
from .trainer import EVAL_CHUNK

N_HISTOGRAM_BINS = 20


@dataclass
class GateRow:
    id: int
    label: int
    meta_tag: MetaTag
    g: float


@dataclass
class GateReport:
    per_example: list[GateRow]
    overall_mean: float
    overall_std: float  # population standard deviation
    group_means: dict[str, float]
    histogram: list[int]  # counts over 20 equal bins spanning [0, 1]


def gate_report(
    ds: Dataset, params: ParameterSet, model_config: ModelConfig, kind: str = GATEDCLIP
) -> GateReport:
    """Eval-mode pass collecting the gate value of every record.

    Group means are keyed "meta:<tag>" for synthetic provenance groups and
    "label:<value>" for label groups. Only the gated model has a gate.
    """
    if kind != GATEDCLIP:
        raise InvariantError(f"model kind {kind!r} has no gate to analyze")

    rows: list[GateRow] = []
    by_id = {rec.id: rec for rec in ds.records}
    for batch in make_batches(ds, EVAL_CHUNK, shuffle=False, flip_prob=0.0, seed=0, epoch=0):
        _, cache = gatedclip_forward(batch, params, model_config, mode="eval")
        for rec_id, label, g in zip(batch.ids, batch.labels, cache.g):
            rec = by_id[int(rec_id)]
            rows.append(GateRow(int(rec_id), int(label), rec.meta_tag, float(g)))

    values = np.array([r.g for r in rows], dtype=np.float64)
    groups: dict[str, list[float]] = {}
    for r in rows:
        groups.setdefault(f"meta:{r.meta_tag.name.lower()}", []).append(r.g)
        groups.setdefault(f"label:{r.label}", []).append(r.g)

    hist, _ = np.histogram(values, bins=N_HISTOGRAM_BINS, range=(0.0, 1.0))
    return GateReport(
        per_example=rows,
        overall_mean=float(values.mean()),
        overall_std=float(values.std()),
        group_means={k: float(np.mean(v)) for k, v in sorted(groups.items())},
        histogram=[int(c) for c in hist],
    )


def export_gate_csv(report: GateReport, path: str | Path) -> None:
    """CSV with header id,label,meta_tag,g; one row per example; summary
    statistics appended as '#'-prefixed comment lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", "meta_tag", "g"])
        for r in report.per_example:
            writer.writerow([r.id, r.label, r.meta_tag.name.lower(), f"{r.g:.6f}"])
        if not report.per_example:
            return
        fh.write(f"# overall_mean={report.overall_mean:.6f}\n")
        fh.write(f"# overall_std={report.overall_std:.6f}\n")
        for key, mean in report.group_means.items():
            fh.write(f"# mean[{key}]={mean:.6f}\n")
