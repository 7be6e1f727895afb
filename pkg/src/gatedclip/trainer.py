"""Training loop: batching, backprop, clipping, AdamW with the warmup +
cosine schedule, per-epoch validation, early stopping on validation AUROC,
checkpointing, and JSONL metric logging.

metrics.jsonl holds one object per epoch with keys: epoch,
train_loss_total, train_loss_cls, train_loss_contrastive, val_auroc,
val_accuracy, val_loss, lr. Wall-clock time is kept on the in-memory
EpochLog only, so the file is byte-identical across reruns of the same
seeded configuration.
"""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .embedding_store import UNLABELED, Dataset, make_batches
from .errors import (
    CheckpointError,
    CheckpointMismatchError,
    InvariantError,
    NonFiniteLossError,
)
from .metrics import EvalResult, accuracy, auroc
from .model import (
    BASELINE,
    GATEDCLIP,
    ModelConfig,
    arch_for,
    baseline_backward,
    baseline_forward,
    gatedclip_backward,
    gatedclip_forward,
)
from .nn_core import ParameterSet, init_params
from .objective import LossBreakdown, cross_entropy, softmax, total_loss
from .optim import AdamWState, OptimHyper, ScheduleConfig, adamw_step, clip_global_norm, lr_at
from .rng import derive_rng

CHECKPOINT_MAGIC = b"GCCK"
CHECKPOINT_VERSION = 1
EVAL_CHUNK = 256


@dataclass
class TrainConfig:
    model_kind: str = GATEDCLIP
    model: ModelConfig = field(default_factory=ModelConfig)
    hyper: OptimHyper = field(default_factory=OptimHyper)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 7
    lambda_: float = 0.01
    flip_prob: float = 0.5
    seed: int = 0
    out_dir: str = "runs/default"

    def validate(self) -> None:
        if self.model_kind not in (BASELINE, GATEDCLIP):
            raise InvariantError(f"unknown model kind {self.model_kind!r}")
        if self.batch_size < 1:
            raise InvariantError("batch_size must be >= 1")
        if self.patience > self.max_epochs:
            raise InvariantError("patience must be <= max_epochs")
        self.model.validate()
        self.hyper.validate()


_MODEL_KEYS = frozenset(ModelConfig().to_dict())
_HYPER_KEYS = frozenset(("beta1", "beta2", "eps", "weight_decay", "max_grad_norm"))
_SCHED_KEYS = frozenset(("peak_lr", "warmup_epochs", "min_lr"))
_TOP_KEYS = frozenset(
    ("model_kind", "batch_size", "max_epochs", "patience", "lambda", "flip_prob", "seed", "out_dir")
)


def train_config_from_flat_dict(flat: dict) -> TrainConfig:
    """Build a TrainConfig from flat key/value pairs (the JSON config file
    layout). The JSON key "lambda" maps to the lambda_ attribute; schedule
    total_epochs and steps_per_epoch are resolved inside train() and are
    not configurable. Unknown keys are rejected."""
    unknown = set(flat) - (_MODEL_KEYS | _HYPER_KEYS | _SCHED_KEYS | _TOP_KEYS)
    if unknown:
        raise InvariantError(f"unknown config keys: {sorted(unknown)}")
    top = {k: flat[k] for k in _TOP_KEYS & flat.keys()}
    if "lambda" in top:
        top["lambda_"] = top.pop("lambda")
    return TrainConfig(
        model=ModelConfig(**{k: flat[k] for k in _MODEL_KEYS & flat.keys()}),
        hyper=OptimHyper(**{k: flat[k] for k in _HYPER_KEYS & flat.keys()}),
        schedule=ScheduleConfig(**{k: flat[k] for k in _SCHED_KEYS & flat.keys()}),
        **top,
    )


@dataclass
class EpochLog:
    epoch: int
    train_loss_total: float
    train_loss_cls: float
    train_loss_contrastive: float
    val_auroc: float
    val_accuracy: float
    val_loss: float
    lr: float
    wall_seconds: float

    def to_json_obj(self) -> dict:
        # wall_seconds intentionally excluded: the log file must be
        # reproducible byte-for-byte for a fixed (config, seed, data).
        return {
            "epoch": self.epoch,
            "train_loss_total": self.train_loss_total,
            "train_loss_cls": self.train_loss_cls,
            "train_loss_contrastive": self.train_loss_contrastive,
            "val_auroc": self.val_auroc,
            "val_accuracy": self.val_accuracy,
            "val_loss": self.val_loss,
            "lr": self.lr,
        }


@dataclass
class TrainResult:
    best_epoch: int
    best_val_auroc: float
    epochs_run: int
    logs: list[EpochLog]
    best_checkpoint_path: str
    params: ParameterSet


def _forward_eval_scores(
    ds: Dataset, params: ParameterSet, kind: str, model_config: ModelConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
    """Eval-mode pass over a dataset in fixed chunks.

    Returns (ids, labels, class-1 scores, mean cls loss, mean contrastive
    loss). No dropout, no flip augmentation, no shuffling; reduction order
    is fixed, so repeated calls agree exactly.
    """
    scores: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    ids: list[np.ndarray] = []
    cls_sum = 0.0
    contr_sum = 0.0
    n_total = len(ds)
    labeled = all(rec.label != UNLABELED for rec in ds.records)

    for batch in make_batches(ds, EVAL_CHUNK, shuffle=False, flip_prob=0.0, seed=0, epoch=0):
        if kind == GATEDCLIP:
            logits, cache = gatedclip_forward(batch, params, model_config, mode="eval")
            if labeled:
                bd, _, _, _ = total_loss(logits, batch.labels, cache.h_I, cache.h_T, 1.0)
                cls_sum += bd.cls * len(batch)
                contr_sum += bd.contrastive * len(batch)
        else:
            logits, _ = baseline_forward(batch, params)
            if labeled:
                cls_loss, _ = cross_entropy(logits, batch.labels)
                cls_sum += cls_loss * len(batch)
        scores.append(softmax(logits)[:, 1])
        labels.append(batch.labels)
        ids.append(batch.ids)

    return (
        np.concatenate(ids),
        np.concatenate(labels),
        np.concatenate(scores),
        cls_sum / n_total,
        contr_sum / n_total,
    )


def predict_scores(
    ds: Dataset, params: ParameterSet, kind: str, model_config: ModelConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Class-1 probabilities per record, in dataset order. Labels may be
    absent (255)."""
    ids, _, scores, _, _ = _forward_eval_scores(ds, params, kind, model_config)
    return ids, scores


def evaluate(
    ds: Dataset,
    params: ParameterSet,
    kind: str,
    model_config: ModelConfig,
    lam: float = 0.01,
) -> tuple[EvalResult, float]:
    """Eval-mode metrics over a labeled dataset plus the mean eval loss.

    The loss is composed exactly like training (cls + lam * contrastive)
    so loss/AUROC divergence is visible in the logs.
    """
    if any(rec.label == UNLABELED for rec in ds.records):
        raise InvariantError("evaluate requires a fully labeled dataset")
    _, labels, scores, cls_mean, contr_mean = _forward_eval_scores(
        ds, params, kind, model_config
    )
    result = EvalResult(
        auroc=auroc(scores, labels),
        accuracy=accuracy(scores, labels),
        n=int(labels.size),
        n_positive=int((labels == 1).sum()),
    )
    mean_loss = cls_mean + (lam * contr_mean if kind == GATEDCLIP else 0.0)
    return result, mean_loss


def save_checkpoint(
    params: ParameterSet,
    state: AdamWState | None,
    meta: dict,
    path: str | Path,
) -> None:
    """Write parameters (and optionally optimizer state) to a GCCK file.

    meta must carry "model_kind" and "model_config" (a ModelConfig field
    dict); extra keys are stored verbatim. Tensor data is float32
    little-endian in ParameterSet order.
    """
    if "model_kind" not in meta or "model_config" not in meta:
        raise CheckpointError("meta must include model_kind and model_config")
    header = dict(meta)
    header["tensors"] = [{"name": t.name, "shape": list(t.values.shape)} for t in params]
    header["has_optimizer_state"] = state is not None
    if state is not None:
        header["optimizer_step_count"] = state.step_count
    blob = json.dumps(header, sort_keys=True).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for t in params:
            fh.write(np.ascontiguousarray(t.values, dtype="<f4").tobytes())
        if state is not None:
            for buffers in (state.m, state.v):
                for t in params:
                    fh.write(np.ascontiguousarray(buffers[t.name], dtype="<f4").tobytes())


def load_checkpoint(
    path: str | Path,
    expected_kind: str | None = None,
    expected_config: ModelConfig | None = None,
) -> tuple[ParameterSet, AdamWState | None, dict]:
    """Read a GCCK checkpoint, validating layout against its own declared
    model configuration and optionally against an expected one."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a GCCK checkpoint")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    kind = meta.get("model_kind")
    config = ModelConfig.from_dict(meta["model_config"])
    declared = {(l.weight, (l.fan_out, l.fan_in)) for l in arch_for(kind, config)}
    declared |= {(l.bias, (l.fan_out,)) for l in arch_for(kind, config)}
    stored = {(t["name"], tuple(t["shape"])) for t in meta["tensors"]}
    if stored != declared:
        raise CheckpointMismatchError(
            f"{path}: stored tensors do not match {kind} architecture"
        )
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointMismatchError(f"{path}: kind {kind!r} != expected {expected_kind!r}")
    if expected_config is not None and config != expected_config:
        raise CheckpointMismatchError(f"{path}: model config mismatch")

    params = ParameterSet()
    offset = 12 + header_len

    def take(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated tensor data")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset = end
        return arr.copy()

    for entry in meta["tensors"]:
        params.add(entry["name"], take(tuple(entry["shape"])))

    state = None
    if meta.get("has_optimizer_state"):
        m = {t["name"]: take(tuple(t["shape"])) for t in meta["tensors"]}
        v = {t["name"]: take(tuple(t["shape"])) for t in meta["tensors"]}
        state = AdamWState(m=m, v=v, step_count=int(meta.get("optimizer_step_count", 0)))
    return params, state, meta


def _check_datasets(train_ds: Dataset, val_ds: Dataset) -> None:
    if train_ds.dim != val_ds.dim:
        raise InvariantError(f"dim mismatch: train {train_ds.dim}, val {val_ds.dim}")
    for name, ds in (("train", train_ds), ("val", val_ds)):
        if any(rec.label == UNLABELED for rec in ds.records):
            raise InvariantError(f"{name} dataset contains unlabeled records")
    val_labels = {rec.label for rec in val_ds.records}
    if val_labels != {0, 1}:
        raise InvariantError("validation set must contain both classes")


def train(train_ds: Dataset, val_ds: Dataset, config: TrainConfig) -> TrainResult:
    """Run the full loop and return the best-checkpoint state.

    Per step: train-mode forward, combined loss, exact backward (alignment
    gradients injected into the projections), global-norm clip, AdamW at
    the scheduled rate. Per epoch: eval-mode validation, JSONL log line,
    checkpoint on AUROC improvement, early stop after ``patience`` epochs
    without one. Deterministic given (config, data).
    """
    config.validate()
    if config.max_epochs < 1:
        raise InvariantError("max_epochs must be >= 1, nothing to train")
    _check_datasets(train_ds, val_ds)

    steps_per_epoch = math.ceil(len(train_ds) / config.batch_size)
    sched = replace(
        config.schedule, total_epochs=config.max_epochs, steps_per_epoch=steps_per_epoch
    )
    sched.validate()

    kind = config.model_kind
    params = init_params(arch_for(kind, config.model), config.seed)
    state = AdamWState.for_params(params)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.jsonl"
    best_path = out_dir / "best.ckpt"
    meta = {
        "model_kind": kind,
        "model_config": config.model.to_dict(),
        "lambda": config.lambda_,
    }

    best_auroc = -math.inf
    best_epoch = -1
    logs: list[EpochLog] = []
    global_step = 0

    with open(metrics_path, "w", encoding="utf-8") as metrics_fh:
        for epoch in range(config.max_epochs):
            t0 = time.perf_counter()
            batches = make_batches(
                train_ds,
                config.batch_size,
                shuffle=True,
                flip_prob=config.flip_prob,
                seed=config.seed,
                epoch=epoch,
            )
            total_sum = cls_sum = contr_sum = 0.0
            last_lr = 0.0
            for step_in_epoch, batch in enumerate(batches):
                lr = lr_at(global_step, sched)
                last_lr = lr
                if kind == GATEDCLIP:
                    rng = derive_rng(config.seed, "dropout", epoch, step_in_epoch)
                    logits, cache = gatedclip_forward(
                        batch, params, config.model, mode="train", rng=rng
                    )
                    bd, grad_logits, grad_hI, grad_hT = total_loss(
                        logits, batch.labels, cache.h_I, cache.h_T, config.lambda_
                    )
                    if not math.isfinite(bd.total):
                        raise NonFiniteLossError(f"non-finite loss at step {global_step}")
                    gatedclip_backward(cache, grad_logits, grad_hI, grad_hT, params)
                else:
                    logits, cache = baseline_forward(batch, params)
                    cls_loss, grad_logits = cross_entropy(logits, batch.labels)
                    bd = LossBreakdown(cls_loss, cls_loss, 0.0, config.lambda_)
                    if not math.isfinite(bd.total):
                        raise NonFiniteLossError(f"non-finite loss at step {global_step}")
                    baseline_backward(cache, grad_logits, params)

                clip_global_norm(params, config.hyper.max_grad_norm)
                adamw_step(params, state, config.hyper, lr)
                global_step += 1
                total_sum += bd.total * len(batch)
                cls_sum += bd.cls * len(batch)
                contr_sum += bd.contrastive * len(batch)

            eval_res, val_loss = evaluate(
                val_ds, params, kind, config.model, lam=config.lambda_
            )
            n = len(train_ds)
            log = EpochLog(
                epoch=epoch,
                train_loss_total=total_sum / n,
                train_loss_cls=cls_sum / n,
                train_loss_contrastive=contr_sum / n,
                val_auroc=eval_res.auroc,
                val_accuracy=eval_res.accuracy,
                val_loss=val_loss,
                lr=last_lr,
                wall_seconds=time.perf_counter() - t0,
            )
            logs.append(log)
            metrics_fh.write(json.dumps(log.to_json_obj(), sort_keys=True) + "\n")
            metrics_fh.flush()

            if eval_res.auroc > best_auroc:
                best_auroc = eval_res.auroc
                best_epoch = epoch
                save_checkpoint(params, None, dict(meta, best_epoch=epoch), best_path)
            if epoch - best_epoch >= config.patience:
                break

    best_params, _, _ = load_checkpoint(best_path, expected_kind=kind, expected_config=config.model)
    return TrainResult(
        best_epoch=best_epoch,
        best_val_auroc=best_auroc,
        epochs_run=len(logs),
        logs=logs,
        best_checkpoint_path=str(best_path),
        params=best_params,
    )
