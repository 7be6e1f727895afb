import json
import math

import numpy as np
import pytest

from gatedclip.embedding_store import SyntheticConfig, generate_synthetic, split_dataset
from gatedclip.errors import CheckpointError, CheckpointMismatchError, InvariantError
from gatedclip.model import BASELINE, GATEDCLIP, ModelConfig, arch_for, gatedclip_arch
from gatedclip.nn_core import init_params
from gatedclip.optim import AdamWState, ScheduleConfig, lr_at
from gatedclip.trainer import (
    TrainConfig,
    evaluate,
    load_checkpoint,
    predict_scores,
    save_checkpoint,
    train,
    train_config_from_flat_dict,
)

from conftest import make_random_dataset

# proj_out stays comfortably above the point where dropout + ReLU could
# zero a whole projection row (which the alignment loss rejects).
SMALL_MODEL = ModelConfig(dim_in=16, proj_hidden=16, proj_out=32, gate_hidden=8, cls_hidden=8)


def small_synthetic(seed=11, n=120, split=100):
    full = generate_synthetic(
        SyntheticConfig(n=n, dim=16, mode="xor", signal_strength=0.5, noise_sigma=0.1, seed=seed)
    )
    return split_dataset(full, split)


def small_config(out_dir, **kw) -> TrainConfig:
    defaults = dict(
        model_kind=GATEDCLIP,
        model=SMALL_MODEL,
        batch_size=32,
        max_epochs=4,
        patience=4,
        seed=3,
        out_dir=str(out_dir),
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tmp_path):
        params = init_params(gatedclip_arch(SMALL_MODEL), seed=0)
        meta = {"model_kind": GATEDCLIP, "model_config": SMALL_MODEL.to_dict()}
        path = tmp_path / "m.ckpt"
        save_checkpoint(params, None, meta, path)
        loaded, state, meta2 = load_checkpoint(path)
        assert state is None
        assert meta2["model_kind"] == GATEDCLIP
        assert loaded.names() == params.names()
        for a, b in zip(params, loaded):
            assert np.array_equal(a.values, b.values)

    def test_roundtrip_with_optimizer_state(self, tmp_path):
        params = init_params(gatedclip_arch(SMALL_MODEL), seed=1)
        state = AdamWState.for_params(params)
        for t in params:
            state.m[t.name][...] = 0.25
            state.v[t.name][...] = 0.5
        state.step_count = 17
        meta = {"model_kind": GATEDCLIP, "model_config": SMALL_MODEL.to_dict()}
        path = tmp_path / "m.ckpt"
        save_checkpoint(params, state, meta, path)
        _, state2, _ = load_checkpoint(path)
        assert state2 is not None and state2.step_count == 17
        for t in params:
            assert np.array_equal(state2.m[t.name], state.m[t.name])
            assert np.array_equal(state2.v[t.name], state.v[t.name])

    def test_default_config_stores_sixteen_tensors(self, tmp_path):
        params = init_params(gatedclip_arch(ModelConfig()), seed=2)
        meta = {"model_kind": GATEDCLIP, "model_config": ModelConfig().to_dict()}
        path = tmp_path / "full.ckpt"
        save_checkpoint(params, None, meta, path)
        _, _, meta2 = load_checkpoint(path)
        assert len(meta2["tensors"]) == 16
        weights = [t for t in meta2["tensors"] if len(t["shape"]) == 2]
        biases = [t for t in meta2["tensors"] if len(t["shape"]) == 1]
        assert len(weights) == 8 and len(biases) == 8

    def test_wrong_expected_config_rejected(self, tmp_path):
        params = init_params(gatedclip_arch(SMALL_MODEL), seed=3)
        meta = {"model_kind": GATEDCLIP, "model_config": SMALL_MODEL.to_dict()}
        path = tmp_path / "m.ckpt"
        save_checkpoint(params, None, meta, path)
        with pytest.raises(CheckpointMismatchError):
            load_checkpoint(path, expected_config=ModelConfig())
        with pytest.raises(CheckpointMismatchError):
            load_checkpoint(path, expected_kind=BASELINE)

    def test_corrupt_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_tensor_data_rejected(self, tmp_path):
        params = init_params(gatedclip_arch(SMALL_MODEL), seed=4)
        meta = {"model_kind": GATEDCLIP, "model_config": SMALL_MODEL.to_dict()}
        path = tmp_path / "m.ckpt"
        save_checkpoint(params, None, meta, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 100])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_meta_requires_kind_and_config(self, tmp_path):
        params = init_params(gatedclip_arch(SMALL_MODEL), seed=5)
        with pytest.raises(CheckpointError):
            save_checkpoint(params, None, {"model_kind": GATEDCLIP}, tmp_path / "x.ckpt")


class TestTrainLoop:
    def test_zero_epochs_rejected(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        with pytest.raises(InvariantError):
            train(train_ds, val_ds, small_config(tmp_path, max_epochs=0, patience=0))

    def test_unlabeled_training_data_rejected(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        train_ds.records[0].label = 255
        with pytest.raises(InvariantError):
            train(train_ds, val_ds, small_config(tmp_path))

    def test_single_class_validation_rejected(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        for rec in val_ds.records:
            rec.label = 1
        with pytest.raises(InvariantError):
            train(train_ds, val_ds, small_config(tmp_path))

    def test_dim_mismatch_rejected(self, tmp_path):
        train_ds, _ = small_synthetic()
        other = make_random_dataset(seed=0, n=10, dim=8, labels=[0, 1] * 5)
        with pytest.raises(InvariantError):
            train(train_ds, other, small_config(tmp_path))

    def test_lambda_zero_total_equals_cls(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        result = train(
            train_ds, val_ds, small_config(tmp_path / "r", lambda_=0.0, max_epochs=3, patience=3)
        )
        for log in result.logs:
            assert log.train_loss_total == log.train_loss_cls
            assert log.train_loss_contrastive > 0.0  # still reported

    def test_metrics_jsonl_layout(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        out = tmp_path / "run"
        result = train(train_ds, val_ds, small_config(out, max_epochs=3, patience=3))
        lines = (out / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == result.epochs_run
        expected_keys = {
            "epoch",
            "train_loss_total",
            "train_loss_cls",
            "train_loss_contrastive",
            "val_auroc",
            "val_accuracy",
            "val_loss",
            "lr",
        }
        for i, line in enumerate(lines):
            obj = json.loads(line)
            assert set(obj) == expected_keys
            assert obj["epoch"] == i

    def test_deterministic_logs(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        a = train(train_ds, val_ds, small_config(tmp_path / "a"))
        b = train(train_ds, val_ds, small_config(tmp_path / "b"))
        assert len(a.logs) == len(b.logs)
        for la, lb in zip(a.logs, b.logs):
            assert la.epoch == lb.epoch
            for field in (
                "train_loss_total",
                "train_loss_cls",
                "train_loss_contrastive",
                "val_auroc",
                "val_accuracy",
                "val_loss",
                "lr",
            ):
                assert abs(getattr(la, field) - getattr(lb, field)) <= 1e-6
        ja = (tmp_path / "a" / "metrics.jsonl").read_bytes()
        jb = (tmp_path / "b" / "metrics.jsonl").read_bytes()
        assert ja == jb

    def test_early_stopping_rule(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        config = small_config(tmp_path / "es", max_epochs=12, patience=2)
        result = train(train_ds, val_ds, config)
        aurocs = [log.val_auroc for log in result.logs]
        # replay the rule: stop at the first epoch e with e - argmax >= patience
        best = -math.inf
        best_epoch = -1
        stopped_at = None
        for e, value in enumerate(aurocs):
            if value > best:
                best, best_epoch = value, e
            if e - best_epoch >= config.patience:
                stopped_at = e
                break
        expected_epochs = (stopped_at + 1) if stopped_at is not None else config.max_epochs
        assert result.epochs_run == expected_epochs
        assert result.best_epoch == best_epoch
        assert result.best_val_auroc == best

    def test_lr_sequence_matches_schedule(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        config = small_config(tmp_path / "lr", max_epochs=4, patience=4)
        result = train(train_ds, val_ds, config)
        steps_per_epoch = math.ceil(len(train_ds) / config.batch_size)
        sched = ScheduleConfig(
            peak_lr=config.schedule.peak_lr,
            warmup_epochs=config.schedule.warmup_epochs,
            total_epochs=config.max_epochs,
            steps_per_epoch=steps_per_epoch,
            min_lr=config.schedule.min_lr,
        )
        for log in result.logs:
            last_step = (log.epoch + 1) * steps_per_epoch - 1
            assert log.lr == lr_at(last_step, sched)

    def test_restored_best_reproduces_best_auroc(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        config = small_config(tmp_path / "rb", max_epochs=5, patience=5)
        result = train(train_ds, val_ds, config)
        res, _ = evaluate(val_ds, result.params, GATEDCLIP, SMALL_MODEL, lam=config.lambda_)
        assert res.auroc == result.best_val_auroc

    def test_best_is_max_over_logs(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        result = train(train_ds, val_ds, small_config(tmp_path / "mx"))
        assert result.best_val_auroc == max(log.val_auroc for log in result.logs)

    def test_baseline_contrastive_reported_zero(self, tmp_path):
        train_ds, val_ds = small_synthetic()
        result = train(
            train_ds, val_ds, small_config(tmp_path / "bl", model_kind=BASELINE)
        )
        for log in result.logs:
            assert log.train_loss_contrastive == 0.0
            assert log.train_loss_total == log.train_loss_cls


class TestEvaluate:
    def test_initial_cross_entropy_near_ln2(self):
        _, val_ds = small_synthetic(n=400, split=200)
        params = init_params(arch_for(GATEDCLIP, SMALL_MODEL), seed=9)
        _, loss = evaluate(val_ds, params, GATEDCLIP, SMALL_MODEL, lam=0.0)
        assert abs(loss - math.log(2)) <= 0.15

    def test_repeated_evaluation_identical(self):
        train_ds, _ = small_synthetic()
        params = init_params(arch_for(GATEDCLIP, SMALL_MODEL), seed=10)
        a = evaluate(train_ds, params, GATEDCLIP, SMALL_MODEL)
        b = evaluate(train_ds, params, GATEDCLIP, SMALL_MODEL)
        assert a == b

    def test_duplicated_dataset_same_auroc(self):
        from gatedclip.embedding_store import Dataset, EmbeddingRecord

        _, val_ds = small_synthetic()
        params = init_params(arch_for(GATEDCLIP, SMALL_MODEL), seed=12)
        base, _ = evaluate(val_ds, params, GATEDCLIP, SMALL_MODEL)
        doubled_records = [
            EmbeddingRecord(
                id=rec.id + offset,
                label=rec.label,
                image_emb=rec.image_emb,
                text_emb=rec.text_emb,
                meta_tag=rec.meta_tag,
            )
            for offset in (0, 10_000)
            for rec in val_ds.records
        ]
        doubled = Dataset(doubled_records, dim=val_ds.dim, synthetic=True)
        res, _ = evaluate(doubled, params, GATEDCLIP, SMALL_MODEL)
        assert res.auroc == base.auroc

    def test_unlabeled_rejected(self):
        _, val_ds = small_synthetic()
        val_ds.records[0].label = 255
        params = init_params(arch_for(GATEDCLIP, SMALL_MODEL), seed=13)
        with pytest.raises(InvariantError):
            evaluate(val_ds, params, GATEDCLIP, SMALL_MODEL)

    def test_predict_scores_order_and_range(self):
        _, val_ds = small_synthetic()
        params = init_params(arch_for(GATEDCLIP, SMALL_MODEL), seed=14)
        ids, scores = predict_scores(val_ds, params, GATEDCLIP, SMALL_MODEL)
        assert ids.tolist() == [rec.id for rec in val_ds.records]
        assert np.all((scores >= 0) & (scores <= 1))


class TestFlatConfig:
    def test_defaults(self):
        config = train_config_from_flat_dict({})
        assert config.model_kind == GATEDCLIP
        assert config.batch_size == 32
        assert config.max_epochs == 20
        assert config.patience == 7
        assert config.lambda_ == 0.01
        assert config.flip_prob == 0.5
        assert config.schedule.peak_lr == 1e-4
        assert config.hyper.weight_decay == 0.01

    def test_lambda_key_maps(self):
        assert train_config_from_flat_dict({"lambda": 0.5}).lambda_ == 0.5

    def test_nested_keys_route(self):
        config = train_config_from_flat_dict(
            {"proj_hidden": 64, "weight_decay": 0.1, "peak_lr": 1e-3, "batch_size": 8}
        )
        assert config.model.proj_hidden == 64
        assert config.hyper.weight_decay == 0.1
        assert config.schedule.peak_lr == 1e-3
        assert config.batch_size == 8

    def test_unknown_key_rejected(self):
        with pytest.raises(InvariantError, match="learning_rate"):
            train_config_from_flat_dict({"learning_rate": 1e-3})
