"""Command-line entry point.

Subcommands: gen-synthetic, train, eval, predict, analyze-gates, inspect.
Exit codes: 0 success, 1 usage error, 2 runtime failure. Every command is
a thin adapter over the library; no numerical logic lives here.
"""

from __future__ import annotations

import argparse
import json
import sys

from .embedding_store import (
    SyntheticConfig,
    generate_synthetic,
    read_embedding_file,
    write_embedding_file,
)
from .errors import GatedClipError
from .gate_analysis import export_gate_csv, gate_report
from .model import MODEL_KINDS, ModelConfig
from .trainer import (
    evaluate,
    load_checkpoint,
    predict_scores,
    train,
    train_config_from_flat_dict,
)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gatedclip", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic embedding dataset")
    p.add_argument("--out", required=True, help="output .geb path")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=["xor", "single_modality"], default="xor")
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--alpha", type=float, default=0.5, help="signal strength")
    p.add_argument("--noise", type=float, default=0.1, help="noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a model on embedding files")
    p.add_argument("--train", required=True, dest="train_path", metavar="PATH")
    p.add_argument("--val", required=True, dest="val_path", metavar="PATH")
    p.add_argument("--config", help="flat JSON config; CLI flags win")
    p.add_argument("--model", choices=list(MODEL_KINDS))
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="write per-record class-1 scores as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("analyze-gates", help="export per-example gate values")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze_gates)

    p = sub.add_parser("inspect", help="print embedding-file header info")
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_inspect)

    return parser


def _cmd_gen_synthetic(args) -> int:
    config = SyntheticConfig(
        n=args.n,
        dim=args.dim,
        mode=args.mode,
        signal_strength=args.alpha,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    ds = generate_synthetic(config)
    write_embedding_file(ds, args.out)
    counts = ds.label_counts()
    print(f"wrote {len(ds)} records (dim {ds.dim}, labels {dict(sorted(counts.items()))}) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    flat = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            flat = json.load(fh)
    if args.model is not None:
        flat["model_kind"] = args.model
    if args.out_dir is not None:
        flat["out_dir"] = args.out_dir
    if args.seed is not None:
        flat["seed"] = args.seed
    config = train_config_from_flat_dict(flat)

    train_ds = read_embedding_file(args.train_path)
    val_ds = read_embedding_file(args.val_path)
    result = train(train_ds, val_ds, config)
    print(
        f"{config.model_kind}: best val AUROC {result.best_val_auroc:.4f} "
        f"at epoch {result.best_epoch} ({result.epochs_run} epochs run)"
    )
    print(f"checkpoint: {result.best_checkpoint_path}")
    return 0


def _load_model(checkpoint_path: str):
    params, _, meta = load_checkpoint(checkpoint_path)
    kind = meta["model_kind"]
    model_config = ModelConfig.from_dict(meta["model_config"])
    lam = float(meta.get("lambda", 0.01))
    return params, kind, model_config, lam


def _cmd_eval(args) -> int:
    params, kind, model_config, lam = _load_model(args.checkpoint)
    ds = read_embedding_file(args.data)
    result, mean_loss = evaluate(ds, params, kind, model_config, lam=lam)
    print(f"n: {result.n} (positives {result.n_positive})")
    print(f"auroc: {result.auroc:.4f}")
    print(f"accuracy: {result.accuracy:.4f}")
    print(f"loss: {mean_loss:.4f}")
    return 0


def _cmd_predict(args) -> int:
    params, kind, model_config, _ = _load_model(args.checkpoint)
    ds = read_embedding_file(args.data)
    ids, scores = predict_scores(ds, params, kind, model_config)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("id,score\n")
        for rec_id, score in zip(ids, scores):
            fh.write(f"{int(rec_id)},{score:.6f}\n")
    print(f"wrote {len(ids)} scores to {args.out}")
    return 0


def _cmd_analyze_gates(args) -> int:
    params, kind, model_config, _ = _load_model(args.checkpoint)
    ds = read_embedding_file(args.data)
    report = gate_report(ds, params, model_config, kind=kind)
    export_gate_csv(report, args.out)
    print(f"gate mean {report.overall_mean:.4f}, std {report.overall_std:.4f}")
    for key, mean in report.group_means.items():
        print(f"  mean[{key}] = {mean:.4f}")
    print(f"wrote {len(report.per_example)} rows to {args.out}")
    return 0


def _cmd_inspect(args) -> int:
    ds = read_embedding_file(args.data)
    counts = ds.label_counts()
    print(f"records: {len(ds)}")
    print(f"dim: {ds.dim}")
    print(f"version: {2 if ds.synthetic else 1}")
    print(f"has_flip: {ds.has_flip}")
    print(f"labels: {dict(sorted(counts.items()))}")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (GatedClipError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
