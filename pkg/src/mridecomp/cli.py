"""Command-line interface.

Subcommands: synth, slices, features, decompose, train, evaluate, pipeline.
Exit codes: 0 success, 1 validation error (bad flags, config, or input
files), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .classifier import TrainConfig, model_from_json, model_to_json, train
from .config import PipelineConfig, load_config, save_config
from .decomposition import (
    centroids_to_json,
    codec_from_json,
    codec_to_json,
    decompose,
    write_report_csv,
    write_sublabeled_csv,
)
from .errors import ConfigError, EmptyFile, ParseError, PipelineError, StageError
from .evaluation import evaluate, render_metrics_table, report_to_dict
from .features import load_precomputed, save_features
from .manifest import read_manifest
from .pipeline import (
    build_backend,
    derive_seed,
    extract_feature_matrix,
    run_pipeline,
    run_slices_stage,
    write_entropy_csv,
)
from .reduction import (
    apply_standardize,
    fit_standardize,
    pca_fit,
    pca_to_dict,
    pca_transform,
    save_params,
    scaler_to_dict,
)
from .synth import generate_dataset

logger = logging.getLogger(__name__)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, help="pipeline config JSON (defaults used if omitted)")
    sub.add_argument("--manifest", type=Path, help="dataset manifest CSV")
    sub.add_argument("--out", type=Path, help="output directory")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--force", action="store_true", help="recompute cached artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mridecomp",
        description="MRI slice selection, class decomposition, and classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled dataset")
    _add_common(p)
    p.add_argument("--subjects", type=int, default=6, help="subjects per class (default 6)")
    p.add_argument("--nz", type=int, default=30, help="axial slices per volume (default 30)")
    p.add_argument("--classes", default="CN,MCI,AD", help="comma-separated class names")

    p = sub.add_parser("slices", help="rank slices by texture entropy and cache the top ones")
    _add_common(p)

    p = sub.add_parser("features", help="extract per-slice feature vectors")
    _add_common(p)

    p = sub.add_parser("decompose", help="standardize, reduce, and cluster a feature CSV")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True, help="feature CSV to decompose")

    p = sub.add_parser("train", help="train the classifier grid on a sublabeled feature CSV")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True, help="sublabeled reduced feature CSV")
    p.add_argument("--codec", type=Path, required=True, help="codec JSON from decompose")

    p = sub.add_parser("evaluate", help="evaluate a trained model on a sublabeled feature CSV")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True, help="sublabeled reduced feature CSV")
    p.add_argument("--model", type=Path, required=True, help="model checkpoint JSON")

    p = sub.add_parser("pipeline", help="run the full pipeline end to end")
    _add_common(p)

    return parser


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
        cfg.validate()
    return cfg


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise ConfigError(f"--{name} is required for this command")


def _seed_of(args, cfg: PipelineConfig) -> int:
    return args.seed if args.seed is not None else cfg.seed


def cmd_synth(args) -> int:
    _require(args, "out")
    classes = tuple(c.strip() for c in str(args.classes).split(",") if c.strip())
    if args.subjects < 2:
        raise ConfigError(f"--subjects must be >= 2, got {args.subjects}")
    if args.nz < 4:
        raise ConfigError(f"--nz must be >= 4, got {args.nz}")
    if len(classes) < 2:
        raise ConfigError(f"need at least 2 classes, got {classes!r}")
    seed = args.seed if args.seed is not None else 0
    manifest_path, rows = generate_dataset(
        args.out, subjects_per_class=args.subjects, nz=args.nz, seed=seed, classes=classes
    )
    print(f"wrote {len(rows)} volumes and {manifest_path}")
    return 0


def cmd_slices(args) -> int:
    _require(args, "manifest", "out")
    cfg = _load_cfg(args)
    rows = read_manifest(args.manifest, allowed_labels=cfg.classes)
    args.out.mkdir(parents=True, exist_ok=True)
    stage = run_slices_stage(rows, cfg, args.out, force=args.force)
    write_entropy_csv(stage, args.out / "entropies.csv")
    n_slices = sum(len(v) for v in stage.selected.values())
    print(f"selected {n_slices} slices across {len(stage.selected)} subjects")
    if stage.errors:
        for sid, msg in sorted(stage.errors.items()):
            print(f"error: subject {sid}: {msg}", file=sys.stderr)
        return 2
    return 0


def cmd_features(args) -> int:
    _require(args, "manifest", "out")
    cfg = _load_cfg(args)
    rows = read_manifest(args.manifest, allowed_labels=cfg.classes)
    args.out.mkdir(parents=True, exist_ok=True)
    stage = run_slices_stage(rows, cfg, args.out, force=args.force)
    write_entropy_csv(stage, args.out / "entropies.csv")
    ok_rows = [r for r in rows if r.subject_id not in stage.errors]
    if ok_rows:
        backend = build_backend(cfg)
        X = extract_feature_matrix(ok_rows, stage, backend)
        save_features(X, args.out / "features.csv")
        print(f"wrote {X.n} x {X.m} feature matrix to {args.out / 'features.csv'}")
    if stage.errors:
        for sid, msg in sorted(stage.errors.items()):
            print(f"error: subject {sid}: {msg}", file=sys.stderr)
        return 2
    return 0


def cmd_decompose(args) -> int:
    _require(args, "out")
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    X = load_precomputed(args.features)
    args.out.mkdir(parents=True, exist_ok=True)

    scaler = fit_standardize(X)
    save_params(scaler_to_dict(scaler), args.out / "scaler.json")
    X_scaled = apply_standardize(X, scaler)
    pca = pca_fit(X_scaled, cfg.pca.variance_threshold)
    save_params(pca_to_dict(pca), args.out / "pca.json")
    X_red = pca_transform(X_scaled, pca)
    save_features(X_red, args.out / "reduced_features.csv")

    if cfg.decomposition.mode == "elbow":
        ds = decompose(
            X_red,
            elbow_range=(cfg.decomposition.k_min, cfg.decomposition.k_max),
            seed=seed,
            n_init=cfg.decomposition.n_init,
        )
    else:
        ds = decompose(X_red, k=cfg.decomposition.k, seed=seed, n_init=cfg.decomposition.n_init)
    codec_to_json(ds.codec, args.out / "codec.json")
    centroids_to_json(ds.centroids, args.out / "centroids.json")
    write_report_csv(ds, args.out / "decomposition_report.csv")
    names = [ds.codec.subclass_name(int(s)) for s in ds.sublabels]
    write_sublabeled_csv(X_red, names, args.out / "sublabeled_features.csv")
    write_sublabeled_csv(X, names, args.out / "sublabeled_original_features.csv")
    counts = {
        ds.codec.subclass_name(i): int((ds.sublabels == i).sum())
        for i in range(ds.codec.n_sublabels)
    }
    print(f"decomposed into {ds.codec.n_sublabels} subclasses: {counts}")
    return 0


def cmd_train(args) -> int:
    _require(args, "out")
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    codec = codec_from_json(args.codec)
    X = load_precomputed(args.features)
    y = np.asarray([codec.parse_subclass_name(label) for label in X.labels], dtype=np.int64)
    args.out.mkdir(parents=True, exist_ok=True)

    models_dir = args.out / "models"
    models_dir.mkdir(exist_ok=True)
    results = {}
    losses_record = {}
    for i, lr in enumerate(cfg.training.learning_rates):
        cell = f"lr={lr!r}"
        tcfg = TrainConfig(
            learning_rate=lr,
            epochs=cfg.training.epochs,
            batch_size=cfg.training.batch_size,
            hidden_dim=cfg.training.hidden_dim,
            beta1=cfg.training.beta1,
            beta2=cfg.training.beta2,
            eps=cfg.training.eps,
            seed=derive_seed(seed, 4, i),
        )
        result = train(X.values, y, codec, tcfg)
        results[cell] = result
        model_to_json(result.model, models_dir / f"cell-{i}.json")
        losses_record[cell] = {"train": result.epoch_losses, "validation": None}
    best = min(results, key=lambda c: (results[c].final_loss,))
    model_to_json(results[best].model, args.out / "model.json")
    with open(args.out / "losses.json", "w") as fh:
        json.dump(losses_record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained {len(results)} cells; best {best} (final loss {results[best].final_loss:.6f})")
    return 0


def cmd_evaluate(args) -> int:
    _require(args, "out")
    cfg = _load_cfg(args)
    model = model_from_json(args.model)
    X = load_precomputed(args.features)
    y = np.asarray([model.codec.parse_subclass_name(label) for label in X.labels], dtype=np.int64)
    args.out.mkdir(parents=True, exist_ok=True)

    report = evaluate(model, X.values, y, cfg.compose_mode)
    with open(args.out / "metrics.json", "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    m = report.composed_metrics
    table = render_metrics_table(
        [
            {
                "name": "composed",
                "accuracy": m["accuracy"],
                "specificity": m["macro_specificity"],
                "sensitivity": m["macro_sensitivity"],
            }
        ]
    )
    (args.out / "report.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_pipeline(args) -> int:
    _require(args, "manifest")
    cfg = _load_cfg(args)
    out = args.out if args.out else Path("runs") / f"run-{time.strftime('%Y%m%d-%H%M%S')}"
    result = run_pipeline(args.manifest, cfg, out, force=args.force)
    acc = result.report.composed_accuracy
    print(f"run directory: {result.run_dir}")
    print(f"selected cell: {result.best_cell}")
    print(f"composed test accuracy: {acc:.4f}")
    return 0


_HANDLERS = {
    "synth": cmd_synth,
    "slices": cmd_slices,
    "features": cmd_features,
    "decompose": cmd_decompose,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, ParseError, EmptyFile) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
