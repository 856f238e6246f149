"""End-to-end pipeline: manifest -> slices -> features -> split -> scaler/PCA
-> class decomposition -> training grid -> evaluation, with every artifact
written into the run directory as plain CSV/JSON.

Leakage policy: the scaler, PCA, and per-class clustering are fit on
gradient-training subjects only. Validation subjects (used for epoch
curves) and test subjects receive sublabels by nearest class-consistent
centroid. Hyperparameter cells are ranked by final training loss.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import TrainConfig, TrainResult, model_to_json, train
from .config import PipelineConfig, save_config
from .decomposition import (
    DecomposedDataset,
    assign_sublabels,
    centroids_to_json,
    codec_to_json,
    decompose,
    write_report_csv,
    write_sublabeled_csv,
)
from .entropy import EntropyConfig, RankedSlice, rank_slices, select_top_k
from .errors import PipelineError, StageError
from .evaluation import EvalReport, evaluate, render_metrics_table, report_to_dict, subject_split
from .features import (
    FeatureBackend,
    FeatureMatrix,
    OnnxBackend,
    RawPixelBackend,
    save_features,
)
from .manifest import ManifestRow, read_manifest, write_manifest
from .nifti import Slice2D, extract_axial_slices, read_nifti
from .reduction import (
    apply_standardize,
    fit_standardize,
    pca_fit,
    pca_to_dict,
    pca_transform,
    save_params,
    scaler_to_dict,
)

logger = logging.getLogger(__name__)


def derive_seed(base: int, *tags: int) -> int:
    """Stable named sub-seed so independent stages never share streams."""
    return int(np.random.SeedSequence([base, *tags]).generate_state(1, np.uint64)[0])


# tags for derive_seed; recorded in seeds.json
_TAG_SPLIT = 1
_TAG_VALIDATION = 2
_TAG_DECOMPOSE = 3
_TAG_TRAIN = 4


@dataclass
class SliceStage:
    selected: dict[str, list[Slice2D]]
    ranked_all: dict[str, list[RankedSlice]]
    errors: dict[str, str]


def _cache_path(cache_dir: Path, subject_id: str) -> Path:
    return cache_dir / f"{subject_id}.npz"


def _select_for_subject(row: ManifestRow, ecfg: EntropyConfig, top_k: int):
    volume = read_nifti(row.path, subject_id=row.subject_id)
    slices = extract_axial_slices(volume)
    ranked = rank_slices(slices, ecfg)
    k = min(top_k, len(ranked))
    if k < top_k:
        logger.warning(
            "subject %s has only %d slices, below top_k=%d", row.subject_id, len(ranked), top_k
        )
    chosen = select_top_k(ranked, k)
    chosen_idx = {r.slice_index for r in chosen}
    selected = sorted(
        (s for s in slices if s.slice_index in chosen_idx), key=lambda s: s.slice_index
    )
    return selected, ranked


def run_slices_stage(
    rows: list[ManifestRow],
    cfg: PipelineConfig,
    out_dir: Path,
    force: bool = False,
) -> SliceStage:
    """Rank and cache informative slices per subject; errors are isolated."""
    ecfg = EntropyConfig(
        levels=cfg.slice_selection.levels,
        offset=cfg.slice_selection.offset,
        symmetric=cfg.slice_selection.symmetric,
    )
    top_k = cfg.slice_selection.top_k
    cache_dir = out_dir / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)

    selected: dict[str, list[Slice2D]] = {}
    ranked_all: dict[str, list[RankedSlice]] = {}
    errors: dict[str, str] = {}
    for row in rows:
        cache_file = _cache_path(cache_dir, row.subject_id)
        try:
            if cache_file.exists() and not force:
                with np.load(cache_file) as npz:
                    pixels = npz["pixels"]
                    indices = npz["indices"]
                    all_indices = npz["all_indices"]
                    all_entropies = npz["all_entropies"]
                selected[row.subject_id] = [
                    Slice2D(subject_id=row.subject_id, slice_index=int(i), pixels=p)
                    for i, p in zip(indices, pixels)
                ]
                ranked_all[row.subject_id] = [
                    RankedSlice(subject_id=row.subject_id, slice_index=int(i), entropy=float(h))
                    for i, h in zip(all_indices, all_entropies)
                ]
                continue
            chosen, ranked = _select_for_subject(row, ecfg, top_k)
            selected[row.subject_id] = chosen
            ranked_all[row.subject_id] = ranked
            np.savez(
                cache_file,
                pixels=np.stack([s.pixels for s in chosen]),
                indices=np.asarray([s.slice_index for s in chosen], dtype=np.int64),
                all_indices=np.asarray([r.slice_index for r in ranked], dtype=np.int64),
                all_entropies=np.asarray([r.entropy for r in ranked], dtype=np.float64),
            )
        except (PipelineError, OSError) as exc:
            logger.error("subject %s failed: %s", row.subject_id, exc)
            errors[row.subject_id] = str(exc)
    return SliceStage(selected=selected, ranked_all=ranked_all, errors=errors)


def write_entropy_csv(stage: SliceStage, path: Path) -> None:
    """Per-slice entropy table: subject_id,slice_index,entropy,selected."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "slice_index", "entropy", "selected"])
        for subject_id in sorted(stage.ranked_all):
            chosen = {s.slice_index for s in stage.selected[subject_id]}
            by_index = sorted(stage.ranked_all[subject_id], key=lambda r: r.slice_index)
            for r in by_index:
                writer.writerow(
                    [subject_id, r.slice_index, repr(r.entropy), int(r.slice_index in chosen)]
                )


def build_backend(cfg: PipelineConfig) -> FeatureBackend:
    if cfg.features.backend == "raw":
        return RawPixelBackend(side=cfg.features.side)
    return OnnxBackend(cfg.features.model_path, cfg.features.sidecar_path)


def extract_feature_matrix(
    rows: list[ManifestRow], stage: SliceStage, backend: FeatureBackend
) -> FeatureMatrix:
    values = []
    labels = []
    subject_ids = []
    for row in rows:
        for s in stage.selected[row.subject_id]:
            values.append(backend.extract(s))
            labels.append(row.label)
            subject_ids.append(row.subject_id)
    return FeatureMatrix(
        values=np.asarray(values, dtype=np.float64),
        labels=tuple(labels),
        subject_ids=tuple(subject_ids),
    )


def _subject_mask(X: FeatureMatrix, subjects: set[str]) -> np.ndarray:
    return np.asarray([sid in subjects for sid in X.subject_ids], dtype=bool)


@dataclass
class RunResult:
    run_dir: Path
    report: EvalReport
    best_cell: str
    cell_results: dict[str, TrainResult]


def run_pipeline(
    manifest_path,
    cfg: PipelineConfig,
    run_dir,
    force: bool = False,
) -> RunResult:
    """Execute every stage, wrapping failures as StageError(stage, cause).

    Partial outputs are retained in the run directory for debugging.
    """
    started = time.time()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")

    seeds = {
        "base": cfg.seed,
        "split": derive_seed(cfg.seed, _TAG_SPLIT),
        "validation_split": derive_seed(cfg.seed, _TAG_VALIDATION),
        "decompose": derive_seed(cfg.seed, _TAG_DECOMPOSE),
        "train_cells": {},
    }

    @contextmanager
    def stage(name):
        logger.info("stage %s", name)
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    with stage("manifest"):
        rows = read_manifest(manifest_path, allowed_labels=cfg.classes)
        write_manifest(rows, run_dir / "manifest.csv")

    with stage("slices"):
        slice_stage = run_slices_stage(rows, cfg, run_dir, force=force)
        write_entropy_csv(slice_stage, run_dir / "entropies.csv")
        if slice_stage.errors:
            failed = ", ".join(sorted(slice_stage.errors))
            raise ValueError(f"subjects failed slice selection: {failed}")

    with stage("features"):
        backend = build_backend(cfg)
        X = extract_feature_matrix(rows, slice_stage, backend)
        save_features(X, run_dir / "features.csv")

    with stage("split"):
        subject_labels = {row.subject_id: row.label for row in rows}
        train_subjects, test_subjects = subject_split(
            subject_labels, cfg.split.train_frac, seed=seeds["split"]
        )
        val_frac = cfg.training.validation_fraction
        if val_frac > 0.0 and len(train_subjects) >= 2:
            grad_subjects, val_subjects = subject_split(
                {sid: subject_labels[sid] for sid in train_subjects},
                1.0 - val_frac,
                seed=seeds["validation_split"],
            )
        else:
            if val_frac > 0.0:
                logger.warning("too few training subjects for a validation split")
            grad_subjects, val_subjects = list(train_subjects), []
        split_record = {
            "train": train_subjects,
            "gradient_train": grad_subjects,
            "validation": val_subjects,
            "test": test_subjects,
        }
        with open(run_dir / "split.json", "w") as fh:
            json.dump(split_record, fh, indent=2, sort_keys=True)
            fh.write("\n")
        grad_mask = _subject_mask(X, set(grad_subjects))
        val_mask = _subject_mask(X, set(val_subjects))
        test_mask = _subject_mask(X, set(test_subjects))

    with stage("standardize_reduce"):
        X_grad = X.rows(np.flatnonzero(grad_mask))
        scaler = fit_standardize(X_grad)
        save_params(scaler_to_dict(scaler), run_dir / "scaler.json")
        X_scaled = apply_standardize(X, scaler)
        pca = pca_fit(X_scaled.rows(np.flatnonzero(grad_mask)), cfg.pca.variance_threshold)
        save_params(pca_to_dict(pca), run_dir / "pca.json")
        X_red = pca_transform(X_scaled, pca)
        save_features(X_red, run_dir / "reduced_features.csv")
        R_grad = X_red.rows(np.flatnonzero(grad_mask))
        R_val = X_red.rows(np.flatnonzero(val_mask))
        R_test = X_red.rows(np.flatnonzero(test_mask))

    with stage("decompose"):
        if cfg.decomposition.mode == "elbow":
            ds: DecomposedDataset = decompose(
                R_grad,
                elbow_range=(cfg.decomposition.k_min, cfg.decomposition.k_max),
                seed=seeds["decompose"],
                n_init=cfg.decomposition.n_init,
            )
        else:
            ds = decompose(
                R_grad,
                k=cfg.decomposition.k,
                seed=seeds["decompose"],
                n_init=cfg.decomposition.n_init,
            )
        codec_to_json(ds.codec, run_dir / "codec.json")
        centroids_to_json(ds.centroids, run_dir / "centroids.json")
        write_report_csv(ds, run_dir / "decomposition_report.csv")
        train_names = [ds.codec.subclass_name(int(s)) for s in ds.sublabels]
        write_sublabeled_csv(R_grad, train_names, run_dir / "sublabeled_train.csv")
        y_val = (
            assign_sublabels(R_val, ds.codec, ds.centroids) if R_val.n > 0 else np.empty(0, int)
        )
        y_test = assign_sublabels(R_test, ds.codec, ds.centroids) if R_test.n > 0 else None
        if y_test is not None:
            test_names = [ds.codec.subclass_name(int(s)) for s in y_test]
            write_sublabeled_csv(R_test, test_names, run_dir / "sublabeled_test.csv")

    with stage("train"):
        models_dir = run_dir / "models"
        models_dir.mkdir(exist_ok=True)
        cell_results: dict[str, TrainResult] = {}
        losses_record = {}
        for i, lr in enumerate(cfg.training.learning_rates):
            cell = f"lr={lr!r}"
            cell_seed = derive_seed(cfg.seed, _TAG_TRAIN, i)
            seeds["train_cells"][cell] = cell_seed
            tcfg = TrainConfig(
                learning_rate=lr,
                epochs=cfg.training.epochs,
                batch_size=cfg.training.batch_size,
                hidden_dim=cfg.training.hidden_dim,
                beta1=cfg.training.beta1,
                beta2=cfg.training.beta2,
                eps=cfg.training.eps,
                seed=cell_seed,
            )
            result = train(
                R_grad.values,
                ds.sublabels,
                ds.codec,
                tcfg,
                X_val=R_val.values if R_val.n > 0 else None,
                y_val=y_val if R_val.n > 0 else None,
            )
            cell_results[cell] = result
            model_to_json(result.model, models_dir / f"cell-{i}.json")
            losses_record[cell] = {
                "train": result.epoch_losses,
                "validation": result.val_losses,
            }
        with open(run_dir / "losses.json", "w") as fh:
            json.dump(losses_record, fh, indent=2, sort_keys=True)
            fh.write("\n")
        best_cell = min(cell_results, key=lambda c: (cell_results[c].final_loss,))
        with open(run_dir / "seeds.json", "w") as fh:
            json.dump(seeds, fh, indent=2, sort_keys=True)
            fh.write("\n")

    with stage("evaluate"):
        if R_test.n == 0 or y_test is None:
            raise ValueError("test set is empty after the subject split")
        cell_reports: dict[str, EvalReport] = {}
        for cell, result in cell_results.items():
            cell_reports[cell] = evaluate(result.model, R_test.values, y_test, cfg.compose_mode)
        report = cell_reports[best_cell]

        metrics = {
            "selected_cell": best_cell,
            "selection_rule": "lowest final training loss",
            "cells": {
                cell: {
                    "final_train_loss": cell_results[cell].final_loss,
                    "test": report_to_dict(cell_reports[cell]),
                }
                for cell in cell_results
            },
        }
        with open(run_dir / "metrics.json", "w") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")

        table_rows = []
        for cell in cell_results:
            m = cell_reports[cell].composed_metrics
            table_rows.append(
                {
                    "name": cell + (" *" if cell == best_cell else ""),
                    "accuracy": m["accuracy"],
                    "specificity": m["macro_specificity"],
                    "sensitivity": m["macro_sensitivity"],
                }
            )
        lines = [
            "Composed-class test metrics per hyperparameter cell",
            "(* = selected by lowest final training loss)",
            "",
            render_metrics_table(table_rows),
            "",
            f"Selected cell: {best_cell}",
            f"Test subjects: {len(test_subjects)}; test slices: {R_test.n}",
            "",
            "Composed confusion matrix (rows true, columns predicted):",
            "  classes: " + ", ".join(report.classes),
        ]
        for row in report.composed_confusion.tolist():
            lines.append("  " + " ".join(f"{v:5d}" for v in row))
        lines.append("")
        lines.append("Subclass confusion matrix (rows true, columns predicted):")
        lines.append("  subclasses: " + ", ".join(report.subclass_names))
        for row in report.sub_confusion.tolist():
            lines.append("  " + " ".join(f"{v:5d}" for v in row))
        (run_dir / "report.txt").write_text("\n".join(lines) + "\n")

    run_info = {
        "package_version": __version__,
        "started_unix": started,
        "elapsed_seconds": time.time() - started,
        "n_subjects": len(rows),
        "n_slices": X.n,
        "reduced_dim": R_grad.m,
    }
    with open(run_dir / "run_info.json", "w") as fh:
        json.dump(run_info, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return RunResult(
        run_dir=run_dir, report=report, best_cell=best_cell, cell_results=cell_results
    )
