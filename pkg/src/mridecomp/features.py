"""Slice-to-vector feature backends and the feature CSV interchange.

Every backend is a deterministic map from a 2-D slice to a fixed-length
vector: the raw-pixel baseline (bilinear resample + flatten), an external
ONNX model with a JSON sidecar describing preprocessing, or features
precomputed elsewhere and loaded from CSV.

Feature CSV schema: header ``subject_id,label,f0..f{m-1}``, one row per
slice. Floats are written with shortest round-trip repr so export followed
by import is bit-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import minionnx
from .errors import EmptyFile, InvalidSide, ModelLoadError, ParseError, ShapeMismatch
from .nifti import Slice2D

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureMatrix:
    """n feature rows with aligned class labels and subject identities."""

    values: np.ndarray
    labels: tuple[str, ...]
    subject_ids: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        n = self.values.shape[0]
        if len(self.labels) != n or len(self.subject_ids) != n:
            raise ValueError(
                f"row count mismatch: {n} rows, {len(self.labels)} labels, "
                f"{len(self.subject_ids)} subject ids"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("feature values must be finite")
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def rows(self, index: np.ndarray) -> "FeatureMatrix":
        """Row subset (boolean mask or integer index array), order preserved."""
        idx = np.asarray(index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return FeatureMatrix(
            values=self.values[idx].copy(),
            labels=tuple(self.labels[i] for i in idx),
            subject_ids=tuple(self.subject_ids[i] for i in idx),
        )


def bilinear_resize(pixels: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Resample a 2-D grid with bilinear interpolation, half-pixel centers.

    Same-size input is returned unchanged and constants are preserved
    exactly (interpolation uses the v0 + t*(v1-v0) form).
    """
    src = np.asarray(pixels, dtype=np.float64)
    in_rows, in_cols = src.shape
    if (in_rows, in_cols) == (out_rows, out_cols):
        return src.copy()

    def axis_coords(n_out, n_in):
        coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        coords = np.clip(coords, 0.0, n_in - 1.0)
        lo = np.floor(coords).astype(np.int64)
        lo = np.minimum(lo, n_in - 2) if n_in > 1 else np.zeros_like(lo)
        frac = coords - lo
        return lo, frac

    r0, fr = axis_coords(out_rows, in_rows)
    c0, fc = axis_coords(out_cols, in_cols)
    r1 = np.minimum(r0 + 1, in_rows - 1)
    c1 = np.minimum(c0 + 1, in_cols - 1)

    top = src[np.ix_(r0, c0)]
    top = top + fc[None, :] * (src[np.ix_(r0, c1)] - top)
    bottom = src[np.ix_(r1, c0)]
    bottom = bottom + fc[None, :] * (src[np.ix_(r1, c1)] - bottom)
    return top + fr[:, None] * (bottom - top)


def extract_raw(s: Slice2D, side: int = 16) -> np.ndarray:
    """Resample a slice to side x side and flatten row-major."""
    if side < 2:
        raise InvalidSide(f"side must be >= 2, got {side}")
    return bilinear_resize(s.pixels, side, side).ravel()


class FeatureBackend:
    """Deterministic slice -> fixed-length vector contract."""

    name: str
    output_dim: int

    def extract(self, s: Slice2D) -> np.ndarray:
        raise NotImplementedError


class RawPixelBackend(FeatureBackend):
    """Baseline backend: resampled pixel intensities as the feature vector."""

    def __init__(self, side: int = 16):
        if side < 2:
            raise InvalidSide(f"side must be >= 2, got {side}")
        self.side = side
        self.name = f"raw{side}"
        self.output_dim = side * side

    def extract(self, s: Slice2D) -> np.ndarray:
        return extract_raw(s, self.side)


class OnnxBackend(FeatureBackend):
    """External neural extractor in ONNX format.

    The sidecar JSON (default: model path + ".json") declares preprocessing:
      input_shape  rank-2/3/4 shape the model expects, e.g. [1, 3, 224, 224]
      mean, std    per-channel (or scalar) normalization constants
      output_dim   optional expected feature length, checked at load
    Single-channel slices are replicated across the channel axis when the
    model wants more channels.
    """

    def __init__(self, model_path, sidecar_path=None):
        model_path = Path(model_path)
        if sidecar_path is None:
            sidecar_path = model_path.with_name(model_path.name + ".json")
        self.model = minionnx.load_model(model_path)
        try:
            with open(sidecar_path) as fh:
                sidecar = json.load(fh)
        except OSError as exc:
            raise ModelLoadError(f"cannot read sidecar {sidecar_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ModelLoadError(f"sidecar {sidecar_path} is not valid JSON: {exc}") from exc

        shape = sidecar.get("input_shape")
        declared = self.model.inputs.get(self.model.feed_names[0]) or []
        if shape is None:
            shape = [d for d in declared]
        if not shape or any(d is None or d <= 0 for d in shape):
            raise ModelLoadError(
                f"input shape undetermined (sidecar: {shape}, model: {declared})"
            )
        if len(shape) < 2 or len(shape) > 4:
            raise ModelLoadError(f"input rank {len(shape)} unsupported, need 2..4")
        self.input_shape = tuple(int(d) for d in shape)
        self.mean = np.asarray(sidecar.get("mean", 0.0), dtype=np.float64)
        self.std = np.asarray(sidecar.get("std", 1.0), dtype=np.float64)
        if np.any(self.std == 0):
            raise ModelLoadError("sidecar std must be nonzero")
        self.name = f"onnx:{model_path.name}"

        probe = run_shape_probe(self.model, self.input_shape)
        declared_dim = sidecar.get("output_dim")
        if declared_dim is not None and int(declared_dim) != probe:
            raise ShapeMismatch(
                f"model produces {probe} features, sidecar declares {declared_dim}"
            )
        self.output_dim = probe

    def _preprocess(self, s: Slice2D) -> np.ndarray:
        rows, cols = self.input_shape[-2], self.input_shape[-1]
        image = bilinear_resize(s.pixels, rows, cols)
        if len(self.input_shape) == 2:
            return (image - self.mean) / self.std
        channels = self.input_shape[-3]
        tensor = np.broadcast_to(image, (channels, rows, cols)).copy()
        mean = self.mean if self.mean.ndim == 0 else self.mean.reshape(-1, 1, 1)
        std = self.std if self.std.ndim == 0 else self.std.reshape(-1, 1, 1)
        tensor = (tensor - mean) / std
        if len(self.input_shape) == 4:
            tensor = tensor[None]
        return tensor

    def extract(self, s: Slice2D) -> np.ndarray:
        out = minionnx.run_model(self.model, self._preprocess(s))
        vector = np.asarray(out, dtype=np.float64).reshape(-1)
        if vector.size != self.output_dim:
            raise ShapeMismatch(
                f"model returned {vector.size} features, expected {self.output_dim}"
            )
        return vector


def extract_external(s: Slice2D, model_path, sidecar_path=None) -> np.ndarray:
    """One-shot external extraction; prefer OnnxBackend for repeated use."""
    return OnnxBackend(model_path, sidecar_path=sidecar_path).extract(s)


def run_shape_probe(model, input_shape) -> int:
    """Feature length obtained by pushing a zero tensor through the model."""
    out = minionnx.run_model(model, np.zeros(input_shape, dtype=np.float64))
    return int(np.asarray(out).size)


def _format_value(v: float) -> str:
    return repr(float(v))


def save_features(matrix: FeatureMatrix, path) -> None:
    """Write a FeatureMatrix in the feature CSV interchange format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "label"] + [f"f{i}" for i in range(matrix.m)])
        for i in range(matrix.n):
            writer.writerow(
                [matrix.subject_ids[i], matrix.labels[i]]
                + [_format_value(v) for v in matrix.values[i]]
            )


def load_precomputed(path) -> FeatureMatrix:
    """Load a feature CSV written by this tool or an external extractor."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        if len(header) < 3 or header[0] != "subject_id" or header[1] != "label":
            raise ParseError(f"{path}: header must start with subject_id,label,f0..")
        m = len(header) - 2
        expected = [f"f{i}" for i in range(m)]
        if header[2:] != expected:
            raise ParseError(f"{path}: feature columns must be named f0..f{m - 1}")

        subject_ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != m + 2:
                raise ParseError(
                    f"{path}: line {lineno}: expected {m + 2} fields, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise ParseError(f"{path}: line {lineno}: non-finite feature value")
            subject_ids.append(row[0])
            labels.append(row[1])
            rows.append(values)
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    return FeatureMatrix(
        values=np.asarray(rows, dtype=np.float64),
        labels=tuple(labels),
        subject_ids=tuple(subject_ids),
    )
