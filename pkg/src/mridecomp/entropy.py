"""Grey-level co-occurrence entropy and informative-slice ranking.

A slice's texture information content is measured as the Shannon entropy
(base 2) of its normalized grey-level co-occurrence matrix; subjects' slices
are ranked by that score and the top K kept. Defaults follow the canonical
texture setup: 8 grey levels, offset (0, 1), symmetric, normalized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGlcm, EmptyInput, InvalidK, NotNormalized, ZeroOffset
from .nifti import QuantizedSlice, Slice2D, quantize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EntropyConfig:
    """Quantization and co-occurrence settings for slice scoring."""

    levels: int = 8
    offset: tuple[int, int] = (0, 1)
    symmetric: bool = True


@dataclass(frozen=True)
class GlcmMatrix:
    levels: int
    probabilities: np.ndarray
    normalized: bool


@dataclass(frozen=True)
class RankedSlice:
    subject_id: str
    slice_index: int
    entropy: float


def glcm(
    q: QuantizedSlice,
    offset: tuple[int, int] = (0, 1),
    symmetric: bool = True,
    normalize: bool = True,
) -> GlcmMatrix:
    """Count grey-level pairs appearing at the given (drow, dcol) offset.

    Cell (i, j) counts in-bounds positions p with q[p] == i and
    q[p + offset] == j. Symmetric mode adds the transpose; normalize
    divides by the total pair count.
    """
    dr, dc = offset
    if (dr, dc) == (0, 0):
        raise ZeroOffset("co-occurrence offset must not be (0, 0)")
    idx = q.indices
    nrows, ncols = idx.shape
    r0, r1 = max(0, -dr), nrows - max(0, dr)
    c0, c1 = max(0, -dc), ncols - max(0, dc)
    if r0 >= r1 or c0 >= c1:
        raise EmptyGlcm(f"no pixel pair fits offset {offset} in a {idx.shape} slice")

    left = idx[r0:r1, c0:c1].ravel()
    right = idx[r0 + dr : r1 + dr, c0 + dc : c1 + dc].ravel()
    levels = q.levels
    counts = np.bincount(left * levels + right, minlength=levels * levels)
    matrix = counts.reshape(levels, levels).astype(np.float64)
    if symmetric:
        matrix = matrix + matrix.T
    if normalize:
        matrix = matrix / matrix.sum()
    matrix.setflags(write=False)
    return GlcmMatrix(levels=levels, probabilities=matrix, normalized=normalize)


def glcm_entropy(g: GlcmMatrix) -> float:
    """Shannon entropy in bits of a normalized co-occurrence matrix.

    H = -sum_ij P[i][j] * log2 P[i][j], with 0 * log 0 taken as 0.
    """
    p = g.probabilities
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise NotNormalized(f"matrix sums to {total!r}, expected 1")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def slice_entropy(s: Slice2D, cfg: EntropyConfig = EntropyConfig()) -> float:
    """Quantize a slice and score it by co-occurrence entropy.

    Slices too small to contain any pair at the configured offset score 0.
    """
    q = quantize(s, cfg.levels)
    try:
        g = glcm(q, offset=cfg.offset, symmetric=cfg.symmetric, normalize=True)
    except EmptyGlcm:
        logger.warning(
            "slice %s/%d has no co-occurring pairs at offset %s; scoring 0",
            s.subject_id, s.slice_index, cfg.offset,
        )
        return 0.0
    return glcm_entropy(g)


def histogram_entropy(s: Slice2D, cfg: EntropyConfig = EntropyConfig()) -> float:
    """Alternative scorer: entropy of the quantized intensity histogram."""
    q = quantize(s, cfg.levels)
    counts = np.bincount(q.indices.ravel(), minlength=cfg.levels).astype(np.float64)
    p = counts / counts.sum()
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def rank_slices(slices, cfg: EntropyConfig = EntropyConfig(), scorer=None) -> list[RankedSlice]:
    """Score a single subject's slices and sort them by descending entropy.

    Ties break toward the lower slice index so rankings are reproducible.
    `scorer(slice, cfg) -> float` may replace the co-occurrence scorer.
    """
    if not slices:
        raise EmptyInput("no slices to rank")
    subjects = {s.subject_id for s in slices}
    if len(subjects) != 1:
        raise ValueError(f"rank_slices expects a single subject, got {sorted(subjects)}")
    score = scorer if scorer is not None else slice_entropy
    ranked = [RankedSlice(s.subject_id, s.slice_index, score(s, cfg)) for s in slices]
    return sorted(ranked, key=lambda r: (-r.entropy, r.slice_index))


def select_top_k(ranked: list[RankedSlice], k: int = 20) -> list[RankedSlice]:
    """Keep the first min(k, len) entries of an already-ranked list."""
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    return list(ranked[:k])
