"""Similarity between gradient vectors and confidence-weighted aggregation.

Confidence between two clients is 1 minus a standardized dynamic time
warping distance over their flattened gradient sequences. The standardization
pipeline is: stride-downsample, z-normalize, banded DTW, divide by the summed
lengths, then squash d/(1+d) into [0,1). Identical gradients give confidence
exactly 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InputError, ShapeError

MAX_SEQUENCE_LEN = 2048


@dataclass(frozen=True)
class DtwOptions:
    band_width: int | None = None  # Sakoe-Chiba band; None = unbanded
    stride: int = 1

    def __post_init__(self):
        if self.band_width is not None and self.band_width < 1:
            raise InputError("band_width must be >= 1")
        if self.stride < 1:
            raise InputError("stride must be >= 1")


@dataclass(frozen=True)
class ConfidenceRecord:
    round: int
    values: dict[int, float]  # sender id -> confidence
    mean: float


def default_dtw_options(n_params: int) -> DtwOptions:
    """Stride so sequences stay <= 2048 long, band 10% of the strided length."""
    stride = max(1, math.ceil(n_params / MAX_SEQUENCE_LEN))
    strided = math.ceil(n_params / stride)
    return DtwOptions(band_width=max(1, round(0.1 * strided)), stride=stride)


@numba.njit(cache=True)
def _dtw_kernel(a, b, band):  # pragma: no cover - exercised through dtw()
    n, m = a.shape[0], b.shape[0]
    inf = np.inf
    prev = np.full(m + 1, inf)
    cur = np.full(m + 1, inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[:] = inf
        lo, hi = 1, m
        if band >= 0:
            lo = max(1, i - band)
            hi = min(m, i + band)
        for j in range(lo, hi + 1):
            cost = abs(a[i - 1] - b[j - 1])
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = cost + best
        prev, cur = cur, prev
    return prev[m]


def dtw(a, b, opts: DtwOptions | None = None) -> float:
    """Classic DTW distance with |.| local cost and optional Sakoe-Chiba band."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InputError("dtw requires non-empty sequences")
    band = -1
    if opts is not None and opts.band_width is not None:
        band = opts.band_width
        if abs(a.size - b.size) > band:
            raise InputError(
                f"band {band} cannot align lengths {a.size} and {b.size}")
    return float(_dtw_kernel(a, b, band))


def _z_normalize(x: np.ndarray) -> np.ndarray:
    std = x.std()
    if std == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / std


def dtw_std(g_i: np.ndarray, g_j: np.ndarray, opts: DtwOptions | None = None) -> float:
    """Standardized DTW in [0, 1); 0 exactly for identical sequences."""
    g_i = np.asarray(g_i, dtype=np.float64)
    g_j = np.asarray(g_j, dtype=np.float64)
    if g_i.shape != g_j.shape:
        raise ShapeError(f"gradient lengths differ: {g_i.shape} vs {g_j.shape}")
    opts = opts or DtwOptions()
    za = _z_normalize(g_i[:: opts.stride])
    zb = _z_normalize(g_j[:: opts.stride])
    if np.array_equal(za, zb):
        return 0.0
    d = dtw(za, zb, opts)
    d_norm = d / (za.size + zb.size)
    return d_norm / (1.0 + d_norm)


def confidence(g_i: np.ndarray, g_j: np.ndarray, opts: DtwOptions | None = None) -> float:
    """1 - dtw_std; symmetric, in (0, 1], and exactly 1 on identical input."""
    return 1.0 - dtw_std(g_i, g_j, opts)


def cosine_confidence(g_i: np.ndarray, g_j: np.ndarray) -> float:
    """Ablation baseline: (1 + cos angle) / 2, same range and self-value 1."""
    g_i = np.asarray(g_i, dtype=np.float64)
    g_j = np.asarray(g_j, dtype=np.float64)
    if g_i.shape != g_j.shape:
        raise ShapeError("gradient lengths differ")
    if np.array_equal(g_i, g_j):
        return 1.0
    na, nb = np.linalg.norm(g_i), np.linalg.norm(g_j)
    if na == 0.0 or nb == 0.0:
        return 0.5
    cos = float(np.clip(g_i @ g_j / (na * nb), -1.0, 1.0))
    return (1.0 + cos) / 2.0


def mean_confidence(values: dict[int, float]) -> float:
    """Arithmetic mean over received senders (self excluded by construction)."""
    if not values:
        raise InputError("mean_confidence of an empty record")
    return sum(values.values()) / len(values)


def filter_senders(record: ConfidenceRecord) -> set[int]:
    """Senders at or above the round mean; never empty for a non-empty record."""
    return {s for s, c in record.values.items() if c >= record.mean}


def aggregate(g_local: np.ndarray, samples: dict[int, tuple[np.ndarray, float]]
              ) -> np.ndarray:
    """Confidence-weighted mean of the local gradient (weight 1) and the
    filtered received gradients, each rescaled to the local L2 norm first.

    Computed as g_local + sum_j w_j (rescaled_j - g_local) / (1 + sum_j w_j)
    so that identical inputs return g_local bitwise. Senders are reduced in
    sorted id order for schedule independence.
    """
    if not samples:
        return g_local
    local_norm = float(np.linalg.norm(g_local))
    correction = np.zeros_like(g_local)
    total = 1.0
    for sender in sorted(samples):
        g_j, conf = samples[sender]
        if g_j.shape != g_local.shape:
            raise ShapeError(f"sender {sender}: gradient length mismatch")
        norm_j = float(np.linalg.norm(g_j))
        rescaled = g_j * (local_norm / norm_j) if norm_j > 0.0 else g_j
        correction += conf * (rescaled - g_local)
        total += conf
    return g_local + correction / total
