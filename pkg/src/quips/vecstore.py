"""Dense vector sets: file ingestion, synthetic generation, chunking and preprocessing.

Vectors are stored row-major as float64. Chunking splits a (padded) vector
into K contiguous blocks of equal width l; an optional fixed permutation or
random Hadamard rotation is applied first to spread the norm across blocks.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class DenseVectorSet:
    """n x d real matrix with one opaque integer id per row."""

    data: np.ndarray  # (n, d) float64
    ids: np.ndarray  # (n,) int64

    def __post_init__(self):
        if self.data.ndim != 2:
            raise DataError("data must be a 2-d array")
        if len(self.ids) != self.n:
            raise DataError("ids length does not match row count")
        if len(np.unique(self.ids)) != self.n:
            raise DataError("ids are not unique")
        if not np.all(np.isfinite(self.data)):
            bad = np.argwhere(~np.isfinite(self.data))[0]
            raise DataError(f"non-finite entry at row {bad[0]}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ChunkLayout:
    """Subspace geometry: K blocks of width l over a zero-padded vector."""

    K: int
    l: int
    d_padded: int
    original_d: int

    def block(self, data: np.ndarray, k: int) -> np.ndarray:
        """View of block k (columns [k*l, (k+1)*l)) of padded row data."""
        return data[..., k * self.l : (k + 1) * self.l]


@dataclass(frozen=True)
class PreprocessSpec:
    """Fixed norm-spreading transform applied to database and queries alike."""

    kind: str  # identity | permutation | hadamard_rotation
    seed: int
    d_padded: int

    KINDS = ("identity", "permutation", "hadamard_rotation")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown preprocess kind {self.kind!r}")
        if self.kind == "hadamard_rotation" and self.d_padded & (self.d_padded - 1):
            raise ValueError("hadamard_rotation requires power-of-2 dimensionality")


def make_chunk_layout(d: int, K: int) -> ChunkLayout:
    if not 1 <= K <= d:
        raise ValueError(f"K must be in [1, d]; got K={K}, d={d}")
    l = -(-d // K)
    return ChunkLayout(K=K, l=l, d_padded=K * l, original_d=d)


def next_pow2(x: int) -> int:
    return 1 << (x - 1).bit_length()


def make_preprocess(kind: str, seed: int, layout: ChunkLayout) -> tuple[PreprocessSpec, ChunkLayout]:
    """Build a preprocess spec for a layout.

    Hadamard rotation needs a power-of-2 width, so the layout may be widened;
    the (possibly re-derived) layout is returned alongside the spec.
    """
    d_padded = layout.d_padded
    if kind == "hadamard_rotation":
        d_padded = next_pow2(d_padded)
        l = -(-d_padded // layout.K)
        layout = ChunkLayout(K=layout.K, l=l, d_padded=layout.K * l,
                             original_d=layout.original_d)
        d_padded = layout.d_padded
        if d_padded & (d_padded - 1):
            raise ValueError("K must divide a power of 2 for hadamard_rotation")
    return PreprocessSpec(kind=kind, seed=seed, d_padded=d_padded), layout


def pad_to(data: np.ndarray, d_padded: int) -> np.ndarray:
    """Zero-pad rows out to d_padded columns (no-op if already wide enough)."""
    d = data.shape[-1]
    if d == d_padded:
        return data
    if d > d_padded:
        raise DataError(f"data has {d} dims, wider than padded target {d_padded}")
    pad = [(0, 0)] * (data.ndim - 1) + [(0, d_padded - d)]
    return np.pad(data, pad)


def permutation_for(spec: PreprocessSpec) -> np.ndarray:
    return np.random.default_rng(spec.seed).permutation(spec.d_padded)


def _hadamard_signs(spec: PreprocessSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    return rng.choice([-1.0, 1.0], size=spec.d_padded)


def _fwht(rows: np.ndarray) -> np.ndarray:
    """In-place fast Walsh-Hadamard transform along the last axis."""
    d = rows.shape[-1]
    h = 1
    while h < d:
        for start in range(0, d, h * 2):
            a = rows[..., start : start + h].copy()
            b = rows[..., start + h : start + 2 * h].copy()
            rows[..., start : start + h] = a + b
            rows[..., start + h : start + 2 * h] = a - b
        h *= 2
    return rows


def apply_preprocess(vs: DenseVectorSet, spec: PreprocessSpec) -> DenseVectorSet:
    """Apply the fixed transform; inner products are preserved exactly.

    Input is zero-padded to spec.d_padded first.
    """
    data = pad_to(vs.data, spec.d_padded).astype(np.float64, copy=True)
    if spec.kind == "identity":
        pass
    elif spec.kind == "permutation":
        data = data[:, permutation_for(spec)]
    else:
        data = _fwht(data * _hadamard_signs(spec)) / np.sqrt(spec.d_padded)
    return DenseVectorSet(data=data, ids=vs.ids.copy())


def apply_preprocess_rows(rows: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """As apply_preprocess, for bare row arrays (e.g. a single query)."""
    one = rows.ndim == 1
    data = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    data = pad_to(data, spec.d_padded).copy()
    if spec.kind == "permutation":
        data = data[:, permutation_for(spec)]
    elif spec.kind == "hadamard_rotation":
        data = _fwht(data * _hadamard_signs(spec)) / np.sqrt(spec.d_padded)
    return data[0] if one else data


def balancedness(v: np.ndarray, layout: ChunkLayout) -> float:
    """Largest eta such that no block carries more than (1/K + (1-eta)) of ||v||^2."""
    v = pad_to(np.asarray(v, dtype=np.float64), layout.d_padded)
    total = float(np.dot(v, v))
    if total == 0.0:
        raise ValueError("balancedness undefined for the zero vector")
    frac = max(float(np.dot(b, b)) / total
               for b in (layout.block(v, k) for k in range(layout.K)))
    return 1.0 + 1.0 / layout.K - frac


def generate_synthetic(n: int, d: int, norm_spread: float, seed: int) -> DenseVectorSet:
    """Unit directions scaled by log-uniform norms over [1, norm_spread]."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if norm_spread < 1:
        raise ValueError("norm_spread must be >= 1")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    norms = np.exp(rng.uniform(0.0, np.log(norm_spread), size=n))
    return DenseVectorSet(data=dirs * norms[:, None], ids=np.arange(n, dtype=np.int64))


# ---------------------------------------------------------------------------
# file formats


def load_vectors(path: str, fmt: str, id_column: bool = False) -> DenseVectorSet:
    if fmt == "fvecs":
        return _load_fvecs(path)
    if fmt == "csv":
        return _load_csv(path, id_column)
    raise ValueError(f"unknown format {fmt!r}")


def _load_fvecs(path: str) -> DenseVectorSet:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise DataError(f"{path}: no vectors")
    rows = []
    off = 0
    row = 0
    while off < raw.size:
        if off + 4 > raw.size:
            raise DataError(f"{path}: truncated header at row {row}")
        d = int(raw[off : off + 4].view("<i4")[0])
        if d <= 0:
            raise DataError(f"{path}: bad dimensionality {d} at row {row}")
        end = off + 4 + 4 * d
        if end > raw.size:
            raise DataError(f"{path}: truncated vector at row {row}")
        rows.append(raw[off + 4 : end].view("<f4").astype(np.float64))
        off = end
        row += 1
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise DataError(f"{path}: inconsistent dimensionality {sorted(dims)}")
    data = np.vstack(rows)
    for i in range(len(rows)):
        if not np.all(np.isfinite(data[i])):
            raise DataError(f"{path}: non-finite entry at row {i}")
    return DenseVectorSet(data=data, ids=np.arange(len(rows), dtype=np.int64))


def save_fvecs(vs: DenseVectorSet, path: str) -> None:
    with open(path, "wb") as f:
        header = np.array([vs.d], dtype="<i4").tobytes()
        for row in vs.data:
            f.write(header)
            f.write(row.astype("<f4").tobytes())


def _load_csv(path: str, id_column: bool) -> DenseVectorSet:
    rows, ids = [], []
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise DataError(f"{path}: no vectors")
    for i, line in enumerate(lines):
        fields = line.split(",")
        try:
            if id_column:
                ids.append(int(fields[0]))
                rows.append([float(x) for x in fields[1:]])
            else:
                rows.append([float(x) for x in fields])
        except ValueError as e:
            raise DataError(f"{path}: malformed record at row {i}: {e}") from e
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        bad = next(i for i, r in enumerate(rows) if len(r) != len(rows[0]))
        raise DataError(f"{path}: row {bad} has {len(rows[bad])} fields, expected {len(rows[0])}")
    data = np.asarray(rows, dtype=np.float64)
    for i in range(len(rows)):
        if not np.all(np.isfinite(data[i])):
            raise DataError(f"{path}: non-finite entry at row {i}")
    idarr = np.asarray(ids, dtype=np.int64) if id_column else np.arange(len(rows), dtype=np.int64)
    return DenseVectorSet(data=data, ids=idarr)
