"""Quantized index: encoding, lookup-table scoring, top-N search, persistence.

Scoring is asymmetric: database rows are represented by their per-subspace
centroid codes, the query stays exact. A query is expanded once into a K x C
table of partial dot products; scoring a row is K table reads and adds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .covariance import SubspaceCovariances
from .train import Codebook, CodeMatrix, mahalanobis_assign, _blocks_of
from .vecstore import ChunkLayout, DenseVectorSet, PreprocessSpec, apply_preprocess_rows, pad_to

MAGIC = b"QUIP"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class QuipIndex:
    codebook: Codebook  # centroids stored float32
    codes: CodeMatrix
    preprocess: PreprocessSpec
    layout: ChunkLayout
    ids: np.ndarray  # (n,) int64
    cov: SubspaceCovariances

    @property
    def n(self) -> int:
        return self.codes.n

    @property
    def bits_per_vector(self) -> int:
        return self.layout.K * int(np.ceil(np.log2(self.codebook.C)))


@dataclass(frozen=True)
class QueryLookupTable:
    values: np.ndarray  # (K, C) float64


@dataclass(frozen=True)
class TopNResult:
    """(id, score) pairs, descending score, ties by ascending id."""

    ids: np.ndarray  # (<=N,) int64
    scores: np.ndarray  # (<=N,) float64


def _rank_top_n(ids: np.ndarray, scores: np.ndarray, N: int) -> TopNResult:
    order = np.lexsort((ids, -scores))[:N]
    return TopNResult(ids=ids[order].astype(np.int64), scores=scores[order])


def build_index(database: DenseVectorSet, codebook: Codebook, codes: CodeMatrix,
                preprocess: PreprocessSpec, cov: SubspaceCovariances) -> QuipIndex:
    """Freeze trained artifacts into a searchable index.

    Centroids are cast to float32 up front so in-memory and reloaded indexes
    score bit-identically.
    """
    cb = Codebook(layout=codebook.layout,
                  centroids=codebook.centroids.astype(np.float32))
    return QuipIndex(codebook=cb, codes=codes, preprocess=preprocess,
                     layout=codebook.layout, ids=database.ids.copy(), cov=cov)


def encode_database(database: DenseVectorSet, codebook: Codebook,
                    cov: SubspaceCovariances, layout: ChunkLayout) -> CodeMatrix:
    """Assign frozen-codebook codes to (already preprocessed) vectors."""
    if layout.d_padded != codebook.layout.d_padded:
        raise ValueError("layout does not match codebook")
    blocks = _blocks_of(database.data, layout)
    codes = np.empty((database.n, layout.K), dtype=np.int32)
    for k in range(layout.K):
        codes[:, k] = mahalanobis_assign(
            blocks[k], np.asarray(codebook.centroids[k], dtype=np.float64),
            cov.matrices[k])
    return CodeMatrix(codes=codes)


def build_lookup_table(q: np.ndarray, codebook: Codebook) -> QueryLookupTable:
    """values[k][c] = <q^(k), U_c^(k)> for a preprocessed, padded query."""
    layout = codebook.layout
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != layout.d_padded:
        raise ValueError(f"query has {q.shape[-1]} dims, layout wants {layout.d_padded}")
    values = np.empty((layout.K, codebook.C))
    for k in range(layout.K):
        values[k] = layout.block(q, k) @ np.asarray(codebook.centroids[k],
                                                    dtype=np.float64).T
    return QueryLookupTable(values=values)


def approximate_inner_product(table: QueryLookupTable, code_row: np.ndarray) -> float:
    """Sum of table entries selected by code_row, in ascending subspace order."""
    K, C = table.values.shape
    total = 0.0
    for k in range(K):
        c = int(code_row[k])
        if not 0 <= c < C:
            raise ValueError(f"code {c} out of range [0, {C})")
        total += table.values[k, c]
    return total


def table_scores(table: QueryLookupTable, codes: np.ndarray) -> np.ndarray:
    """All rows' approximate scores; same accumulation order as the scalar path."""
    scores = np.zeros(codes.shape[0])
    for k in range(table.values.shape[0]):
        scores += table.values[k][codes[:, k]]
    return scores


def search_top_n(index: QuipIndex, q: np.ndarray, N: int) -> TopNResult:
    """Preprocess the raw query, build its table, exhaustively score all rows."""
    if index.n == 0:
        raise ValueError("empty index")
    if N < 1:
        raise ValueError("N must be >= 1")
    qp = apply_preprocess_rows(np.asarray(q, dtype=np.float64), index.preprocess)
    qp = pad_to(qp, index.layout.d_padded)
    table = build_lookup_table(qp, index.codebook)
    scores = table_scores(table, index.codes.codes)
    return _rank_top_n(index.ids, scores, N)


def exact_top_n(database: DenseVectorSet, q: np.ndarray, N: int) -> TopNResult:
    """Brute-force exact inner products, same ordering contract as search_top_n."""
    if database.n == 0:
        raise ValueError("empty database")
    if N < 1:
        raise ValueError("N must be >= 1")
    q = pad_to(np.asarray(q, dtype=np.float64), database.d)
    scores = database.data @ q
    return _rank_top_n(database.ids, scores, N)


# ---------------------------------------------------------------------------
# persistence: magic, u16 version, then length-prefixed little-endian sections
# (layout, preprocess, covariance, codebook f32, codes u8/u16, ids i64)


def _section(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload


def _read_section(buf: bytes, off: int) -> tuple[bytes, int]:
    (length,) = struct.unpack_from("<I", buf, off)
    off += 4
    return buf[off : off + length], off + length


def code_dtype(C: int) -> np.dtype:
    return np.dtype("<u1") if C <= 256 else np.dtype("<u2")


def index_to_bytes(index: QuipIndex) -> bytes:
    lay = index.layout
    out = [MAGIC, struct.pack("<H", FORMAT_VERSION)]
    out.append(_section(struct.pack("<IIII", lay.K, lay.l, lay.d_padded, lay.original_d)))
    kind = PreprocessSpec.KINDS.index(index.preprocess.kind)
    out.append(_section(struct.pack("<BqI", kind, index.preprocess.seed,
                                    index.preprocess.d_padded)))
    cov_payload = struct.pack("<Bd", 0 if index.cov.source == "database" else 1,
                              index.cov.ridge)
    cov_payload += index.cov.matrices.astype("<f8").tobytes()
    out.append(_section(cov_payload))
    out.append(_section(index.codebook.centroids.astype("<f4").tobytes()))
    dt = code_dtype(index.codebook.C)
    codes_payload = struct.pack("<IH", index.n, index.codebook.C)
    codes_payload += index.codes.codes.astype(dt).tobytes()
    out.append(_section(codes_payload))
    out.append(_section(index.ids.astype("<i8").tobytes()))
    return b"".join(out)


def predicted_file_size(n: int, K: int, l: int, C: int) -> int:
    """Byte count implied by the documented layout, for the size invariant."""
    header = 4 + 2
    sec = 4  # length prefix
    layout_sec = sec + 16
    preprocess_sec = sec + 13
    cov_sec = sec + 9 + K * l * l * 8
    codebook_sec = sec + K * C * l * 4
    codes_sec = sec + 6 + n * K * code_dtype(C).itemsize
    ids_sec = sec + n * 8
    return header + layout_sec + preprocess_sec + cov_sec + codebook_sec + codes_sec + ids_sec


def save_index(index: QuipIndex, path: str) -> None:
    with open(path, "wb") as f:
        f.write(index_to_bytes(index))


def load_index(path: str) -> QuipIndex:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not an index file")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    off = 6
    payload, off = _read_section(buf, off)
    K, l, d_padded, original_d = struct.unpack("<IIII", payload)
    layout = ChunkLayout(K=K, l=l, d_padded=d_padded, original_d=original_d)
    payload, off = _read_section(buf, off)
    kind, seed, pre_d = struct.unpack("<BqI", payload)
    preprocess = PreprocessSpec(kind=PreprocessSpec.KINDS[kind], seed=seed, d_padded=pre_d)
    payload, off = _read_section(buf, off)
    src, ridge = struct.unpack_from("<Bd", payload)
    mats = np.frombuffer(payload[9:], dtype="<f8").reshape(K, l, l).copy()
    cov = SubspaceCovariances(layout=layout, matrices=mats,
                              source="database" if src == 0 else "example_queries",
                              ridge=ridge)
    payload, off = _read_section(buf, off)
    cents = np.frombuffer(payload, dtype="<f4").reshape(K, -1, l).copy()
    codebook = Codebook(layout=layout, centroids=cents)
    payload, off = _read_section(buf, off)
    n, C = struct.unpack_from("<IH", payload)
    codes = np.frombuffer(payload[6:], dtype=code_dtype(C)).reshape(n, K)
    codes = codes.astype(np.int32)
    payload, off = _read_section(buf, off)
    ids = np.frombuffer(payload, dtype="<i8").astype(np.int64)
    return QuipIndex(codebook=codebook, codes=CodeMatrix(codes=codes),
                     preprocess=preprocess, layout=layout, ids=ids, cov=cov)
