"""Coarse k-means partitioning with a quantized scan inside each probed partition.

Partitions are learned with plain Euclidean k-means; at query time the probe
partitions with the largest dot product between query and partition center are
scanned and their per-partition results merged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import SubspaceCovariances
from .index import QuipIndex, TopNResult, _rank_top_n, build_index, encode_database, search_top_n
from .train import Codebook, CodeMatrix, TrainConfig, train_quip
from .vecstore import DenseVectorSet, PreprocessSpec, pad_to


@dataclass(frozen=True)
class PartitionIndex:
    centers: np.ndarray  # (P, d) float64
    membership: list[np.ndarray]  # per-partition row indices into the database
    subindexes: list[QuipIndex]

    @property
    def P(self) -> int:
        return self.centers.shape[0]

    @property
    def n(self) -> int:
        return sum(len(m) for m in self.membership)


def _kmeanspp_init(data: np.ndarray, P: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding; far better local minima than uniform sampling."""
    n = data.shape[0]
    centers = np.empty((P, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for p in range(1, P):
        total = d2.sum()
        if total <= 0:
            centers[p] = data[rng.integers(n)]
            continue
        centers[p] = data[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((data - centers[p]) ** 2, axis=1))
    return centers


def train_partitioner(database: DenseVectorSet, P: int, seed: int,
                      iters: int = 25) -> tuple[np.ndarray, list[np.ndarray]]:
    """Seeded Lloyd k-means; empty clusters are repaired by splitting the largest."""
    n = database.n
    if n < P:
        raise ValueError(f"need n >= P; got n={n}, P={P}")
    data = database.data
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(data, P, rng)
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(iters):
        d2 = (np.sum(data ** 2, axis=1, keepdims=True)
              - 2.0 * data @ centers.T + np.sum(centers ** 2, axis=1))
        new_assign = np.argmin(d2, axis=1)
        for p in range(P):
            if not np.any(new_assign == p):
                big = np.argmax(np.bincount(new_assign, minlength=P))
                members = np.flatnonzero(new_assign == big)
                far = members[np.argmax(d2[members, big])]
                new_assign[far] = p
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for p in range(P):
            centers[p] = data[assign == p].mean(axis=0)
    membership = [np.flatnonzero(assign == p) for p in range(P)]
    return centers, membership


def build_hybrid(database: DenseVectorSet, P: int, cov: SubspaceCovariances,
                 cfg: TrainConfig, preprocess: PreprocessSpec, seed: int,
                 shared_codebook: Codebook | None = None,
                 shared_codes: CodeMatrix | None = None) -> PartitionIndex:
    """Partition, then quantize each partition.

    With shared_codebook, every partition is encoded against the one codebook
    (probe=P then reproduces a flat scan over those codes exactly); pass the
    flat scan's shared_codes to reuse them verbatim instead of re-encoding.
    Otherwise each partition trains its own codebook on its members using the
    global covariance.
    """
    if shared_codes is not None and shared_codebook is None:
        raise ValueError("shared_codes requires shared_codebook")
    centers, membership = train_partitioner(database, P, seed)
    subindexes = []
    for p, members in enumerate(membership):
        part = DenseVectorSet(data=database.data[members],
                              ids=database.ids[members])
        if shared_codebook is None:
            cb, codes, _ = train_quip(part, cov, cfg)
        elif shared_codes is not None:
            cb = shared_codebook
            codes = CodeMatrix(codes=shared_codes.codes[members])
        else:
            cb = shared_codebook
            codes = encode_database(part, cb, cov, cb.layout)
        subindexes.append(build_index(part, cb, codes, preprocess, cov))
    return PartitionIndex(centers=centers, membership=membership,
                          subindexes=subindexes)


def assign_query_partitions(q: np.ndarray, centers: np.ndarray,
                            probe: int) -> np.ndarray:
    """The probe partitions with the largest q . center, ties by ascending index."""
    if probe > centers.shape[0]:
        raise ValueError("probe exceeds partition count")
    dots = centers @ pad_to(np.asarray(q, dtype=np.float64), centers.shape[1])
    order = np.lexsort((np.arange(centers.shape[0]), -dots))
    return order[:probe]


def hybrid_search(pindex: PartitionIndex, q: np.ndarray, N: int,
                  probe: int) -> tuple[TopNResult, int]:
    """Merged top-N over the probed partitions, plus the candidate count scanned."""
    if pindex.P == 0:
        raise ValueError("empty index")
    if not 1 <= probe <= pindex.P:
        raise ValueError(f"probe must be in [1, {pindex.P}]")
    parts = assign_query_partitions(q, pindex.centers, probe)
    ids, scores = [], []
    scanned = 0
    for p in parts:
        sub = pindex.subindexes[p]
        scanned += sub.n
        res = search_top_n(sub, q, N)
        ids.append(res.ids)
        scores.append(res.scores)
    return _rank_top_n(np.concatenate(ids), np.concatenate(scores), N), scanned
