"""Codebook learning.

Two families:
  * train_quip - per-subspace Lloyd iteration under the Mahalanobis metric given
    by a non-centered second-moment matrix (database- or query-estimated).
  * train_quip_opt - the same quadratic objective plus a hinge penalty on
    top-1 order inversions mined from a sample of example queries; alternates
    constraint mining, penalized assignment, and a centroid update that takes
    the cell-mean stationary point plus one gradient step on the hinge term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import SubspaceCovariances
from .vecstore import ChunkLayout, DenseVectorSet, pad_to


@dataclass(frozen=True)
class Codebook:
    """K x C x l centroid tensor; centroids[k][c] quantizes block k."""

    layout: ChunkLayout
    centroids: np.ndarray  # (K, C, l) float64

    @property
    def C(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class CodeMatrix:
    """One centroid index per (vector, subspace)."""

    codes: np.ndarray  # (n, K) int32

    @property
    def n(self) -> int:
        return self.codes.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    K: int = 8
    C: int = 256
    T: int = 30
    seed: int = 0
    lam: float = 0.01
    J: int = 1000
    convergence_tol: float = 1e-9

    def eta(self, t: int) -> float:
        """Gradient step size at iteration t."""
        return 1.0 / (1.0 + t)


@dataclass(frozen=True)
class ConstraintTriplet:
    """An order inversion: exact score favors pos, quantized score favors neg.

    Indices are row positions in the query / database sets they were mined from.
    """

    query_id: int
    pos_id: int
    neg_id: int


def mahalanobis_assign(blocks: np.ndarray, centroids: np.ndarray,
                       sigma: np.ndarray) -> np.ndarray:
    """argmin_c (x - U_c)^T Sigma (x - U_c) per row; ties go to the lowest c.

    The x^T Sigma x term is constant per row and dropped; Sigma U_c and
    U_c^T Sigma U_c are computed once, so assignment is O(C*l) per point.
    """
    if blocks.shape[1] != centroids.shape[1]:
        raise ValueError("block width does not match centroid width")
    su = centroids @ sigma  # (C, l)
    quad = np.einsum("cl,cl->c", su, centroids)  # U_c^T Sigma U_c
    costs = quad[None, :] - 2.0 * blocks @ su.T  # (n, C)
    return np.argmin(costs, axis=1).astype(np.int32)


def update_centroids(blocks: np.ndarray, codes: np.ndarray,
                     C: int) -> tuple[np.ndarray, list[int]]:
    """Euclidean mean per nonempty cell; empty cells reported, not filled."""
    counts = np.bincount(codes, minlength=C)
    sums = np.zeros((C, blocks.shape[1]))
    np.add.at(sums, codes, blocks)
    empty = [c for c in range(C) if counts[c] == 0]
    nz = counts > 0
    centroids = np.zeros_like(sums)
    centroids[nz] = sums[nz] / counts[nz, None]
    return centroids, empty


def _maha_sq(diff: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return np.einsum("nl,lm,nm->n", diff, sigma, diff)


def subspace_objective(blocks: np.ndarray, centroids: np.ndarray,
                       codes: np.ndarray, sigma: np.ndarray) -> float:
    """sum_x (x - u_x)^T Sigma (x - u_x) for one subspace."""
    return float(np.sum(_maha_sq(blocks - centroids[codes], sigma)))


def _init_centroids(blocks: np.ndarray, C: int, seed: int, k: int) -> np.ndarray:
    rng = np.random.default_rng([seed, k])
    idx = rng.choice(blocks.shape[0], size=C, replace=False)
    return blocks[idx].copy()


def _reseed_empty(centroids: np.ndarray, empty: list[int], blocks: np.ndarray,
                  codes: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Move each empty cell's centroid onto the member farthest from its own.

    Empty cells contribute nothing to the objective, so this is cost-neutral.
    """
    if not empty:
        return centroids
    dist = _maha_sq(blocks - centroids[codes], sigma)
    order = np.argsort(-dist, kind="stable")
    taken = 0
    for c in empty:
        centroids[c] = blocks[order[taken]]
        taken += 1
    return centroids


def _blocks_of(data: np.ndarray, layout: ChunkLayout) -> list[np.ndarray]:
    padded = pad_to(data, layout.d_padded)
    return [np.ascontiguousarray(layout.block(padded, k)) for k in range(layout.K)]


def train_quip(database: DenseVectorSet, cov: SubspaceCovariances,
               cfg: TrainConfig) -> tuple[Codebook, CodeMatrix, list[dict]]:
    """Lloyd alternation per subspace; the variant is set by cov.source."""
    layout = cov.layout
    n = database.n
    if n < cfg.C:
        raise ValueError(f"need n >= C; got n={n}, C={cfg.C}")
    blocks = _blocks_of(database.data, layout)
    cents = [_init_centroids(blocks[k], cfg.C, cfg.seed, k) for k in range(layout.K)]
    codes = np.zeros((n, layout.K), dtype=np.int32)
    trace: list[dict] = []
    prev_obj = None
    for t in range(cfg.T):
        prev_codes = codes.copy()
        for k in range(layout.K):
            codes[:, k] = mahalanobis_assign(blocks[k], cents[k], cov.matrices[k])
        obj = sum(subspace_objective(blocks[k], cents[k], codes[:, k], cov.matrices[k])
                  for k in range(layout.K))
        trace.append({"iteration": t, "phase": "assign", "objective": obj})
        for k in range(layout.K):
            new, empty = update_centroids(blocks[k], codes[:, k], cfg.C)
            cents[k] = _reseed_empty(new, empty, blocks[k], codes[:, k], cov.matrices[k])
        obj = sum(subspace_objective(blocks[k], cents[k], codes[:, k], cov.matrices[k])
                  for k in range(layout.K))
        trace.append({"iteration": t, "phase": "update", "objective": obj})
        if t > 0 and np.array_equal(codes, prev_codes):
            break
        if prev_obj is not None and prev_obj > 0:
            if (prev_obj - obj) / prev_obj < cfg.convergence_tol:
                break
        if obj == 0.0:
            break
        prev_obj = obj
    codebook = Codebook(layout=layout, centroids=np.stack(cents))
    return codebook, CodeMatrix(codes=codes), trace


# ---------------------------------------------------------------------------
# constrained variant


def _lookup_tables(query_blocks: list[np.ndarray], cents: list[np.ndarray]) -> list[np.ndarray]:
    # tables[k][j][c] = q_j^(k) . U_c^(k)
    return [qb @ c.T for qb, c in zip(query_blocks, cents)]


def _quantized_scores(tables: list[np.ndarray], codes: np.ndarray, j: int) -> np.ndarray:
    """Quantized scores of all database rows for query j."""
    out = np.zeros(codes.shape[0])
    for k in range(len(tables)):
        out += tables[k][j][codes[:, k]]
    return out


def find_violated_constraints(codebook: Codebook, codes: CodeMatrix,
                              database: DenseVectorSet, queries: DenseVectorSet,
                              layout: ChunkLayout, J: int,
                              seed: int) -> list[ConstraintTriplet]:
    """Mine up to J top-1 order inversions, one per query, in seeded query order.

    For each query, pos is the exact argmax over the database; neg is the
    database row with the highest quantized score among those that beat pos's
    quantized score.
    """
    db = pad_to(database.data, layout.d_padded)
    qd = pad_to(queries.data, layout.d_padded)
    db_blocks = _blocks_of(database.data, layout)
    q_blocks = _blocks_of(queries.data, layout)
    cents = [codebook.centroids[k] for k in range(layout.K)]
    tables = _lookup_tables(q_blocks, cents)
    exact = qd @ db.T  # (|Q|, n)
    order = np.random.default_rng([seed, 104729]).permutation(queries.n)
    out: list[ConstraintTriplet] = []
    for j in order:
        if len(out) >= J:
            break
        pos = int(np.argmax(exact[j]))
        qs = _quantized_scores(tables, codes.codes, j)
        viol = np.flatnonzero(qs > qs[pos])
        if viol.size == 0:
            continue
        neg = int(viol[np.argmax(qs[viol])])
        out.append(ConstraintTriplet(query_id=int(j), pos_id=pos, neg_id=neg))
    return out


def constrained_assign(blocks: np.ndarray, centroids: np.ndarray, sigma: np.ndarray,
                       triplets: list[ConstraintTriplet], lam: float,
                       query_block: np.ndarray) -> np.ndarray:
    """Mahalanobis assignment plus the hinge-derived per-vector penalty.

    Vectors appearing in no triplet get exactly the unpenalized assignment.
    query_block holds the mined queries' components in this subspace.
    """
    su = centroids @ sigma
    quad = np.einsum("cl,cl->c", su, centroids)
    costs = quad[None, :] - 2.0 * blocks @ su.T
    if triplets and lam != 0.0:
        penalty = np.zeros_like(costs)
        for j, trip in enumerate(triplets):
            qTu = query_block[j] @ centroids.T  # (C,)
            penalty[trip.neg_id] += lam * qTu
            penalty[trip.pos_id] -= lam * qTu
        costs = costs + penalty
    return np.argmin(costs, axis=1).astype(np.int32)


def centroid_gradient(c: int, centroids: np.ndarray, codes: np.ndarray,
                      blocks: np.ndarray, sigma: np.ndarray,
                      triplets: list[ConstraintTriplet], lam: float,
                      query_block: np.ndarray) -> np.ndarray:
    """Gradient of the penalized objective w.r.t. centroid c in one subspace:
    2 Sigma sum_{x in cell c} (U_c - x) + lam sum_j q_j (1[neg_j in c] - 1[pos_j in c]).
    """
    members = blocks[codes == c]
    grad = np.zeros(blocks.shape[1])
    if len(members):
        grad = 2.0 * (sigma @ (len(members) * centroids[c] - members.sum(axis=0)))
    for j, trip in enumerate(triplets):
        s = float(codes[trip.neg_id] == c) - float(codes[trip.pos_id] == c)
        if s != 0.0:
            grad = grad + lam * s * query_block[j]
    return grad


def penalized_objective(cents: list[np.ndarray], codes: np.ndarray,
                        db_blocks: list[np.ndarray], cov: SubspaceCovariances,
                        triplets: list[ConstraintTriplet],
                        q_blocks: list[np.ndarray], lam: float) -> float:
    """Quadratic quantization error plus the hinge penalty over mined triplets."""
    K = len(cents)
    obj = sum(subspace_objective(db_blocks[k], cents[k], codes[:, k], cov.matrices[k])
              for k in range(K))
    for trip in triplets:
        margin = 0.0
        for k in range(K):
            diff = cents[k][codes[trip.neg_id, k]] - cents[k][codes[trip.pos_id, k]]
            margin += float(q_blocks[k][trip.query_id] @ diff)
        obj += lam * max(margin, 0.0)
    return obj


def train_quip_opt(database: DenseVectorSet, example_queries: DenseVectorSet,
                   cov: SubspaceCovariances,
                   cfg: TrainConfig) -> tuple[Codebook, CodeMatrix, list[dict]]:
    """Three-step loop: mine inversions, penalized assign, mean + hinge step.

    With lam=0 or no mined constraints the numbers reduce exactly to
    train_quip's trajectory. If the combined centroid update raises the
    penalized objective, the hinge step is halved once and the result kept.
    """
    layout = cov.layout
    n = database.n
    if n < cfg.C:
        raise ValueError(f"need n >= C; got n={n}, C={cfg.C}")
    db_blocks = _blocks_of(database.data, layout)
    q_blocks_all = _blocks_of(example_queries.data, layout)
    cents = [_init_centroids(db_blocks[k], cfg.C, cfg.seed, k) for k in range(layout.K)]
    codes = np.zeros((n, layout.K), dtype=np.int32)
    # seed the code state so the first round of mining sees real assignments
    for k in range(layout.K):
        codes[:, k] = mahalanobis_assign(db_blocks[k], cents[k], cov.matrices[k])
    trace: list[dict] = []
    prev_obj = None
    for t in range(cfg.T):
        prev_codes = codes.copy()
        codebook = Codebook(layout=layout, centroids=np.stack(cents))
        triplets = find_violated_constraints(
            codebook, CodeMatrix(codes=codes), database, example_queries,
            layout, cfg.J, cfg.seed)
        # mined query components, aligned with the triplet list
        q_blocks = [np.array([q_blocks_all[k][tr.query_id] for tr in triplets])
                    if triplets else np.zeros((0, layout.l))
                    for k in range(layout.K)]
        for k in range(layout.K):
            codes[:, k] = constrained_assign(db_blocks[k], cents[k], cov.matrices[k],
                                             triplets, cfg.lam, q_blocks[k])
        before = penalized_objective(cents, codes, db_blocks, cov, triplets,
                                     q_blocks_all, cfg.lam)
        new_cents = _opt_update(cents, codes, db_blocks, cov, triplets, q_blocks,
                                cfg, cfg.eta(t))
        after = penalized_objective(new_cents, codes, db_blocks, cov, triplets,
                                    q_blocks_all, cfg.lam)
        if after > before:
            new_cents = _opt_update(cents, codes, db_blocks, cov, triplets, q_blocks,
                                    cfg, cfg.eta(t) / 2.0)
            after = penalized_objective(new_cents, codes, db_blocks, cov, triplets,
                                        q_blocks_all, cfg.lam)
        cents = new_cents
        trace.append({"iteration": t, "objective": after,
                      "n_constraints": len(triplets)})
        if t > 0 and np.array_equal(codes, prev_codes) and not triplets:
            break
        if prev_obj is not None and prev_obj > 0:
            if (prev_obj - after) / prev_obj < cfg.convergence_tol:
                break
        if after == 0.0:
            break
        prev_obj = after
    codebook = Codebook(layout=layout, centroids=np.stack(cents))
    return codebook, CodeMatrix(codes=codes), trace


def _opt_update(cents: list[np.ndarray], codes: np.ndarray,
                db_blocks: list[np.ndarray], cov: SubspaceCovariances,
                triplets: list[ConstraintTriplet], q_blocks: list[np.ndarray],
                cfg: TrainConfig, eta: float) -> list[np.ndarray]:
    """Cell means (empty cells reseeded) minus eta * hinge subgradient."""
    out = []
    for k in range(len(cents)):
        new, empty = update_centroids(db_blocks[k], codes[:, k], cfg.C)
        new = _reseed_empty(new, empty, db_blocks[k], codes[:, k], cov.matrices[k])
        if triplets and cfg.lam != 0.0:
            grad = np.zeros_like(new)
            for j, trip in enumerate(triplets):
                grad[codes[trip.neg_id, k]] += cfg.lam * q_blocks[k][j]
                grad[codes[trip.pos_id, k]] -= cfg.lam * q_blocks[k][j]
            new = new - eta * grad
        out.append(new)
    return out
