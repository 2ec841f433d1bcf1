"""Benchmark harness: ground truth, precision-recall curves, fixed-bit and
fixed-time method grids, and the estimator-quality checks (unbiasedness,
per-subspace losses, concentration bound)."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import lsh
from .covariance import estimate_subspace_covariances, regularize
from .index import (QuipIndex, build_index, build_lookup_table, exact_top_n,
                    search_top_n, table_scores)
from .train import TrainConfig, train_quip, train_quip_opt
from .vecstore import (DenseVectorSet, apply_preprocess, make_chunk_layout,
                       make_preprocess, pad_to)

QUIP_METHODS = ("quip-cov-x", "quip-cov-q", "quip-opt")
LSH_METHODS = ("simple-lsh", "signed-alsh", "l2-alsh")


@dataclass
class ExperimentConfig:
    n: int = 10000
    d: int = 64
    spread: float = 10.0
    n_queries: int = 1000
    example_query_fraction: float = 0.5
    methods: tuple = QUIP_METHODS + ("simple-lsh",)
    bits: tuple = (64,)
    C: int = 256
    topN: int = 10
    iters: int = 10
    lam: float = 0.01
    J: int = 1000
    fixed_time_multiplier: int = 3
    seed: int = 0
    data_path: str | None = None
    query_path: str | None = None
    data_format: str = "fvecs"
    preprocess: str = "permutation"
    ridge: float = 1e-6

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path) as f:
            raw = json.load(f)
        cfg = cls()
        for key, val in raw.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, tuple(val) if isinstance(val, list) else val)
        return cfg


@dataclass(frozen=True)
class PRCurve:
    """Averaged precision/recall per candidate-list prefix length."""

    lengths: np.ndarray  # (M,) int
    precision: np.ndarray
    recall: np.ndarray

    def precision_at_recall(self, target: float) -> float:
        """Precision at the first prefix reaching the target recall."""
        idx = np.flatnonzero(self.recall >= target)
        if idx.size == 0:
            return 0.0
        return float(self.precision[idx[0]])


@dataclass(frozen=True)
class TheoryCheckReport:
    a: float
    epsilon: float
    empirical_failure_rate: float
    variance_bound: float
    subspace_losses: np.ndarray
    q_max: float
    delta: float
    ball_center: np.ndarray
    ball_radius: float

    def to_dict(self) -> dict:
        return {
            "a": self.a, "epsilon": self.epsilon,
            "empirical_failure_rate": self.empirical_failure_rate,
            "variance_bound": self.variance_bound,
            "subspace_losses": [float(x) for x in self.subspace_losses],
            "q_max": self.q_max, "delta": self.delta,
            "ball_radius": self.ball_radius,
        }


def ground_truth(database: DenseVectorSet, queries: DenseVectorSet, topN: int,
                 cache_dir: str | None = None) -> np.ndarray:
    """Exact top-N ids per query, optionally cached keyed by content hash."""
    if database.n == 0 or queries.n == 0:
        raise ValueError("empty input")
    key = None
    if cache_dir is not None:
        h = hashlib.sha256()
        h.update(database.data.tobytes())
        h.update(queries.data.tobytes())
        h.update(str(topN).encode())
        key = os.path.join(cache_dir, f"gt_{h.hexdigest()[:24]}.npy")
        if os.path.exists(key):
            return np.load(key)
    out = np.empty((queries.n, min(topN, database.n)), dtype=np.int64)
    for j in range(queries.n):
        out[j] = exact_top_n(database, queries.data[j], topN).ids
    if key is not None:
        os.makedirs(cache_dir, exist_ok=True)
        np.save(key, out)
    return out


def precision_recall(ranked: np.ndarray, truth: np.ndarray, topN: int) -> PRCurve:
    """Prefix-sweep curve averaged over queries.

    ranked: (|Q|, M) candidate ids in rank order; truth: (|Q|, topN) exact ids.
    """
    if truth.size == 0:
        raise ValueError("empty truth sets")
    nq, M = ranked.shape
    hits = np.zeros((nq, M))
    for j in range(nq):
        hits[j] = np.isin(ranked[j], truth[j])
    cum = np.cumsum(hits, axis=1)
    lengths = np.arange(1, M + 1)
    precision = (cum / lengths).mean(axis=0)
    recall = (cum / truth.shape[1]).mean(axis=0)
    return PRCurve(lengths=lengths, precision=precision, recall=recall)


# ---------------------------------------------------------------------------
# method pipelines


def _load_or_synth(cfg: ExperimentConfig) -> tuple[DenseVectorSet, DenseVectorSet]:
    from .vecstore import generate_synthetic, load_vectors
    if cfg.data_path:
        db = load_vectors(cfg.data_path, cfg.data_format)
        qs = load_vectors(cfg.query_path, cfg.data_format)
    else:
        db = generate_synthetic(cfg.n, cfg.d, cfg.spread, cfg.seed)
        qs = generate_synthetic(cfg.n_queries, cfg.d, cfg.spread, cfg.seed + 1)
    return db, qs


def split_queries(queries: DenseVectorSet, fraction: float,
                  seed: int) -> tuple[DenseVectorSet, DenseVectorSet]:
    """Disjoint (example, evaluation) query split."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(queries.n)
    cut = int(round(queries.n * fraction))
    ex, ev = perm[:cut], perm[cut:]
    return (DenseVectorSet(data=queries.data[ex], ids=queries.ids[ex]),
            DenseVectorSet(data=queries.data[ev], ids=queries.ids[ev]))


def build_quip_pipeline(method: str, database: DenseVectorSet,
                        example_queries: DenseVectorSet, K: int, C: int,
                        cfg: ExperimentConfig) -> QuipIndex:
    """Train one QUIP variant end to end and freeze it into an index."""
    layout = make_chunk_layout(database.d, K)
    spec, layout = make_preprocess(cfg.preprocess, cfg.seed, layout)
    dbp = apply_preprocess(database, spec)
    qsp = apply_preprocess(example_queries, spec)
    if method == "quip-cov-x":
        cov = estimate_subspace_covariances(dbp, layout, source="database")
    else:
        cov = estimate_subspace_covariances(qsp, layout, source="example_queries")
    cov = regularize(cov, cfg.ridge)
    tc = TrainConfig(K=K, C=C, T=cfg.iters, seed=cfg.seed, lam=cfg.lam, J=cfg.J)
    if method == "quip-opt":
        cb, codes, _ = train_quip_opt(dbp, qsp, cov, tc)
    else:
        cb, codes, _ = train_quip(dbp, cov, tc)
    return build_index(dbp, cb, codes, spec, cov)


def quip_rankings(index: QuipIndex, queries: DenseVectorSet) -> np.ndarray:
    """Full descending-score id ranking per query."""
    out = np.empty((queries.n, index.n), dtype=np.int64)
    for j in range(queries.n):
        out[j] = search_top_n(index, queries.data[j], index.n).ids
    return out


def lsh_rankings(method: str, database: DenseVectorSet, queries: DenseVectorSet,
                 b_bits: int, seed: int, params: lsh.AlshParams | None = None) -> np.ndarray:
    params = params or lsh.AlshParams(b_bits=b_bits, seed=seed)
    max_norm = float(np.max(np.linalg.norm(database.data, axis=1)))
    scheme = method.replace("-", "_")
    out = np.empty((queries.n, database.n), dtype=np.int64)
    if method == "l2-alsh":
        db_aug = lsh.augment_set(database.data, "l2_alsh", "database", params, max_norm)
        q_aug = lsh.augment_set(queries.data, "l2_alsh", "query", params, max_norm)
        n_hashes = max(b_bits // 8, 1)  # one byte of budget per integer hash
        db_buckets = lsh.l2_encode(db_aug, n_hashes, params.r_lsh, seed)
        q_buckets = lsh.l2_encode(q_aug, n_hashes, params.r_lsh, seed)
        for j in range(queries.n):
            out[j] = lsh.bucket_match_search(db_buckets, q_buckets[j],
                                             database.ids, database.n).ids
        return out
    db_aug = lsh.augment_set(database.data, scheme, "database", params, max_norm)
    q_aug = lsh.augment_set(queries.data, scheme, "query", params, max_norm)
    codes = lsh.srp_encode(db_aug, b_bits, seed, ids=database.ids, scheme=scheme)
    qcodes = lsh.srp_encode(q_aug, b_bits, seed, scheme=scheme)
    for j in range(queries.n):
        qc = lsh.BinaryCodeSet(packed=qcodes.packed[j : j + 1], b_bits=b_bits,
                               scheme=scheme, ids=np.zeros(1, dtype=np.int64))
        out[j] = lsh.hamming_search(codes, qc, database.n).ids
    return out


def _method_curve(method: str, bits: int, db: DenseVectorSet,
                  ex_q: DenseVectorSet, ev_q: DenseVectorSet,
                  truth: np.ndarray, cfg: ExperimentConfig) -> tuple[PRCurve, float]:
    t0 = time.perf_counter()
    if method in QUIP_METHODS:
        code_bits = int(np.log2(cfg.C))
        if bits % code_bits:
            raise ValueError(f"bit budget {bits} not divisible by {code_bits} (C={cfg.C})")
        K = bits // code_bits
        index = build_quip_pipeline(method, db, ex_q, K, cfg.C, cfg)
        ranked = quip_rankings(index, ev_q)
    elif method in LSH_METHODS:
        ranked = lsh_rankings(method, db, ev_q, bits, cfg.seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    per_query_ms = (time.perf_counter() - t0) * 1000.0 / ev_q.n
    return precision_recall(ranked, truth, cfg.topN), per_query_ms


def run_fixed_bit(cfg: ExperimentConfig, lsh_multiplier: int = 1) -> dict:
    """Evaluate every configured method at every bit budget on one dataset.

    LSH methods get lsh_multiplier x the bits (the fixed-time surrogate).
    """
    db, qs = _load_or_synth(cfg)
    ex_q, ev_q = split_queries(qs, cfg.example_query_fraction, cfg.seed + 17)
    truth = ground_truth(db, ev_q, cfg.topN)
    report: dict = {"config": {"n": db.n, "d": db.d, "topN": cfg.topN,
                               "lsh_multiplier": lsh_multiplier},
                    "curves": {}}
    for bits in cfg.bits:
        for method in cfg.methods:
            eff_bits = bits * lsh_multiplier if method in LSH_METHODS else bits
            curve, ms = _method_curve(method, eff_bits, db, ex_q, ev_q, truth, cfg)
            report["curves"][f"{method}@{bits}"] = {
                "method": method, "bits": int(eff_bits), "budget": int(bits),
                "per_query_ms": ms, "curve": curve,
            }
    return report


def run_fixed_time(cfg: ExperimentConfig) -> dict:
    return run_fixed_bit(cfg, lsh_multiplier=cfg.fixed_time_multiplier)


def write_report(report: dict, csv_path: str, json_path: str) -> None:
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "bits", "budget", "prefix", "recall", "precision"])
        for entry in report["curves"].values():
            curve = entry["curve"]
            for i in range(len(curve.lengths)):
                w.writerow([entry["method"], entry["bits"], entry["budget"],
                            int(curve.lengths[i]), f"{curve.recall[i]:.6f}",
                            f"{curve.precision[i]:.6f}"])
    summary = {"config": report["config"], "methods": {}}
    for key, entry in report["curves"].items():
        summary["methods"][key] = {
            "bits": entry["bits"], "per_query_ms": entry["per_query_ms"],
            "precision_at_recall_0.5": entry["curve"].precision_at_recall(0.5),
        }
    with open(json_path, "w") as f:
        json.dump(summary, f, indent=2)


# ---------------------------------------------------------------------------
# estimator-quality checks


def _pair_errors(index: QuipIndex, queries: DenseVectorSet,
                 db_data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(exact, approx) score matrices over all (query, row) pairs.

    db_data must be the preprocessed database rows backing the index.
    """
    qp = pad_to(queries.data, index.layout.d_padded)
    exact = qp @ pad_to(db_data, index.layout.d_padded).T
    approx = np.empty_like(exact)
    for j in range(queries.n):
        table = build_lookup_table(qp[j], index.codebook)
        approx[j] = table_scores(table, index.codes.codes)
    return exact, approx


def unbiasedness_check(index: QuipIndex, queries: DenseVectorSet,
                       db_data: np.ndarray, samples: int,
                       seed: int = 0) -> dict:
    """Mean signed error over sampled (q, x) pairs, with its standard error."""
    exact, approx = _pair_errors(index, queries, db_data)
    err = (exact - approx).ravel()
    rng = np.random.default_rng(seed)
    picked = err[rng.integers(0, err.size, size=samples)]
    mean = float(picked.mean())
    se = float(picked.std(ddof=1) / np.sqrt(samples))
    return {"mean_error": mean, "standard_error": se,
            "within_3se": abs(mean) <= 3.0 * se}


def subspace_losses(index: QuipIndex, queries: DenseVectorSet,
                    db_data: np.ndarray) -> np.ndarray:
    """Per-subspace expected squared inner-product quantization error."""
    layout = index.layout
    qp = pad_to(queries.data, layout.d_padded)
    dbp = pad_to(db_data, layout.d_padded)
    cents = np.asarray(index.codebook.centroids, dtype=np.float64)
    out = np.empty(layout.K)
    for k in range(layout.K):
        resid = layout.block(dbp, k) - cents[k][index.codes.codes[:, k]]
        z = layout.block(qp, k) @ resid.T  # (|Q|, n)
        out[k] = float(np.mean(np.sum(z ** 2, axis=1)))
    return out


def enclosing_ball(data: np.ndarray) -> tuple[np.ndarray, float]:
    """Greedy 2-approximation: center at the first point, radius = max distance."""
    center = data[0]
    radius = float(np.max(np.linalg.norm(data - center, axis=1)))
    return center, radius


def concentration_check(index: QuipIndex, queries: DenseVectorSet,
                        db_data: np.ndarray, a: float,
                        epsilon: float) -> TheoryCheckReport:
    """Empirical rate of large-dot-product pairs whose approximation misses the
    relative-epsilon band, against the variance-based upper bound."""
    if a <= 0 or epsilon <= 0:
        raise ValueError("a and epsilon must be positive")
    layout = index.layout
    exact, approx = _pair_errors(index, queries, db_data)
    big = exact > a
    lo, hi = exact * (1.0 - epsilon), exact * (1.0 + epsilon)
    fails = big & ((approx < lo) | (approx > hi))
    rate = float(fails.sum()) / exact.size
    losses = subspace_losses(index, queries, db_data)
    n = index.n
    bound = (layout.K ** 3) * float(losses.max()) / (n * a * a * epsilon * epsilon)
    qp = pad_to(queries.data, layout.d_padded)
    q_max = max(float(np.max(np.linalg.norm(layout.block(qp, k), axis=1)))
                for k in range(layout.K))
    dbp = pad_to(db_data, layout.d_padded)
    cents = np.asarray(index.codebook.centroids, dtype=np.float64)
    delta = max(float(np.max(np.linalg.norm(
        layout.block(dbp, k) - cents[k][index.codes.codes[:, k]], axis=1)))
        for k in range(layout.K))
    center, radius = enclosing_ball(db_data)
    return TheoryCheckReport(a=a, epsilon=epsilon, empirical_failure_rate=rate,
                             variance_bound=bound, subspace_losses=losses,
                             q_max=q_max, delta=delta, ball_center=center,
                             ball_radius=radius)
