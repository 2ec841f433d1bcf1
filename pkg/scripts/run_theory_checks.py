#!/usr/bin/env python3
"""Estimator-quality report for a trained index on synthetic data.

Trains one index per covariance source, then prints the unbiasedness check
(mean signed error vs its standard error), the per-subspace losses, and the
concentration report (empirical failure rate vs the variance bound).

    python3 scripts/run_theory_checks.py --n 2000 --d 32 --k 4 --c 16
"""

import argparse
import json

import numpy as np

from quips.covariance import estimate_subspace_covariances, regularize
from quips.evalbench import concentration_check, unbiasedness_check
from quips.index import build_index
from quips.train import TrainConfig, train_quip
from quips.vecstore import (PreprocessSpec, generate_synthetic,
                            make_chunk_layout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--c", type=int, default=16)
    ap.add_argument("--n-queries", type=int, default=200)
    ap.add_argument("--spread", type=float, default=10.0)
    ap.add_argument("--epsilon", type=float, default=0.3)
    ap.add_argument("--a-percentile", type=float, default=70.0)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    db = generate_synthetic(args.n, args.d, args.spread, args.seed)
    qs = generate_synthetic(args.n_queries, args.d, args.spread, args.seed + 1)
    layout = make_chunk_layout(args.d, args.k)
    spec = PreprocessSpec(kind="identity", seed=0, d_padded=layout.d_padded)
    exact = qs.data @ db.data.T
    a = float(np.percentile(exact[exact > 0], args.a_percentile))

    for source, pool in (("database", db), ("example_queries", qs)):
        cov = regularize(
            estimate_subspace_covariances(pool, layout, source=source), 1e-6)
        cb, codes, _ = train_quip(db, cov,
                                  TrainConfig(K=args.k, C=args.c, seed=args.seed))
        index = build_index(db, cb, codes, spec, cov)
        print(f"== covariance source: {source}")
        bias = unbiasedness_check(index, qs, db.data, args.samples, args.seed)
        print(f"  mean signed error {bias['mean_error']:+.3e} "
              f"(SE {bias['standard_error']:.3e}, "
              f"within 3 SE: {bias['within_3se']})")
        rep = concentration_check(index, qs, db.data, a=a, epsilon=args.epsilon)
        print(json.dumps(rep.to_dict(), indent=2))
        ok = rep.empirical_failure_rate <= min(1.0, rep.variance_bound)
        print(f"  failure rate within bound: {ok}")


if __name__ == "__main__":
    main()
