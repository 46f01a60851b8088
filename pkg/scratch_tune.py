"""Scratch: full-scale tuning run for the acceptance synthetic config."""
import json
import sys
import time

import numpy as np

from imputerank.cli import RunConfig, run_evaluation
from imputerank.data import SyntheticSpec
from imputerank.ranking import inconsistency_score

peak = float(sys.argv[1]) if len(sys.argv) > 1 else 0.8
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 42

cards = (2, 3, 2, 3, 2, 3)


def product_component(levels):
    cols = []
    for lv, c in zip(levels, cards):
        p = np.full(c, (1.0 - peak) / (c - 1))
        p[lv] = peak
        cols.append(tuple(p))
    return tuple(cols)


spec = SyntheticSpec(
    d=6, cardinalities=cards,
    components=((0.5, product_component([0, 0, 0, 0, 0, 0])),
                (0.5, product_component([1, 2, 1, 2, 1, 2]))),
    rows=2000, seed=11,
)
cfgdoc = {
    "input": {"synthetic": spec.to_json()},
    "missing_rate": 0.3, "model": "per_pattern", "train_on": "full_pre_injection",
    "metrics": ["kl", "sym_kl", "mmd_score", "mmd_b_test", "nds"],
    "algorithms": [
        {"name": "mode_mean", "type": "mode_mean"},
        {"name": "mixture", "type": "mixture", "num_components": 5},
        {"name": "knn", "type": "knn", "k": 10},
        {"name": "mice", "type": "mice", "sweeps": 5},
        {"name": "true_sampler", "type": "true_sampler"},
    ],
    "L": 25, "beta": 0.05, "seed": seed, "output_dir": "/tmp/ir_tune",
}
t0 = time.time()
report = run_evaluation(RunConfig.from_json(cfgdoc))
dt = time.time() - t0
print(f"peak={peak} seed={seed}: {dt:.1f}s; D_M={len(report.row_ids)} J={report.num_patterns}")
for m, r in report.rankings.items():
    ranks = {a: round(v, 3) for a, v in zip(r.algorithms, r.avg_ranks)}
    best = min(r.avg_ranks)
    a5 = ranks["true_sampler"]
    print(f"{m}: {ranks} CD={r.cd:.3f} A5-gap={a5-best:+.3f}")

t0 = time.time()
inc_nds = inconsistency_score(report.algorithm_samples, "nds")
inc_bt = inconsistency_score(report.algorithm_samples, "mmd_b_test")
print(f"inconsistency: nds={inc_nds:.3f} b_test={inc_bt:.3f} ({time.time()-t0:.0f}s)")

import pickle
with open(f"/tmp/samples_p{int(peak*100)}_s{seed}.pkl", "wb") as fh:
    pickle.dump({"algorithm_samples": report.algorithm_samples,
                 "reference_samples": report.reference_samples,
                 "rankings": {m: r for m, r in report.rankings.items()}}, fh)
print("pickled")
