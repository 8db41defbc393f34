"""Writes tests/fixtures/hdbscan_sklearn.json: distance matrices and the labels
scikit-learn's HDBSCAN assigns to them (precomputed metric)."""
import json
import pathlib

import numpy as np
from sklearn.cluster import HDBSCAN
from sklearn.metrics import pairwise_distances

rng = np.random.default_rng(20240501)
cases = []


def add(points, metric, mcs, ms, single):
    d = pairwise_distances(points, metric=metric)
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    d = np.round(d, 12)
    labels = HDBSCAN(metric="precomputed", min_cluster_size=mcs, min_samples=ms,
                     allow_single_cluster=single).fit(d.copy()).labels_
    cases.append({"min_cluster_size": mcs, "min_samples": ms, "allow_single_cluster": single,
                  "dist": d.tolist(), "labels": labels.tolist()})


for c in range(20):
    n = int(rng.integers(8, 51))
    k = int(rng.integers(1, 4))
    dim = int(rng.integers(2, 6))
    centers = rng.normal(0, 4, size=(k, dim))
    pts = centers[rng.integers(0, k, size=n)] + rng.normal(0, 1, size=(n, dim))
    metric = "cosine" if c % 3 == 0 else "euclidean"
    mcs = int(rng.integers(2, max(3, n // 2 + 2)))
    ms = mcs if c % 2 == 0 else int(rng.integers(1, mcs + 1))
    add(pts, metric, mcs, ms, c % 4 != 1)

# FLAME-shaped case: 20 gradients, mcs = n/2+1, cosine distance
pts = rng.normal(0, 1, size=(20, 30)) + np.array([1.0] * 30)
add(pts, "cosine", 11, 11, True)

out = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "hdbscan_sklearn.json"
out.write_text(json.dumps(cases))
print(f"wrote {len(cases)} cases to {out}")
