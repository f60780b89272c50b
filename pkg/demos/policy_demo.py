"""Sequential sampling without replacement and its empirical law."""

import itertools

import numpy as np

from rlbd.model import make_rng
from rlbd.policy import sample_without_replacement

probs = np.array([0.1, 0.2, 0.3, 0.4])
rng = make_rng(0)
n = 50_000
counts = {}
for _ in range(n):
    key = sample_without_replacement(probs, 2, rng).indices
    counts[key] = counts.get(key, 0) + 1
print("pair   empirical  p(a) p(b)/(1-p(a))")
for a, b in itertools.permutations(range(4), 2):
    exact = probs[a] * probs[b] / (1 - probs[a])
    print(f"({a},{b})  {counts.get((a, b), 0) / n:.4f}     {exact:.4f}")
