"""From a noisy score matrix to a labelling.

A network emits an unconstrained positive N x N matrix.  Sinkhorn
iterations turn it into a doubly-stochastic matrix (DSM), and the Hungarian
method picks the closest permutation.  Here the "network output" is a true
permutation plus noise.
"""

import numpy as np

from markerperm import Permutation, decode, dsm_residual, label_matrix
from markerperm.sinkhorn import SinkhornConfig, sinkhorn_forward
from markerperm.trajlabel import confidences, normalize_confidence

rng = np.random.default_rng(0)
n = 6
truth = Permutation.random(n, rng)
print("true labels of markers 0..5:", truth.mapping.tolist())

# scores: high where marker j has label truth[j], noisy elsewhere
scores = np.clip(label_matrix(truth) * 0.6 + rng.uniform(0.02, 0.5, (n, n)), 0.01, 0.99)

trace = []
dsm, _ = sinkhorn_forward(scores, SinkhornConfig(iterations=5), trace=trace)
print("\nresidual after each Sinkhorn pair:")
for k, r in enumerate(trace, 1):
    print(f"  {k}: {r:.3e}")
print(f"row sums    {np.round(dsm.sum(1), 6)}")
print(f"column sums {np.round(dsm.sum(0), 6)}")
# rows are exact after the final row step; columns converge geometrically
big, _ = sinkhorn_forward(rng.uniform(0.01, 0.99, (41, 41)))
print(f"41 x 41 random matrix, residual after 5 pairs: {dsm_residual(big):.1e}")

result = decode(dsm)
print("\ndecoded labels:", result.permutation.mapping.tolist(),
      "(cost %.4f)" % result.total_cost)
print("matches truth:", result.permutation == truth)

conf = normalize_confidence(np.clip(confidences(dsm, result.permutation.mapping), -1, 1))
print("per-marker confidence:", np.round(conf, 3).tolist())
