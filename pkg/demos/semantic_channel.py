"""Walk corpus -> co-occurrence counts -> shifted PPMI on a small barbell graph.

    python demos/semantic_channel.py
"""

import numpy as np

from mlsgnn.graph import SparseGraph
from mlsgnn.semantic import WalkConfig, build_frequency, compute_ppmi, sample_walks

np.set_printoptions(precision=3, suppress=True, linewidth=120)

# two triangles joined by one bridge edge (2, 3)
g = SparseGraph.from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)])
cfg = WalkConfig(gamma=50, path_len=3, seed=7)
paths = sample_walks(g, cfg)
print(f"{len(paths)} walks of length {paths.shape[1]}, first few:")
print(paths[:5])

freq = build_frequency(paths, cfg.effective_window, g.n)
print("\nco-occurrence counts F")
print(freq.toarray())

for shift in (1.0, 2.0):
    ppmi = compute_ppmi(freq, shift)
    print(f"\nPPMI, shift {shift:g}")
    print(ppmi.P.toarray())
# larger shifts keep only pairs that co-occur well above chance; the bridge drops out
print("\nnormalized semantic graph")
print(compute_ppmi(freq, 2.0).P_norm.toarray())
