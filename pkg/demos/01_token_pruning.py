"""Walk through density-peaks token pruning on a small 2-D point cloud.

Three well-separated blobs of tokens are scored by local density (rho) and
distance-to-denser-token (delta). The product rho * delta is large exactly
for points that are both dense and far from any denser point, i.e. cluster
centers, so keeping the top-scored tokens keeps one representative per blob
before filling in the rest.
"""

import numpy as np

from prunepose.dpc import DpcConfig, prune

rng = np.random.default_rng(42)

centers = np.array([[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]])
tokens = np.concatenate([c + rng.normal(scale=0.6, size=(20, 2)) for c in centers])
print(f"point cloud: {tokens.shape[0]} tokens in {tokens.shape[1]}-D")

cfg = DpcConfig(k=5, tau=2.0, epsilon=10)
scores, selection = prune(tokens, cfg)

print(f"\nkeep ratio epsilon={cfg.epsilon} -> {len(selection.kept)} tokens kept")
order = np.argsort(scores.score)[::-1]
print("\nrank  idx     rho    delta    score")
for rank, i in enumerate(order[:8]):
    print(f"{rank:4d}  {i:3d}  {scores.rho[i]:6.3f}  {scores.delta[i]:6.3f}"
          f"  {scores.score[i]:7.3f}")

# the three top-scored tokens should land in three different blobs
blob_of = np.repeat(np.arange(3), 20)
top3_blobs = sorted(blob_of[order[:3]].tolist())
print(f"\nblobs represented by the top-3 scores: {top3_blobs} (expect [0, 1, 2])")

# shrinking the budget keeps a subset of what a looser budget keeps
loose = prune(tokens, DpcConfig(k=5, tau=2.0, epsilon=5))[1].kept
tight = prune(tokens, DpcConfig(k=5, tau=2.0, epsilon=15))[1].kept
print(f"epsilon=5 keeps {len(loose)}, epsilon=15 keeps {len(tight)}, "
      f"nested: {set(tight) <= set(loose)}")
