"""Reweighting an observation pattern with a dense adversarial block.

A planted 50 x 50 rank-2 matrix is revealed uniformly at rate 1/2, then an
adversary reveals every entry of the first ten rows. The reweighting step
finds edge weights whose Laplacian is spectrally close to that of the
complete bipartite graph, which pushes weight away from the dense rows.

Run:  python demos/reweighting.py     (about 20 s)
"""
import time

import numpy as np

from srmc.reweight import ReweightConfig, reweight, weights_to_W
from srmc.reweight.checks import potential_monotone, weight_contract
from srmc.semirandom import (AdversaryStrategy, adversary_add, make_ground_truth,
                             sample_uniform_observations)

gt = make_ground_truth(50, 50, 2, seed=0)
obs = sample_uniform_observations(gt, 0.5, seed=1)
obs = adversary_add(obs, gt, AdversaryStrategy("dense_rows", {"rows": list(range(10))}, 2))
mask = obs.mask
print(f"{obs.size} observed entries, {obs.adversarial.sum()} added by the adversary")
print(f"row counts: dense rows {mask[:10].sum(1).mean():.0f}, "
      f"other rows {mask[10:].sum(1).mean():.1f}")

edges = obs.edges()
cfg = ReweightConfig(beta=0.05, eps=0.05)
t = time.perf_counter()
res = reweight(edges, cfg)
print(f"\n{res.iterations} barrier steps in {time.perf_counter() - t:.1f}s")
print(f"final barriers u = {res.u:.3f}, ell = {res.ell:.3f}, ell/u = {res.ratio:.3f}")
print(f"normalized spectrum in [{res.lam_min:.3f}, {res.lam_max:.3f}]")
print("potential never increased:", potential_monotone(res.log)["pass"])

Wsp, _ = weights_to_W(edges, res.weights)
W = Wsp.toarray()
print(f"\nweight per row: dense rows {W[:10].sum(1).mean():.1f}, "
      f"other rows {W[10:].sum(1).mean():.1f} (cap n2 = 50)")
share = res.weights[obs.adversarial].sum() / res.weights.sum()
print(f"adversarial share: {obs.adversarial.mean():.2f} of entries, {share:.2f} of weight")

wc = weight_contract(W, cfg.beta, cfg.eps)
print(f"||W - J|| / sqrt(n1 n2) = {wc['dist_to_J']['lhs']:.3f}")
# most of that is overall scale (the output is divided by u); compare shapes
# at equal total weight
for name, A in (("mask", mask.astype(float)), ("reweighted", W)):
    A = A * (A.size / A.sum())
    print(f"  {name:>10} at unit mean: ||A - J|| / sqrt(n1 n2) = "
          f"{np.linalg.norm(A - 1.0, 2) / 50:.3f}")
