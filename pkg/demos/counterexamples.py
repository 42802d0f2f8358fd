"""Why plain weighted completion is fragile.

Two small constructions. In the first, a block weight pattern gives the
symmetric rank-one objective a local minimum far from the truth. In the
second, the top singular space of the weighted matrix W * M is orthogonal to
the true column space, so spectral initialization starts in the wrong place.

Run:  python demos/counterexamples.py
"""
import numpy as np

from srmc.completion import (Factorization, RegularizerParams, gradient,
                             hessian_matrix, recovery_error)
from srmc.semirandom import (block_representative, counterexample_rank1,
                             counterexample_rank2, max_principal_angle,
                             rank1_certificate)

# --- rank one: a spurious local minimum ------------------------------------
n, beta = 40, 0.9
gt, W, u = counterexample_rank1(n, beta)
print(f"rank-1 truth M* = 1 1^T, n = {n}")
print("weight blocks:\n", block_representative(W, (2, 2)).round(3))

params = RegularizerParams.for_ground_truth(gt, C=10)
obs = (gt.M, np.ones((n, n), bool))
F = Factorization(u)
G, _ = gradient(F, obs, W, params)
lam = np.linalg.eigvalsh(hessian_matrix(F, obs, W, params))
print(f"at u = (beta 1; -beta 1): |grad f| = {np.linalg.norm(G):.1e}, "
      f"smallest Hessian eigenvalue = {lam[0]:.1f}")
print(f"relative error of u u^T: {recovery_error(F, gt):.4f}")

# the closed-form certificate changes sign at beta^4 = 1/2
for b in (0.80, 0.84, 0.85, 0.90):
    print(f"  beta = {b:.2f}: certificate {rank1_certificate(b):+.3f}")

# --- rank two: the weighted top space misses the truth entirely -------------
gt2, W2 = counterexample_rank2(16)
A = W2 * gt2.M
print("\nrank-2 truth, block representative of W * M*:")
print(block_representative(A, (4, 4)).astype(int))
s = np.linalg.svd(A, compute_uv=False)
print("top singular values of W * M*:", s[:4].round(6))
X = np.linalg.svd(A)[0][:, :2]
print(f"largest principal angle to span(M*): {max_principal_angle(X, gt2.U):.6f} degrees")
