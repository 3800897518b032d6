"""Iterated ZCA whitening on natural-like patches.

Run: python3 demos/01_whitening.py
"""

import numpy as np

from filterlearn import synthdata, whitening

# 8x8x3 patches from 1/f^2 colored noise: neighbouring pixels and the three
# channels are strongly correlated, as in photographs.
p = synthdata.natural_like_patches(10000, 8, rng=0)
print("patches:", p.shape)

# Raw covariance: a few large eigenvalues, a long tail of tiny ones.
eig = np.linalg.eigvalsh(whitening.covariance(p) / (p.shape[1] - 1))
print("eigenvalue spread (max / median): %.0f" % (eig.max() / np.median(eig)))

# Each extra pass shrinks the distance to the identity covariance. epsilon is
# resolved once, relative to the raw mean eigenvalue.
for k in (1, 2, 3, 5, 10):
    u, chain = whitening.iterated_whiten(p, k)
    max_err, fro = whitening.whitening_error(u)
    print(f"k={k:2d}  max|cov - I| = {max_err:.4f}   Frobenius = {fro:.3f}")

# The chain can be replayed on new data from the same source
q = synthdata.natural_like_patches(2000, 8, rng=1)
print("held-out max error at k=10: %.3f" % whitening.whitening_error(whitening.apply_chain(chain, q))[0])
