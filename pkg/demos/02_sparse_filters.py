"""Training a sparse linear decoder and looking at what it learns.

Run: python3 demos/02_sparse_filters.py
"""

import numpy as np

from filterlearn import decoder, iqa, synthdata, whitening

patches = synthdata.natural_like_patches(5000, 8, rng=0)
cfg = decoder.TrainingConfig(max_iterations=150)

# Compare filters trained on raw (k=0) and whitened (k=1) patches. "DC share"
# is the fraction of filter energy in the per-channel means; "edge filters"
# uses the MS-UNIQUE sharpness rule.
for k in (0, 1):
    u, _ = whitening.iterated_whiten(patches, k)
    fs = decoder.train(u, 100, cfg, rng=0)
    prov = fs.provenance
    rho_hat = decoder.sparsity_stats(fs, u)
    edges = iqa.edge_mask(fs).mean()
    w = fs.w1.reshape(3, 64, -1)
    dc = (64 * (w.mean(axis=1) ** 2).sum(axis=0) / (w ** 2).sum(axis=(0, 1))).mean()
    print(f"k={k}: J {prov['initial_objective']:.1f} -> {prov['final_objective']:.1f} "
          f"in {prov['iterations']} iterations, mean activation {rho_hat.mean():.3f}, "
          f"DC share {dc:.2f}, edge filters {edges:.0%}")

# Reconstruction of a held-out whitened patch
u, chain = whitening.iterated_whiten(patches, 1)
fs = decoder.train(u, 100, cfg, rng=0)
x = whitening.apply_chain(chain, synthdata.natural_like_patches(1, 8, rng=5))
err = np.linalg.norm(decoder.reconstruct(fs, decoder.forward(fs, x)) - x) / np.linalg.norm(x)
print("relative reconstruction error on a new patch: %.2f" % err)
