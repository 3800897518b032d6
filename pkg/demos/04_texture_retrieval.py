"""Hierarchical texture retrieval on the desk corpus, clean and noisy.

Run: python3 demos/04_texture_retrieval.py   (a few minutes)

Prints retrieval metrics for the full two-stage query, for color alone, and
for the raw-pixel baseline, then the noise sweep. On this corpus the color
stage does most of the work; see the README for the measured shortfall of
the structure stage.
"""

import numpy as np

from filterlearn import decoder, synthdata, texture

rng = np.random.default_rng(0)
training = [synthdata.dead_leaves_image(128, rng) for _ in range(40)]
cfg = texture.TextureTrainingConfig(color_patches=5000, p2_patches=5000,
                                    decoder=decoder.TrainingConfig(max_iterations=150))
model = texture.train_texture_model(training, cfg, rng=0)
print("hierarchy dims (h2, h3, h_final):", model.dims)

corpus = synthdata.texture_corpus(12, 3, 128, seed=0)
index = texture.build_index(corpus, model)
fmt = lambda r: "  ".join(f"{k} {v:.3f}" for k, v in r.items())
print("two-stage     ", fmt(texture.evaluate_index(index)))
print("structure only", fmt(texture.evaluate_index(index, prefilter_fraction=1.0)))
colors = texture.build_index(corpus, model, structure_fn=lambda img, m: texture.color_feature(img, m))
print("color only    ", fmt(texture.evaluate_index(colors, prefilter_fraction=1.0)))
pixels = texture.build_index(corpus, model, structure_fn=texture.pixel_feature)
print("pixel baseline", fmt(texture.evaluate_index(pixels)))

print("\nsigma   P@1    MRR    MAP")
for row in texture.robustness_sweep(corpus, model, (0, 5, 25, 50, 75, 100)):
    print(f"{row['sigma']:5}  {row['P@1']:.3f}  {row['MRR']:.3f}  {row['MAP']:.3f}")
