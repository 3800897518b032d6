"""Full-reference quality with UNIQUE and MS-UNIQUE.

Run: python3 demos/03_quality.py   (about a minute)
"""

from filterlearn import decoder, iqa, synthdata

patches = synthdata.natural_like_patches(5000, 8, rng=0)
cfg = decoder.TrainingConfig(max_iterations=100)
unique = iqa.train_unique(patches, h=iqa.UNIQUE_H, cfg=cfg, rng=0)

# MS-UNIQUE: five widths, edge filters weighted twice
ms = iqa.train_msunique(patches, cfg=cfg, rng=0)
print("MS-UNIQUE widths:", ms.h_values, " edge filters:", [int(m.sum()) for m in ms.edge_masks])

# Each test image is whitened on its own patches, so a global affine contrast
# change is invisible to both scores; blur and noise are not.
spec = synthdata.desk_texture_specs(4, seed=1)[2]
ref = synthdata.render_texture(spec, 64, 0, 1)
print("\ndistortion  level  UNIQUE  MS-UNIQUE")
for kind, levels in (("blur", (0, 1, 2, 4)), ("noise", (5, 20, 50)), ("contrast", (0.5, 1, 3))):
    for lv in levels:
        _, dist = synthdata.make_distorted_pair(ref, kind, lv, rng=0)
        print(f"{kind:10s} {lv:5}  {iqa.unique_score(ref, dist, unique):6.3f}  {iqa.msunique_score(ref, dist, ms):8.3f}")
