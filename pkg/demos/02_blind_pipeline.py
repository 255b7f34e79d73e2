"""
Learning to assess without the reference
========================================

The two stages of the blind pipeline on a small corpus:

1. full-reference maps label a stratified sample of pixels, and each pixel is
   described from the distorted image alone (wave-vector, colour, local
   statistics);
2. an Extra-Trees forest learns descriptor -> distortion, and is then asked
   about images whose references it has never seen.

    python3 demos/02_blind_pipeline.py [output-dir]
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from weqa import (ForestConfig, FrConfig, SamplingPolicy, build_corpus, load_image, nr_assess,
                  reference_set, sample_training_set, train_forest, weqa_assess)
from weqa.evaluation import map_compare, srocc
from weqa.maps import write_map

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)
work = Path(tempfile.mkdtemp())

refs = reference_set(8, size=96, seed=1)
manifest = build_corpus(refs, work, ("gaussian_noise",), (1, 2, 3, 4, 5), seed=1)
names = list(dict.fromkeys(e.ref_path for e in manifest.entries))
train = manifest.filter(refs=names[:6])
test = manifest.filter(refs=names[6:])
print(f"{len(train)} training pairs, {len(test)} held-out pairs")

fr_config = FrConfig(levels=3)
ts = sample_training_set(train, SamplingPolicy(per_image=600, seed=1), fr_config)
print(f"sampled {len(ts)} labelled pixels with {ts.n_features} features each")
print("distortion quartile edges:", np.round(ts.edges, 4))

model = train_forest(ts.X, ts.y, ForestConfig(n_trees=40, seed=1), ts.meta)

q_fr, q_nr = [], []
print(f"\n{'image':<36} {'FR Q':>7} {'NR Q':>7} {'map r':>6}")
for e in test.entries:
    ref = load_image(test.resolve(e.ref_path))
    dist = load_image(test.resolve(e.dist_path))
    fr = weqa_assess(ref, dist, 3)
    nr = nr_assess(dist, model, stride=1)   # only the distorted image goes in
    q_fr.append(fr.o_score)
    q_nr.append(nr.o_score)
    cmp = map_compare(nr.map, fr.map)
    print(f"{Path(e.dist_path).name:<36} {fr.o_score:7.4f} {nr.o_score:7.4f} {cmp.pearson:6.3f}")

print(f"\nSROCC(NR Q, FR Q) on held-out images: {srocc(q_nr, q_fr):.3f}")

# with six training references the ranking is only fair (the acceptance suite
# uses fifteen); the pixel maps agree much less, since a blind model cannot
# know where the particular noise sample landed
last = test.entries[-1]
write_map(nr.map, out / "nr_map.png")
write_map(fr.map, out / "fr_map.png")
print(f"maps of {Path(last.dist_path).name} written to {out}/")
