"""
Segmenting a phantom slice
==========================

A synthetic chest slice with two elliptical lungs, a bright central blob and
a body disk. The fake segmenter hands back those parts in segment-everything
mode; the fake embedder scores crops by simple intensity and position
features, and the text vectors for the lung prompts are set to the lungs'
own features. The pipeline should return exactly the two lungs.
"""

import numpy as np

from lungscan.segmentation import PipelineConfig, segment_slice_detailed
from lungscan.synthetic import make_phantom, phantom_backends

ph = make_phantom(64, 96)
print("slice", ph.image.shape, "parts:", {k: m.area for k, m in ph.parts.items()})

cfg = PipelineConfig()
seg, emb = phantom_backends(ph, cfg)

# the background part (the full frame) and nothing else is over the area ceiling
res = segment_slice_detailed(ph.image, seg, emb, cfg)
print("parts", res.n_parts, "-> candidates", res.n_candidates)
for roi in res.rois:
    print(f"  {roi.target:10s} part {roi.mask_index}  cos {roi.score:.4f}  box {roi.box.as_tuple()}")

print("final mask == union of lungs:", res.mask == ph.lungs)
print("overlap with central blob:", int((res.mask.bits & ph.parts['center'].bits).sum()))

# single-target mode picks one part only
single = PipelineConfig(roi_mode="single", prompts={"lungs": ("right lung",)})
seg1, emb1 = phantom_backends(ph, PipelineConfig(prompts={"right_lung": ("right lung",)}))
one = segment_slice_detailed(ph.image, seg1, emb1, single)
print("single mode area", one.mask.area, "right lung area", ph.parts["right_lung"].area)

# a rough ascii view of the result, every fourth pixel
view = np.where(res.mask.bits[::4, ::4], "#", ".")
print("\n".join("".join(row) for row in view))
