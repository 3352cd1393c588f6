"""Synthetic scene -> simulated gaze -> heatmaps -> Human-/Anti-Spotlight images.

Run: python3 demos/01_gaze_and_spotlight.py [out_dir]
"""
import os
import sys

import numpy as np

from gazeguide.gaze import window_heatmaps
from gazeguide.raster import write_ppm, write_rstr
from gazeguide.spotlight import Direction, SpotlightConfig, apply_spotlight, blur_fraction, keep_mask
from gazeguide.synth import GazeSimParams, make_scene, random_scene_spec, simulate_participants

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
size = 64
os.makedirs(out, exist_ok=True)
scale = size / 227                      # pixel parameters are given for 227 px images

# an animate scene (category 0) carries a face motif inside the object
scene = make_scene(random_scene_spec(0, seed=7, image_size=size), "demo")
print("face ROI covers %.1f%% of the image" % (100 * scene.rois.face_mask.mean()))

# 20 simulated viewers, 1.5 s each, 1000 Hz samples
samples = simulate_participants(scene, 20, 1500, GazeSimParams(seed=1))
heat = window_heatmaps(samples, size, size, image_id="demo", sigma=20 * scale)
print("%d samples, %d windows of 50 ms" % (len(samples), len(heat.windows)))

# where do the viewers look in the first 150 ms versus later?
yy, xx = np.mgrid[0:size, 0:size]
for k in (0, 2, 5, 15):
    w = heat.windows[k].values
    if w.any():
        cy, cx = (w * yy).sum() / w.sum(), (w * xx).sum() / w.sum()
        print("window %2d: centre of mass (%.1f, %.1f)" % (k, cx, cy))

# spotlight manipulation: HS keeps attended regions sharp, AS blurs them
for d in (Direction.HS, Direction.AS):
    cfg = SpotlightConfig(d).scaled(scale)
    img = apply_spotlight(scene.image, heat.full, cfg)
    print("%s blurs %.1f%% of the image" % (d.value, 100 * blur_fraction(keep_mask(heat.full, cfg))))
    write_ppm(f"{out}/demo_{d.value}.ppm", img)

write_ppm(f"{out}/demo.ppm", scene.image)
write_rstr(f"{out}/demo_heatmap.rstr", heat.full)
print("images written to", out)
