"""Fine-tune a small net on standard vs Anti-Spotlight images and compare
its GradCAM maps with the simulated human heatmaps.

Run: python3 demos/02_finetune_and_compare.py      (about a minute)
"""
import numpy as np

from gazeguide.harness import ExperimentConfig, prepare_study, run_cell

# default pretraining, smaller study: 24 images per category, 10 viewers
cfg = ExperimentConfig(images_per_category=24, participants=10)
study = prepare_study(cfg)
print("%d fine-tuning images, %d test images" % (sum(map(len, study.train_ids.values())), len(study.test_ids)))

for direction, ratio in (("STD", 0.0), ("HS", 1.0), ("AS", 1.0)):
    res = [run_cell(study, direction, ratio, seed) for seed in range(3)]
    acc = np.mean([r.accuracy for r in res])
    z = np.median([rec.z for r in res for rec in r.similarity])
    fdi = [row[3] for r in res for row in r.fdi if row[3] is not None]
    print("%-3s accuracy %.3f  median z %.3f  median FDI %.3f" % (direction, acc, z, np.median(fdi)))
