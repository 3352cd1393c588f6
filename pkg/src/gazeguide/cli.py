"""Command-line entry point: ``gazeguide <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every subcommand that involves randomness takes its seed from the JSON
config (``--config``) or ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import glob
import logging
import os
import sys

import numpy as np

from . import convnet, harness, stats
from .gaze import SampleTable, read_fixation_csv, window_heatmaps, write_heatmap_set
from .metrics import (DegenerateFDI, SimilarityRecord, UndefinedCorrelation, face_detection_index,
                      fisher_z, pearson, similarity_time_course, write_fdi_csv, write_similarity_csv)
from .raster import read_ppm, read_rstr
from .saliency import gradcam_batch, write_saliency
from .spotlight import Direction, RatioDatasetSpec, build_ratio_dataset, write_manifest
from .synth import derive_seed, make_scene, random_scene_spec, simulate_participants, write_scenes

log = logging.getLogger("gazeguide")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if getattr(args, "config", None) else harness.ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    return cfg


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _load_scene_images(directory):
    """(image_id -> RgbImage, image_id -> category) from a ``synth`` directory."""
    rows = _read_rows(os.path.join(directory, "scenes_manifest.csv"))
    images = {r["image"]: read_ppm(os.path.join(directory, r["image"] + ".ppm")) for r in rows}
    return images, {r["image"]: int(r["category"]) for r in rows}


def _load_labeled(directory):
    """Images and categories from either a spotlight or a synth directory."""
    if os.path.exists(os.path.join(directory, "manifest.csv")):
        rows = _read_rows(os.path.join(directory, "manifest.csv"))
        images = {r["image"]: read_ppm(os.path.join(directory, r["image"] + ".ppm")) for r in rows}
        return images, {r["image"]: int(r["category"]) for r in rows}
    return _load_scene_images(directory)


def _write_labels(path, categories):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "category"])
        for label, c in enumerate(categories):
            w.writerow([label, c])


def _read_labels(path) -> dict[int, int]:
    return {int(r["category"]): int(r["label"]) for r in _read_rows(path)}


# --- subcommands --------------------------------------------------------------

def cmd_synth(args):
    cfg = _config(args)
    params = cfg.gaze_params()
    scenes, tables = [], []
    for category in cfg.categories:
        for i in range(cfg.images_per_category):
            seed = derive_seed(cfg.seed, "scene", category, i)
            sc = make_scene(random_scene_spec(category, seed, cfg.image_size), f"c{category:02d}_{i:03d}")
            scenes.append(sc)
            tables.append(simulate_participants(sc, cfg.participants, cfg.duration_ms, params))
    write_scenes(args.out, scenes, SampleTable.concat(tables))
    print(f"wrote {len(scenes)} scenes to {args.out}")


def cmd_heatmap(args):
    samples = read_fixation_csv(args.fixations)
    sigma = args.sigma if args.sigma is not None else 20.0 * args.size / harness.REFERENCE_SIZE
    ids = samples.image_ids()
    for image_id in ids:
        hs = window_heatmaps(samples, args.size, args.size, image_id=image_id, sigma=sigma,
                             cumulative=args.cumulative)
        write_heatmap_set(args.out, hs)
    print(f"wrote heatmaps for {len(ids)} images to {args.out}")


def cmd_spotlight(args):
    cfg = _config(args)
    images, categories = _load_scene_images(args.scenes)
    heat = {i: read_rstr(os.path.join(args.heatmaps, f"{i}_full.rstr")) for i in images
            if os.path.exists(os.path.join(args.heatmaps, f"{i}_full.rstr"))}
    by_cat: dict[int, list] = {}
    for image_id in sorted(images):
        by_cat.setdefault(categories[image_id], []).append(image_id)
    direction = Direction(args.direction)
    spec = RatioDatasetSpec(args.ratio, direction, by_cat, seed=cfg.seed,
                            config=cfg.spotlight_config() if direction is not Direction.STD else None)
    dataset = build_ratio_dataset(images, heat, spec)
    write_manifest(args.out, dataset, direction, args.ratio)
    n = sum(d.manipulated for d in dataset)
    print(f"wrote {len(dataset)} images ({n} manipulated) to {args.out}")


def cmd_train(args):
    cfg = _config(args)
    os.makedirs(args.out, exist_ok=True)
    if args.base:
        base = convnet.load_model(args.base)
    else:
        log.info("no --base given: pretraining a base network")
        base = harness.pretrain_base(cfg)
        convnet.save_model(os.path.join(args.out, "base_model.gsnn"), base)
    images, categories = _load_labeled(args.data)
    cats = sorted(set(categories.values()))
    ids = sorted(images)
    x = np.stack([images[i].values for i in ids])
    y = np.array([cats.index(categories[i]) for i in ids])
    net, history = convnet.fine_tune(base, x, y, cfg.train_config(cfg.seed), len(cats))
    convnet.save_model(os.path.join(args.out, "model.gsnn"), net)
    convnet.write_history(os.path.join(args.out, "history.csv"), history)
    _write_labels(os.path.join(args.out, "labels.csv"), cats)
    print(f"best epoch {history.best_epoch}; model written to {args.out}")


def cmd_gradcam(args):
    net = convnet.load_model(args.model)
    labels_path = args.labels or os.path.join(os.path.dirname(args.model), "labels.csv")
    label_of = _read_labels(labels_path)
    images, categories = _load_scene_images(args.scenes)
    ids = [i for i in sorted(images) if categories[i] in label_of]
    if not ids:
        raise ValueError("no scene belongs to a category the model was trained on")
    x = np.stack([images[i].values for i in ids])
    y = np.array([label_of[categories[i]] for i in ids])
    for smap in gradcam_batch(net, x, y, ids):
        write_saliency(args.out, smap, preview=not args.no_preview)
    acc, _ = convnet.evaluate_accuracy(net, x, y, net.num_outputs)
    print(f"wrote {len(ids)} GradCAM maps to {args.out} (accuracy {acc:.3f})")


def _saliency_ids(directory):
    return sorted(os.path.basename(p)[:-len("_gradcam.rstr")]
                  for p in glob.glob(os.path.join(directory, "*_gradcam.rstr")))


def cmd_compare(args):
    records = []
    for image_id in _saliency_ids(args.saliency):
        smap = read_rstr(os.path.join(args.saliency, f"{image_id}_gradcam.rstr"))
        full_path = os.path.join(args.heatmaps, f"{image_id}_full.rstr")
        if not os.path.exists(full_path):
            log.warning("%s: no heatmap, skipped", image_id)
            continue
        try:
            r = pearson(read_rstr(full_path), smap)
            records.append(SimilarityRecord(image_id, args.condition, args.seed, r, fisher_z(r)))
        except UndefinedCorrelation:
            log.info("%s: undefined correlation, excluded", image_id)
        windows = []
        k = 0
        while os.path.exists(os.path.join(args.heatmaps, f"{image_id}_w{k}.rstr")):
            windows.append(read_rstr(os.path.join(args.heatmaps, f"{image_id}_w{k}.rstr")))
            k += 1
        for k, z in enumerate(similarity_time_course(windows, smap)):
            if z is not None:
                records.append(SimilarityRecord(image_id, args.condition, args.seed,
                                                float(np.tanh(z)), z, k))
    write_similarity_csv(args.out, records)
    print(f"wrote {len(records)} similarity rows to {args.out}")


def cmd_fdi(args):
    rows = []
    for image_id in _saliency_ids(args.saliency):
        roi_path = os.path.join(args.scenes, f"{image_id}_face.rstr")
        if not os.path.exists(roi_path):
            continue
        smap = read_rstr(os.path.join(args.saliency, f"{image_id}_gradcam.rstr"))
        try:
            rows.append((image_id, args.condition, args.seed,
                         face_detection_index(smap, read_rstr(roi_path), args.area_normalized), False))
        except DegenerateFDI:
            rows.append((image_id, args.condition, args.seed, None, True))
        except ValueError as exc:
            log.info("%s: %s", image_id, exc)
    write_fdi_csv(args.out, rows)
    print(f"wrote {len(rows)} FDI rows to {args.out}")


def cmd_sweep(args):
    cfg = _config(args)
    out = args.out or cfg.out_dir
    base = convnet.load_model(args.base) if args.base else None
    study = harness.prepare_study(cfg, base)
    harness.write_study(study, os.path.join(out, "study"), heatmaps=cfg.save_maps)
    points, results = harness.run_sweep(study, out)
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} cells completed; sweep.csv in {out}")
    for p in points:
        print(f"  {p.direction} {p.ratio:.1f}: accuracy {p.accuracy:.3f}  z {p.z:.3f}")
    if failed and len(failed) == len(results):
        return EXIT_NUMERIC if all("Divergence" in (r.error or "") for r in failed) else EXIT_DATA
    return EXIT_OK


def cmd_report(args):
    written = harness.report(args.results, args.out)
    for path in written.values():
        print(path)


STATS_TESTS = ("welch_t", "welch_anova", "kruskal", "ranksum", "pairwise", "dependent_corr")


def cmd_stats(args):
    if args.test == "dependent_corr":
        if args.n is None:
            raise UsageError("dependent_corr needs --n")
        results = []
        for row in _read_rows(args.input):
            res = stats.dependent_corr_test(float(row["r12"]), float(row["r13"]), float(row["r23"]), args.n)
            res.comparison = row.get("image", "")
            results.append(res)
    else:
        groups = stats.read_group_csv(args.input)
        names = list(groups)
        if args.test in ("welch_t", "ranksum"):
            if len(names) != 2:
                raise ValueError(f"{args.test} needs exactly two groups, found {len(names)}")
            fn = stats.welch_t if args.test == "welch_t" else stats.wilcoxon_ranksum
            res = fn(groups[names[0]], groups[names[1]])
            res.comparison = f"{names[0]} vs {names[1]}"
            results = [res]
        elif args.test == "pairwise":
            results = stats.pairwise(groups)
        else:
            fn = stats.welch_anova if args.test == "welch_anova" else stats.kruskal_wallis
            results = [fn([groups[n] for n in names])]
    stats.write_results_csv(args.out, results)
    for r in results:
        print(f"{r.test} {r.comparison}: statistic {r.statistic:.4g}, p {r.p:.4g}")


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gazeguide", description="Gaze-guided CNN fine-tuning experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, jobs=False):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int)
        if jobs:
            sp.add_argument("--jobs", type=int, help="worker processes (GS_JOBS overrides)")

    sp = sub.add_parser("synth", help="render scenes and simulate gaze")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("heatmap", help="fixation CSV -> windowed and full heatmaps")
    sp.add_argument("--fixations", required=True)
    sp.add_argument("--size", type=int, required=True, help="image width = height in pixels")
    sp.add_argument("--sigma", type=float, help="default: 20 px scaled to the image size")
    sp.add_argument("--cumulative", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_heatmap)

    sp = sub.add_parser("spotlight", help="build a manipulated ratio dataset")
    common(sp)
    sp.add_argument("--scenes", required=True)
    sp.add_argument("--heatmaps", required=True)
    sp.add_argument("--direction", choices=[d.value for d in Direction], required=True)
    sp.add_argument("--ratio", type=float, default=1.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_spotlight)

    sp = sub.add_parser("train", help="fine-tune a base network")
    common(sp)
    sp.add_argument("--data", required=True, help="spotlight or synth directory")
    sp.add_argument("--base", help="GSNN1 base model (pretrained if omitted)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("gradcam", help="GradCAM maps for scenes, true labels")
    sp.add_argument("--model", required=True)
    sp.add_argument("--labels", help="labels.csv (default: next to the model)")
    sp.add_argument("--scenes", required=True)
    sp.add_argument("--no-preview", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gradcam)

    for name, fn, helptext in (("compare", cmd_compare, "saliency vs heatmap similarity CSV"),
                               ("fdi", cmd_fdi, "face detection index CSV")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--saliency", required=True)
        if name == "compare":
            sp.add_argument("--heatmaps", required=True)
        else:
            sp.add_argument("--scenes", required=True, help="directory with <image>_face.rstr")
            sp.add_argument("--area-normalized", action="store_true")
        sp.add_argument("--condition", default="")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("sweep", help="full study: ratio sweep over HS/AS and seeds")
    common(sp, jobs=True)
    sp.add_argument("--base", help="reuse a GSNN1 base model instead of pretraining")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="aggregate a results directory")
    sp.add_argument("--results", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("stats", help="run a statistical test on a long-format CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--test", choices=STATS_TESTS, required=True)
    sp.add_argument("--n", type=int, help="sample size for dependent_corr")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    import jsonschema

    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (convnet.TrainingDivergence, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError, jsonschema.ValidationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
