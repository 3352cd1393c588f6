"""Experiment orchestration: condition runs, ratio sweeps and report tables.

A :class:`Study` bundles everything that is shared by all cells of the
(direction x ratio x seed) grid: rendered scenes, simulated gaze heatmaps,
the fixed train/test halving and the pretrained base network.  Each cell is
a deterministic function of the study and its own seed, and writes only
under ``<out>/<direction>/<ratio>/<seed>/``.
"""

from __future__ import annotations

import csv
import glob
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import convnet
from .convnet import TrainConfig, default_network, evaluate_accuracy, fine_tune, train_network
from .gaze import HeatmapSet, window_heatmaps, write_heatmap_set
from .metrics import (DegenerateFDI, SimilarityRecord, UndefinedCorrelation, bootstrap_ci,
                      face_detection_index, fisher_z, pearson, similarity_time_course,
                      write_fdi_csv, write_similarity_csv)
from .saliency import gradcam_batch, write_saliency
from .spotlight import Direction, RatioDatasetSpec, SpotlightConfig, build_ratio_dataset
from .stats import spearman
from .synth import (GazeSimParams, Scene, derive_seed, make_scene, random_scene_spec,
                    simulate_participants, PRETRAIN_BASE)

__all__ = [
    "ExperimentConfig",
    "Study",
    "CellResult",
    "SweepPoint",
    "CONFIG_SCHEMA",
    "load_config",
    "prepare_study",
    "pretrain_base",
    "run_cell",
    "run_condition",
    "run_sweep",
    "report",
    "condition_name",
    "cell_dir",
]

log = logging.getLogger(__name__)

REFERENCE_SIZE = 227
DEFAULT_RATIOS = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass
class ExperimentConfig:
    seed: int = 0
    image_size: int = 32
    categories: tuple = (0, 1, 2, 6, 7, 8)
    images_per_category: int = 40
    participants: int = 20
    duration_ms: int = 1500
    gaze: dict = field(default_factory=dict)
    pretrain_categories: int = 12
    pretrain_images_per_category: int = 50
    pretrain_epochs: int = 40
    pretrain_lr: float = 0.01
    directions: tuple = ("HS", "AS")
    ratios: tuple = DEFAULT_RATIOS
    seeds: int = 10
    train: dict = field(default_factory=dict)
    out_dir: str = "results"
    save_maps: bool = False
    jobs: int = 1

    @property
    def pixel_scale(self) -> float:
        return self.image_size / REFERENCE_SIZE

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(**{**self.train, "seed": int(seed)})

    def gaze_params(self) -> GazeSimParams:
        return GazeSimParams(**{**self.gaze, "seed": derive_seed(self.seed, "gaze")})

    def spotlight_config(self) -> SpotlightConfig:
        return SpotlightConfig().scaled(self.pixel_scale)

    @property
    def heatmap_sigma(self) -> float:
        return 20.0 * self.pixel_scale


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "image_size": {"type": "integer", "minimum": 16},
        "categories": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 11},
                       "minItems": 2, "uniqueItems": True},
        "images_per_category": {"type": "integer", "minimum": 4},
        "participants": {"type": "integer", "minimum": 1},
        "duration_ms": {"type": "integer", "minimum": 0},
        "gaze": {"type": "object"},
        "pretrain_categories": {"type": "integer", "minimum": 2},
        "pretrain_images_per_category": {"type": "integer", "minimum": 4},
        "pretrain_epochs": {"type": "integer", "minimum": 1},
        "pretrain_lr": {"type": "number", "exclusiveMinimum": 0},
        "directions": {"type": "array", "items": {"enum": ["HS", "AS", "STD"]}},
        "ratios": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "seeds": {"type": "integer", "minimum": 1},
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "batch_size": {"type": "integer", "minimum": 1},
                "base_lr": {"type": "number", "exclusiveMinimum": 0},
                "momentum": {"type": "number", "minimum": 0, "maximum": 1},
                "max_epochs": {"type": "integer", "minimum": 1},
                "patience": {"type": "integer", "minimum": 1},
                "val_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "min_delta": {"type": "number", "minimum": 0},
                "head_lr_factor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "out_dir": {"type": "string"},
        "save_maps": {"type": "boolean"},
        "jobs": {"type": "integer", "minimum": 1},
    },
}


def load_config(source) -> ExperimentConfig:
    """Build a config from a JSON path or dict, validated against the schema."""
    import jsonschema

    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    jsonschema.validate(data, CONFIG_SCHEMA)
    for key in ("categories", "directions", "ratios"):
        if key in data:
            data[key] = tuple(data[key])
    return ExperimentConfig(**data)


def condition_name(direction, ratio: float) -> str:
    direction = Direction(direction)
    if direction is Direction.STD:
        return "STD"
    return f"{direction.value}-{int(round(ratio * 100))}"


def cell_dir(out_dir, direction, ratio: float, seed: int) -> str:
    return os.path.join(out_dir, Direction(direction).value, f"{ratio:.2f}", str(seed))


# --- study preparation --------------------------------------------------------

@dataclass
class Study:
    config: ExperimentConfig
    scenes: dict            # image_id -> Scene
    heatmaps: dict          # image_id -> HeatmapSet
    train_ids: dict         # label -> [image_id]
    test_ids: list
    label_of: dict          # image_id -> label index 0..C-1
    base_net: convnet.Network

    @property
    def num_categories(self) -> int:
        return len(self.config.categories)

    def check_disjoint(self):
        train = {i for ids in self.train_ids.values() for i in ids}
        overlap = train & set(self.test_ids)
        if overlap:
            raise RuntimeError(f"test images leak into the fine-tuning set: {sorted(overlap)[:5]}")


def _round_f32(net):
    # parameters are stored as float32 on disk; keep the in-memory copy identical
    for layer in net.layers:
        layer.params = {k: v.astype(np.float32).astype(np.float64) for k, v in layer.params.items()}
    return net


def pretrain_base(config: ExperimentConfig) -> convnet.Network:
    """Train the stand-in 'pretrained' network on a disjoint category set."""
    n_cat = config.pretrain_categories
    xs, ys = [], []
    for c in range(n_cat):
        for i in range(config.pretrain_images_per_category):
            seed = derive_seed(config.seed, "pretrain", c, i)
            sc = make_scene(random_scene_spec(PRETRAIN_BASE + c, seed, config.image_size))
            xs.append(sc.image.values)
            ys.append(c)
    x = np.stack(xs)
    y = np.array(ys)
    net = default_network(n_cat, (3, config.image_size, config.image_size),
                          seed=derive_seed(config.seed, "base-init"))
    cfg = TrainConfig(batch_size=32, base_lr=config.pretrain_lr, max_epochs=config.pretrain_epochs,
                      patience=config.pretrain_epochs, head_lr_factor=1.0,
                      seed=derive_seed(config.seed, "pretrain-train"))
    hist = train_network(net, x, y, cfg)
    log.info("pretraining: best epoch %d, val acc %.3f", hist.best_epoch,
             hist.rows[hist.best_epoch - 1][3] if hist.rows else float("nan"))
    return _round_f32(net)


def prepare_study(config: ExperimentConfig, base_net: convnet.Network | None = None) -> Study:
    scenes: dict[str, Scene] = {}
    label_of: dict[str, int] = {}
    train_ids: dict[int, list] = {}
    test_ids: list[str] = []
    gaze_params = config.gaze_params()
    heatmaps: dict[str, HeatmapSet] = {}
    for label, category in enumerate(config.categories):
        ids = []
        for i in range(config.images_per_category):
            seed = derive_seed(config.seed, "scene", category, i)
            image_id = f"c{category:02d}_{i:03d}"
            sc = make_scene(random_scene_spec(category, seed, config.image_size), image_id)
            scenes[image_id] = sc
            label_of[image_id] = label
            ids.append(image_id)
            samples = simulate_participants(sc, config.participants, config.duration_ms, gaze_params)
            heatmaps[image_id] = window_heatmaps(samples, config.image_size, config.image_size,
                                                 image_id=image_id, sigma=config.heatmap_sigma)
        rng = np.random.default_rng(derive_seed(config.seed, "split", category))
        order = [ids[j] for j in rng.permutation(len(ids))]
        half = len(ids) // 2
        train_ids[label] = sorted(order[:half])
        test_ids.extend(sorted(order[half:]))
    if base_net is None:
        base_net = pretrain_base(config)
    study = Study(config, scenes, heatmaps, train_ids, test_ids, label_of, base_net)
    study.check_disjoint()
    return study


def write_study(study: Study, out_dir: str, heatmaps: bool = True) -> None:
    """Study-level manifest (and optionally the heatmap rasters)."""
    os.makedirs(out_dir, exist_ok=True)
    train = {i for ids in study.train_ids.values() for i in ids}
    with open(os.path.join(out_dir, "images.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "category", "label", "animate", "face_present", "split"])
        for image_id, sc in study.scenes.items():
            w.writerow([image_id, sc.label, study.label_of[image_id], int(sc.animate),
                        int(sc.rois.face_present), "train" if image_id in train else "test"])
    convnet.save_model(os.path.join(out_dir, "base_model.gsnn"), study.base_net)
    if heatmaps:
        hdir = os.path.join(out_dir, "heatmaps")
        for hs in study.heatmaps.values():
            write_heatmap_set(hdir, hs)


# --- cells --------------------------------------------------------------------

@dataclass
class CellResult:
    direction: str
    ratio: float
    seed: int
    condition: str
    accuracy: float = float("nan")
    confusion: np.ndarray | None = None
    similarity: list = field(default_factory=list)      # full-duration SimilarityRecords
    time_course: list = field(default_factory=list)     # per-window SimilarityRecords
    fdi: list = field(default_factory=list)             # (image, condition, seed, fdi, censored)
    excluded: list = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def mean_z(self) -> float:
        zs = [r.z for r in self.similarity]
        return float(np.mean(zs)) if zs else float("nan")


def _stack(study: Study, ids):
    return np.stack([study.scenes[i].image.values for i in ids])


def run_cell(study: Study, direction, ratio: float, seed: int, out_dir: str | None = None) -> CellResult:
    """Fine-tune one net and evaluate it against the held-out gaze data."""
    cfg = study.config
    direction = Direction(direction)
    cond = condition_name(direction, ratio)
    res = CellResult(direction.value, float(ratio), int(seed), cond)
    train_all = [i for label in sorted(study.train_ids) for i in study.train_ids[label]]
    images = {i: study.scenes[i].image for i in train_all}
    # only fine-tuning images' heatmaps may drive manipulation
    train_heat = {i: study.heatmaps[i].full for i in train_all}
    spec = RatioDatasetSpec(ratio if direction is not Direction.STD else 0.0, direction,
                            study.train_ids, seed=derive_seed(seed, "ratio", direction.value, ratio),
                            config=cfg.spotlight_config() if direction is not Direction.STD else None)
    dataset = build_ratio_dataset(images, train_heat, spec)
    x = np.stack([d.image.values for d in dataset])
    y = np.array([d.category for d in dataset])
    net, history = fine_tune(study.base_net, x, y, cfg.train_config(seed), study.num_categories)

    x_test = _stack(study, study.test_ids)
    y_test = np.array([study.label_of[i] for i in study.test_ids])
    res.accuracy, res.confusion = evaluate_accuracy(net, x_test, y_test, study.num_categories)
    maps = gradcam_batch(net, x_test, y_test, study.test_ids)
    for smap in maps:
        hs = study.heatmaps[smap.image_id]
        try:
            r = pearson(hs.full, smap.raster)
            res.similarity.append(SimilarityRecord(smap.image_id, cond, seed, r, fisher_z(r)))
        except UndefinedCorrelation:
            res.excluded.append(smap.image_id)
            log.info("%s seed %d: %s excluded (undefined correlation)", cond, seed, smap.image_id)
        for k, z in enumerate(similarity_time_course(hs, smap)):
            if z is not None:
                res.time_course.append(SimilarityRecord(smap.image_id, cond, seed, float(np.tanh(z)), z, k))
        rois = study.scenes[smap.image_id].rois
        if rois.face_present:
            try:
                res.fdi.append((smap.image_id, cond, seed, face_detection_index(smap.raster, rois.face_roi), False))
            except DegenerateFDI:
                res.fdi.append((smap.image_id, cond, seed, None, True))
            except ValueError:
                log.info("%s seed %d: FDI undefined for %s (empty map)", cond, seed, smap.image_id)

    if out_dir is not None:
        d = cell_dir(out_dir, direction, ratio, seed)
        os.makedirs(d, exist_ok=True)
        write_similarity_csv(os.path.join(d, "similarity.csv"), res.similarity + res.time_course)
        write_fdi_csv(os.path.join(d, "fdi.csv"), res.fdi)
        convnet.write_history(os.path.join(d, "history.csv"), history)
        with open(os.path.join(d, "accuracy.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "ratio", "seed", "condition", "accuracy", "n_test", "best_epoch"])
            w.writerow([direction.value, f"{ratio:.2f}", seed, cond, f"{res.accuracy:.10g}",
                        len(y_test), history.best_epoch])
        with open(os.path.join(d, "confusion.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "ratio", "seed", "true", "predicted", "count"])
            for t in range(study.num_categories):
                for p in range(study.num_categories):
                    w.writerow([direction.value, f"{ratio:.2f}", seed, t, p, int(res.confusion[t, p])])
        if cfg.save_maps:
            for smap in maps:
                write_saliency(os.path.join(d, "gradcam"), smap)
    return res


def _safe_cell(args):
    study, direction, ratio, seed, out_dir = args
    try:
        return run_cell(study, direction, ratio, seed, out_dir)
    except (ValueError, KeyError, FloatingPointError, RuntimeError) as exc:
        log.warning("cell %s/%.2f/%d aborted: %s", direction, ratio, seed, exc)
        return CellResult(Direction(direction).value, ratio, seed, condition_name(direction, ratio),
                          error=f"{type(exc).__name__}: {exc}")


def _jobs(config: ExperimentConfig) -> int:
    env = os.environ.get("GS_JOBS")
    return max(1, int(env)) if env else max(1, config.jobs)


def _run_cells(study: Study, cells, out_dir):
    args = [(study, d, r, s, out_dir) for d, r, s in cells]
    jobs = _jobs(study.config)
    if jobs == 1 or len(args) == 1:
        return [_safe_cell(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_safe_cell, args))


def run_condition(study: Study, direction, ratio: float = 1.0, seeds=None,
                  out_dir: str | None = None) -> list[CellResult]:
    """Every seed of one (direction, ratio) cell; failed seeds are logged and
    reported with ``error`` set rather than aborting the run."""
    seeds = range(study.config.seeds) if seeds is None else seeds
    results = _run_cells(study, [(direction, ratio, s) for s in seeds], out_dir)
    done = sum(r.ok for r in results)
    log.info("%s: %d/%d seeds completed", condition_name(direction, ratio), done, len(results))
    return results


# --- sweep --------------------------------------------------------------------

@dataclass
class SweepPoint:
    direction: str
    ratio: float
    accuracy: float
    accuracy_ci: tuple
    z: float
    z_ci: tuple
    n_seeds: int


SWEEP_HEADER = ["direction", "ratio", "n_seeds", "accuracy", "accuracy_lo", "accuracy_hi",
                "z", "z_lo", "z_hi"]


def summarize_sweep(results: list[CellResult], seed: int = 0) -> list[SweepPoint]:
    cells: dict[tuple, list[CellResult]] = {}
    for r in results:
        if r.ok:
            cells.setdefault((r.direction, r.ratio), []).append(r)
    points = []
    for (direction, ratio), rs in sorted(cells.items()):
        acc = [r.accuracy for r in rs]
        zs = [r.mean_z() for r in rs if np.isfinite(r.mean_z())]
        ci_seed = derive_seed(seed, "sweep-ci", direction, ratio)
        points.append(SweepPoint(direction, ratio, float(np.mean(acc)), bootstrap_ci(acc, seed=ci_seed),
                                 float(np.mean(zs)) if zs else float("nan"),
                                 bootstrap_ci(zs, seed=ci_seed) if zs else (float("nan"),) * 2,
                                 len(rs)))
    return points


def write_sweep_csv(path: str, points: list[SweepPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for p in points:
            w.writerow([p.direction, f"{p.ratio:.2f}", p.n_seeds, f"{p.accuracy:.10g}",
                        f"{p.accuracy_ci[0]:.10g}", f"{p.accuracy_ci[1]:.10g}",
                        f"{p.z:.10g}", f"{p.z_ci[0]:.10g}", f"{p.z_ci[1]:.10g}"])


def run_sweep(study: Study, out_dir: str | None = None, directions=None, ratios=None,
              seeds=None) -> tuple[list[SweepPoint], list[CellResult]]:
    """Fine-tune over the ratio grid for each direction and aggregate."""
    cfg = study.config
    directions = [d for d in (directions or cfg.directions) if Direction(d) is not Direction.STD]
    ratios = cfg.ratios if ratios is None else ratios
    seeds = range(cfg.seeds) if seeds is None else seeds
    cells = [(d, float(r), s) for d in directions for r in ratios for s in seeds]
    results = _run_cells(study, cells, out_dir)
    points = summarize_sweep(results, cfg.seed)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_sweep_csv(os.path.join(out_dir, "sweep.csv"), points)
    return points, results


def sweep_trend(points: list[SweepPoint], direction: str = "AS") -> float:
    """Spearman correlation between ratio and mean z for one direction."""
    pts = [p for p in points if p.direction == direction]
    return spearman([p.ratio for p in pts], [p.z for p in pts])


# --- report -------------------------------------------------------------------

REPORT_FILES = {
    "accuracy": ("accuracy_by_condition.csv",
                 ["direction", "ratio", "condition", "n_seeds", "mean", "ci_lo", "ci_hi"]),
    "category_accuracy": ("category_accuracy.csv",
                          ["direction", "ratio", "condition", "category", "n_seeds", "mean_accuracy"]),
    "similarity": ("similarity_summary.csv",
                   ["condition", "split", "n_images", "median_z", "mean_z", "ci_lo", "ci_hi"]),
    "fdi": ("fdi_summary.csv", ["condition", "n", "n_censored", "median_fdi", "mean_fdi", "ci_lo", "ci_hi"]),
    "time_course": ("time_course.csv", ["condition", "window", "n_images", "mean_z", "ci_lo", "ci_hi"]),
    "sweep": ("sweep_summary.csv", SWEEP_HEADER),
    "confusion": ("confusion_counts.csv", ["condition", "true", "predicted", "count"]),
}


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _ci(values, key):
    values = [v for v in values if np.isfinite(v)]
    if not values:
        return ("", "")
    lo, hi = bootstrap_ci(values, seed=derive_seed(0, "report", key))
    return (f"{lo:.10g}", f"{hi:.10g}")


def report(results_dir: str, out_dir: str | None = None) -> dict[str, str]:
    """Aggregate every cell under ``results_dir`` into plot-ready tables.

    Missing inputs leave the corresponding table with its header only.
    """
    out_dir = out_dir or os.path.join(results_dir, "report")
    os.makedirs(out_dir, exist_ok=True)
    images = {}
    manifest = os.path.join(results_dir, "study", "images.csv")
    if os.path.exists(manifest):
        images = {row["image"]: row for row in _read_csv(manifest)}
    else:
        log.info("report: no study manifest, splits by animacy/face skipped")

    acc_rows, sim_rows, fdi_rows, conf_rows = [], [], [], []
    for acc_path in sorted(glob.glob(os.path.join(results_dir, "*", "*", "*", "accuracy.csv"))):
        d = os.path.dirname(acc_path)
        acc_rows.extend(_read_csv(acc_path))
        for name, sink in (("similarity.csv", sim_rows), ("fdi.csv", fdi_rows), ("confusion.csv", conf_rows)):
            p = os.path.join(d, name)
            if os.path.exists(p):
                sink.extend(_read_csv(p))
            else:
                log.info("report: %s missing", p)

    tables: dict[str, list] = {k: [] for k in REPORT_FILES}
    # accuracy per condition
    by_cond: dict[tuple, list] = {}
    for row in acc_rows:
        by_cond.setdefault((row["direction"], row["ratio"], row["condition"]), []).append(float(row["accuracy"]))
    for (d, r, c), accs in sorted(by_cond.items()):
        tables["accuracy"].append([d, r, c, len(accs), f"{np.mean(accs):.10g}", *_ci(accs, c)])

    # per-category accuracy from confusion counts
    cat: dict[tuple, np.ndarray] = {}
    seeds_per: dict[tuple, set] = {}
    for row in conf_rows:
        key = (row["direction"], row["ratio"])
        t, p, n = int(row["true"]), int(row["predicted"]), int(row["count"])
        agg = cat.setdefault(key + (t,), np.zeros(2))
        agg += (n if t == p else 0, n)
        seeds_per.setdefault(key, set()).add(row["seed"])
        ckey = (condition_name(row["direction"], float(row["ratio"])), t, p)
        tables.setdefault("_conf", {}).setdefault(ckey, 0)
        tables["_conf"][ckey] += n
    for (d, r, t), (correct, total) in sorted(cat.items()):
        tables["category_accuracy"].append([d, r, condition_name(d, float(r)), t,
                                            len(seeds_per[(d, r)]), f"{correct / total:.10g}"])
    for (c, t, p), n in sorted(tables.pop("_conf", {}).items()):
        tables["confusion"].append([c, t, p, n])

    # similarity: per-image mean z over seeds, split by animacy / face presence
    full: dict[tuple, list] = {}
    windows: dict[tuple, list] = {}
    for row in sim_rows:
        if row["z"] == "":
            continue
        if row["window"] == "full":
            full.setdefault((row["condition"], row["image"]), []).append(float(row["z"]))
        else:
            windows.setdefault((row["condition"], int(row["window"]), row["image"]), []).append(float(row["z"]))
    conds = sorted({c for c, _ in full})
    splits = {"all": lambda m: True,
              "animate": lambda m: m is not None and m["animate"] == "1",
              "inanimate": lambda m: m is not None and m["animate"] == "0",
              "face": lambda m: m is not None and m["face_present"] == "1",
              "nonface": lambda m: m is not None and m["face_present"] == "0"}
    for c in conds:
        per_image = {img: float(np.mean(z)) for (cc, img), z in full.items() if cc == c}
        for split, pred in splits.items():
            vals = [z for img, z in sorted(per_image.items()) if pred(images.get(img))]
            if not vals:
                continue
            tables["similarity"].append([c, split, len(vals), f"{np.median(vals):.10g}",
                                         f"{np.mean(vals):.10g}", *_ci(vals, c + split)])
    for c in sorted({k[0] for k in windows}):
        for k in sorted({k[1] for k in windows if k[0] == c}):
            vals = [float(np.mean(z)) for (cc, kk, _), z in sorted(windows.items()) if cc == c and kk == k]
            tables["time_course"].append([c, k, len(vals), f"{np.mean(vals):.10g}", *_ci(vals, f"{c}{k}")])

    fdi_by: dict[str, list] = {}
    cens_by: dict[str, int] = {}
    for row in fdi_rows:
        if row["censored"] == "1":
            cens_by[row["condition"]] = cens_by.get(row["condition"], 0) + 1
        elif row["fdi"] != "":
            fdi_by.setdefault(row["condition"], []).append(float(row["fdi"]))
    for c in sorted(set(fdi_by) | set(cens_by)):
        vals = fdi_by.get(c, [])
        med = f"{np.median(vals):.10g}" if vals else ""
        mean = f"{np.mean(vals):.10g}" if vals else ""
        tables["fdi"].append([c, len(vals), cens_by.get(c, 0), med, mean, *_ci(vals, "fdi" + c)])

    sweep_path = os.path.join(results_dir, "sweep.csv")
    if os.path.exists(sweep_path):
        for row in _read_csv(sweep_path):
            tables["sweep"].append([row[h] for h in SWEEP_HEADER])

    written = {}
    for key, (fname, header) in REPORT_FILES.items():
        path = os.path.join(out_dir, fname)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(tables[key])
        written[key] = path
    return written
