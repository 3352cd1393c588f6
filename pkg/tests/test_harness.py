import csv
import json
import os

import jsonschema
import numpy as np
import pytest

from gazeguide.harness import (REPORT_FILES, ExperimentConfig, cell_dir, condition_name, load_config,
                               prepare_study, report, run_cell, run_condition, run_sweep,
                               summarize_sweep, sweep_trend, write_study)

TINY = {"seed": 3, "image_size": 32, "categories": [0, 6], "images_per_category": 6,
        "participants": 3, "duration_ms": 600, "pretrain_categories": 2,
        "pretrain_images_per_category": 6, "pretrain_epochs": 2, "seeds": 2,
        "ratios": [0.0, 1.0], "train": {"max_epochs": 3, "patience": 2}}


@pytest.fixture(scope="module")
def study():
    return prepare_study(load_config(TINY))


def test_config_defaults_and_schema(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.seeds == 10 and cfg.ratios[0] == 0.0 and cfg.ratios[-1] == 1.0 and len(cfg.ratios) == 11
    p = tmp_path / "c.json"
    p.write_text(json.dumps(TINY))
    cfg = load_config(p)
    assert cfg.categories == (0, 6) and cfg.train_config(4).seed == 4
    assert cfg.heatmap_sigma == pytest.approx(20 * 32 / 227)
    for bad in ({"bogus": 1}, {"ratios": [1.5]}, {"directions": ["XX"]}, {"train": {"lr": 1}}):
        with pytest.raises(jsonschema.ValidationError):
            load_config(bad)


def test_condition_names_and_dirs():
    assert condition_name("STD", 0.7) == "STD"
    assert condition_name("HS", 1.0) == "HS-100" and condition_name("AS", 0.3) == "AS-30"
    assert cell_dir("r", "AS", 0.3, 2) == os.path.join("r", "AS", "0.30", "2")
    with pytest.raises(ValueError):
        condition_name("XX", 0.1)


def test_study_split(study):
    assert len(study.scenes) == 12 and len(study.test_ids) == 6
    assert all(len(v) == 3 for v in study.train_ids.values())
    study.check_disjoint()
    leaky = type(study)(**{**study.__dict__, "test_ids": study.test_ids + [study.train_ids[0][0]]})
    with pytest.raises(RuntimeError):
        leaky.check_disjoint()


def test_cell_outputs(study, tmp_path):
    res = run_cell(study, "AS", 1.0, 0, str(tmp_path))
    assert res.ok and 0 <= res.accuracy <= 1 and res.confusion.sum() == 6
    assert len(res.similarity) + len(res.excluded) == len(study.test_ids)
    d = cell_dir(str(tmp_path), "AS", 1.0, 0)
    assert sorted(os.listdir(d)) == ["accuracy.csv", "confusion.csv", "fdi.csv", "history.csv",
                                     "similarity.csv"]
    rows = list(csv.DictReader(open(os.path.join(d, "similarity.csv"))))
    assert {r["image"] for r in rows} | set(res.excluded) == set(study.test_ids)


def test_std_equals_ratio_zero(study):
    std = run_cell(study, "STD", 0.5, 1)
    for direction in ("HS", "AS"):
        r = run_cell(study, direction, 0.0, 1)
        assert r.accuracy == std.accuracy
        assert [x.z for x in r.similarity] == [x.z for x in std.similarity]


def test_rerun_is_byte_identical(study, tmp_path):
    run_cell(study, "HS", 1.0, 1, str(tmp_path / "a"))
    run_cell(study, "HS", 1.0, 1, str(tmp_path / "b"))
    da, db = cell_dir(str(tmp_path / "a"), "HS", 1.0, 1), cell_dir(str(tmp_path / "b"), "HS", 1.0, 1)
    for name in os.listdir(da):
        assert open(os.path.join(da, name), "rb").read() == open(os.path.join(db, name), "rb").read()


def test_failed_seed_is_reported_not_raised(study, monkeypatch):
    import gazeguide.harness as h

    def boom(*a, **k):
        raise FloatingPointError("diverged")
    monkeypatch.setattr(h, "run_cell", boom)
    res = run_condition(study, "AS", 1.0, seeds=[0, 1])
    assert [r.ok for r in res] == [False, False] and "diverged" in res[0].error


def test_sweep_and_report(study, tmp_path):
    out = str(tmp_path / "res")
    write_study(study, os.path.join(out, "study"), heatmaps=False)
    points, results = run_sweep(study, out)
    assert len(results) == 2 * 2 * 2 and all(r.ok for r in results)
    assert len(points) == 4 and {p.n_seeds for p in points} == {2}
    assert summarize_sweep(results) == points
    assert -1 <= sweep_trend(points, "AS") <= 1
    assert os.path.exists(os.path.join(out, "sweep.csv"))
    written = report(out)
    assert set(written) == set(REPORT_FILES)
    for key, (name, header) in REPORT_FILES.items():
        rows = list(csv.reader(open(written[key])))
        assert rows[0] == header and len(rows) > 1, name


def test_report_empty_dir_gives_headers(tmp_path):
    written = report(str(tmp_path))
    for key, (name, header) in REPORT_FILES.items():
        assert list(csv.reader(open(written[key]))) == [header]
