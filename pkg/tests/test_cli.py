import csv
import json
import os

import pytest

from gazeguide.cli import main

TINY = {"seed": 1, "categories": [0, 6], "images_per_category": 4, "participants": 2,
        "duration_ms": 400, "pretrain_categories": 2, "pretrain_images_per_category": 4,
        "pretrain_epochs": 1, "seeds": 1, "ratios": [1.0], "train": {"max_epochs": 2, "patience": 1}}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    return d, str(cfg)


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline(work):
    d, cfg = work
    assert run("synth", "--config", cfg, "--out", d / "scenes") == 0
    assert run("heatmap", "--fixations", d / "scenes" / "fixations.csv", "--size", 32, "--out", d / "heat") == 0
    assert (d / "heat" / "c00_000_full.rstr").exists() and (d / "heat" / "c00_000_w0.rstr").exists()
    assert run("spotlight", "--config", cfg, "--scenes", d / "scenes", "--heatmaps", d / "heat",
               "--direction", "AS", "--out", d / "spot") == 0
    assert run("train", "--config", cfg, "--data", d / "spot", "--out", d / "model") == 0
    assert {"model.gsnn", "history.csv", "labels.csv", "base_model.gsnn"} <= set(os.listdir(d / "model"))
    assert run("gradcam", "--model", d / "model" / "model.gsnn", "--scenes", d / "scenes", "--out", d / "cam") == 0
    assert run("compare", "--saliency", d / "cam", "--heatmaps", d / "heat", "--out", d / "sim.csv") == 0
    assert run("fdi", "--saliency", d / "cam", "--scenes", d / "scenes", "--out", d / "fdi.csv") == 0
    rows = list(csv.DictReader(open(d / "fdi.csv")))
    assert rows and all(r["image"].startswith("c00") for r in rows)


def test_sweep_and_report(work):
    d, cfg = work
    assert run("sweep", "--config", cfg, "--out", d / "res") == 0
    assert (d / "res" / "sweep.csv").exists() and (d / "res" / "study" / "images.csv").exists()
    assert run("report", "--results", d / "res") == 0
    assert (d / "res" / "report" / "time_course.csv").exists()


def test_stats(work, capsys):
    d, _ = work
    p = d / "groups.csv"
    p.write_text("group,value\n" + "".join(f"{g},{v}\n" for g in "ab" for v in range(5 + (g == "b") * 3)))
    assert run("stats", "--input", p, "--test", "ranksum", "--out", d / "rs.csv") == 0
    assert "ranksum" in capsys.readouterr().out
    assert run("stats", "--input", p, "--test", "kruskal", "--out", d / "kw.csv") == 0
    q = d / "corr.csv"
    q.write_text("image,r12,r13,r23\nx,0.5,0.2,0.3\n")
    assert run("stats", "--input", q, "--test", "dependent_corr", "--out", d / "dc.csv") == 1
    assert run("stats", "--input", q, "--test", "dependent_corr", "--n", 50, "--out", d / "dc.csv") == 0


def test_exit_codes(work):
    d, _ = work
    with pytest.raises(SystemExit) as e:
        main(["nonsense"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["heatmap", "--size", "32"])
    assert e.value.code == 1
    assert run("heatmap", "--fixations", d / "missing.csv", "--size", 32, "--out", d / "x") == 2
    bad = d / "bad.json"
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert run("synth", "--config", bad, "--out", d / "x") == 2
    p = d / "three.csv"
    p.write_text("group,value\na,1\nb,2\nc,3\n")
    assert run("stats", "--input", p, "--test", "welch_t", "--out", d / "w.csv") == 2
