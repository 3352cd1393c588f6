import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazeguide.gaze import post_latency_map
from gazeguide.metrics import face_detection_index
from gazeguide.raster import read_ppm, read_rstr
from gazeguide.synth import (CATEGORY_NAMES, PRETRAIN_BASE, GazeSimParams, SceneSpec, category_style,
                             derive_seed, make_scene, random_scene_spec, simulate_gaze,
                             simulate_participants, write_scenes)


def test_twelve_categories_split_by_animacy():
    styles = [category_style(c) for c in range(12)]
    assert [s.name for s in styles] == CATEGORY_NAMES
    assert sum(s.animate for s in styles) == 6
    with pytest.raises(ValueError):
        category_style(50)


def test_pretraining_pairs_differ_in_one_cue():
    for pair in range(4):
        a, b = category_style(PRETRAIN_BASE + 2 * pair), category_style(PRETRAIN_BASE + 2 * pair + 1)
        assert (a.shape, a.body_colors) == (b.shape, b.body_colors)
        if a.animate:
            assert a.texture == b.texture and (a.eye_color, a.mouth) != (b.eye_color, b.mouth)
        else:
            assert a.texture != b.texture


def test_derive_seed_is_stable_and_splits():
    assert derive_seed(5, "a", 1) == derive_seed(5, "a", 1)
    assert len({derive_seed(5, "a", i) for i in range(100)}) == 100
    assert derive_seed(5, "a") != derive_seed(6, "a")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 11), st.integers(0, 10 ** 9))
def test_scene_invariants(category, seed):
    sc = make_scene(random_scene_spec(category, seed))
    again = make_scene(random_scene_spec(category, seed))
    assert sc.image == again.image
    r = sc.rois
    assert r.object_mask.any()
    assert r.object_roi.values.min() >= 0 and r.object_roi.values.max() <= 1
    if category_style(category).animate:
        assert r.face_present and np.all(r.face_mask <= r.object_mask)
        assert 0.02 <= r.face_mask.mean() <= 0.10
        assert r.face_roi.values.max() <= 1
    else:
        assert not r.face_present and r.face_roi is None and r.face_mask is None


def test_object_must_fit():
    with pytest.raises(ValueError):
        make_scene(SceneSpec(0, 32, (3.0, 16.0), 8.0))


def test_params_validation():
    with pytest.raises(ValueError):
        GazeSimParams(latency_ms=-1)
    with pytest.raises(ValueError):
        GazeSimParams(face_bias=0.7, object_bias=0.5)


def face_scene(seed=0):
    return make_scene(random_scene_spec(0, seed), f"face{seed}")


def test_pre_latency_samples_near_center():
    sc = face_scene()
    p = GazeSimParams()
    sigma = 0.08 * 32
    for i in range(30):
        t = simulate_gaze(sc, duration_ms=150, params=GazeSimParams(seed=i))
        assert len(t) == 150
        assert np.all(np.hypot(t.x - 16, t.y - 16) <= 3 * sigma)
    assert p.latency_ms == 175


def test_full_face_bias_stays_in_face():
    sc = face_scene(3)
    t = simulate_participants(sc, 10, 1200, GazeSimParams(face_bias=1.0, object_bias=0.0))
    post = t.t_ms >= 175
    ix, iy = np.floor(t.x[post]).astype(int), np.floor(t.y[post]).astype(int)
    assert np.all(sc.rois.face_mask[iy, ix])


def test_face_bias_frequency():
    # pooled over four scenes x 50 participants; uniform targets add about
    # 0.1 x face area (< 0.005) to the nominal 0.6
    hits = total = 0
    for seed in range(4):
        sc = face_scene(seed)
        t = simulate_participants(sc, 50, 1500, GazeSimParams(seed=seed))
        post = t.t_ms >= 175
        ix = np.clip(np.floor(t.x[post]).astype(int), 0, 31)
        iy = np.clip(np.floor(t.y[post]).astype(int), 0, 31)
        hits += sc.rois.face_mask[iy, ix].sum()
        total += post.sum()
    assert hits / total == pytest.approx(0.6, abs=0.05)


def test_deterministic_and_one_sample_per_ms():
    sc = face_scene(1)
    a = simulate_gaze(sc, duration_ms=600, params=GazeSimParams(seed=4), participant="p1")
    b = simulate_gaze(sc, duration_ms=600, params=GazeSimParams(seed=4), participant="p1")
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.t_ms.tolist() == list(range(600))
    c = simulate_gaze(sc, duration_ms=600, params=GazeSimParams(seed=4), participant="p2")
    assert not np.array_equal(a.x, c.x)
    assert len(simulate_gaze(sc, duration_ms=0)) == 0


def test_samples_within_tremor_margin():
    sc = make_scene(random_scene_spec(7, 2))
    t = simulate_participants(sc, 5, 1500)
    margin = 3 * 0.004 * 32
    assert t.x.min() >= -margin and t.x.max() <= 32 + margin


def test_human_fdi_above_one():
    fdis = []
    for seed in range(6):
        sc = face_scene(seed)
        t = simulate_participants(sc, 20, 1500, GazeSimParams(seed=seed))
        fdis.append(face_detection_index(post_latency_map(t, 32, 32, 175), sc.rois.face_roi))
    assert np.median(fdis) > 1


def test_inanimate_scene_sends_face_share_to_object():
    sc = make_scene(random_scene_spec(8, 0))
    t = simulate_participants(sc, 20, 1500)
    post = t.t_ms >= 175
    ix = np.clip(np.floor(t.x[post]).astype(int), 0, 31)
    iy = np.clip(np.floor(t.y[post]).astype(int), 0, 31)
    assert sc.rois.object_mask[iy, ix].mean() > 0.8


def test_write_scenes(tmp_path):
    scenes = [face_scene(0), make_scene(random_scene_spec(6, 1), "inan")]
    samples = simulate_participants(scenes[0], 2, 100)
    write_scenes(tmp_path, scenes, samples)
    rows = list(csv.DictReader(open(tmp_path / "scenes_manifest.csv")))
    assert list(rows[0]) == ["image", "category", "animate", "face_present", "seed"]
    assert [r["face_present"] for r in rows] == ["1", "0"]
    assert np.allclose(read_ppm(tmp_path / "face0.ppm").values, scenes[0].image.values, atol=0.5 / 255 + 1e-12)
    assert (tmp_path / "face0_face.rstr").exists() and not (tmp_path / "inan_face.rstr").exists()
    assert read_rstr(tmp_path / "inan_object.rstr").shape == (32, 32)
    assert (tmp_path / "fixations.csv").read_text().startswith("participant,image,t_ms,x,y")
