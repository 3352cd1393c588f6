import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gazeguide.raster import Raster, RgbImage, gaussian_filter_array, round_odd
from gazeguide.spotlight import (Direction, RatioDatasetSpec, SpotlightConfig, apply_spotlight,
                                 blur_fraction, build_ratio_dataset, keep_mask, manipulated_count,
                                 write_manifest)

HS, AS = SpotlightConfig(Direction.HS), SpotlightConfig(Direction.AS)
unit = arrays(np.float64, (12, 12), elements=st.floats(0, 1))


def test_keep_mask_extremes():
    ones, zeros = Raster(np.ones((5, 5))), Raster(np.zeros((5, 5)))
    assert blur_fraction(keep_mask(ones, HS)) == 0.0
    assert blur_fraction(keep_mask(zeros, HS)) == 1.0


def test_gaussian_heatmap_fraction():
    y, x = np.mgrid[0:128, 0:128]
    g = np.exp(-((x - 63.5) ** 2 + (y - 63.5) ** 2) / (2 * 20.0 ** 2))
    expected = sum(1 for v in g.ravel() if v < 1 / 3) / g.size
    assert blur_fraction(keep_mask(Raster(g), HS)) == expected


@settings(max_examples=60, deadline=None)
@given(unit, st.floats(0.01, 0.99))
def test_masks_partition(h, tau):
    r = Raster(h)
    hs = keep_mask(r, SpotlightConfig(Direction.HS, tau=tau)).values
    as_ = keep_mask(r, SpotlightConfig(Direction.AS, tau=tau)).values
    assert np.array_equal(hs, 1 - as_)
    assert blur_fraction(Raster(hs)) + blur_fraction(Raster(as_)) == 1.0


@settings(max_examples=40, deadline=None)
@given(unit, st.floats(0.01, 0.98), st.floats(0.0, 0.5))
def test_raising_tau_grows_hs_blur(h, tau, step):
    t2 = min(0.99, tau + step)
    a = blur_fraction(keep_mask(Raster(h), SpotlightConfig(Direction.HS, tau=tau)))
    b = blur_fraction(keep_mask(Raster(h), SpotlightConfig(Direction.HS, tau=t2)))
    assert b >= a


def test_tie_at_threshold():
    r = Raster(np.full((2, 2), 1 / 3))
    assert keep_mask(r, HS).values.all() and not keep_mask(r, AS).values.any()


def _image(seed=0, size=64):
    return RgbImage(np.random.default_rng(seed).uniform(size=(3, size, size)))


def test_spotlight_all_keep_and_all_blur():
    img = _image()
    assert apply_spotlight(img, Raster(np.ones((64, 64))), HS) == img
    blurred = gaussian_filter_array(img.values, 7, 30)
    np.testing.assert_allclose(apply_spotlight(img, Raster(np.zeros((64, 64))), HS).values, blurred,
                               atol=1e-12)


def test_half_plane_three_zones():
    img = _image(1)
    heat = np.zeros((64, 64))
    heat[:, :32] = 1.0
    out = apply_spotlight(img, Raster(heat), HS).values
    blurred = gaussian_filter_array(img.values, 7, 30)
    half = round_odd(35) // 2
    np.testing.assert_array_equal(out[:, :, :32 - half], img.values[:, :, :32 - half])
    np.testing.assert_array_equal(out[:, :, 32 + half:], blurred[:, :, 32 + half:])
    # blend weight of the original falls monotonically across the band
    y, x = np.mgrid[0:64, 0:64]
    m = np.clip(gaussian_filter_array((x < 32).astype(float), 9, 35), 0, 1)[0]
    assert np.all(np.diff(m[32 - half:32 + half]) <= 0)
    np.testing.assert_allclose(out, m * img.values + (1 - m) * blurred, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(unit, st.sampled_from([Direction.HS, Direction.AS]))
def test_spotlight_in_range_and_deterministic(h, d):
    img = RgbImage(np.random.default_rng(4).uniform(size=(3, 12, 12)))
    cfg = SpotlightConfig(d, blur_sigma=2, blur_width=5, taper_sigma=1.5, taper_width=6)
    a = apply_spotlight(img, Raster(h), cfg)
    assert a.values.min() >= 0 and a.values.max() <= 1
    assert a == apply_spotlight(img, Raster(h), cfg)


def test_spotlight_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_spotlight(_image(size=8), Raster(np.ones((8, 9))), HS)


def test_config_validation_and_scaling():
    with pytest.raises(ValueError):
        SpotlightConfig(tau=1.0)
    with pytest.raises(ValueError):
        SpotlightConfig(Direction.STD)
    s = SpotlightConfig().scaled(0.5)
    assert (s.blur_sigma, s.blur_width, s.taper_sigma, s.taper_width) == (3.5, 15, 4.5, 17.5)


def _dataset(n_per=30, cats=(0, 1)):
    images, heat, by_cat = {}, {}, {}
    rng = np.random.default_rng(9)
    for c in cats:
        by_cat[c] = [f"c{c}_{i}" for i in range(n_per)]
        for i in by_cat[c]:
            images[i] = RgbImage(rng.uniform(size=(3, 8, 8)))
            heat[i] = Raster(rng.uniform(size=(8, 8)))
    return images, heat, by_cat


def _small_cfg():
    return SpotlightConfig(blur_sigma=1, blur_width=3, taper_sigma=1, taper_width=3)


def test_ratio_counts():
    images, heat, by_cat = _dataset()
    for ratio, k in ((0.0, 0), (0.5, 15), (1.0, 30)):
        ds = build_ratio_dataset(images, heat, RatioDatasetSpec(ratio, "HS", by_cat, 1, _small_cfg()))
        for c in by_cat:
            assert sum(d.manipulated for d in ds if d.category == c) == k
        assert [d.category for d in ds] == [c for c in sorted(by_cat) for _ in by_cat[c]]
    ds = build_ratio_dataset(images, heat, RatioDatasetSpec(0.0, "AS", by_cat, 1, _small_cfg()))
    assert all(d.image == images[d.image_id] for d in ds)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(1, 40))
def test_manipulated_count_is_round_half_up(ratio, n):
    k = manipulated_count(ratio, n)
    assert 0 <= k <= n and abs(k - ratio * n) <= 0.5 + 1e-9


def test_ratio_dataset_deterministic_and_seeded():
    images, heat, by_cat = _dataset(10)
    spec = RatioDatasetSpec(0.3, "AS", by_cat, 7, _small_cfg())
    a = build_ratio_dataset(images, heat, spec)
    b = build_ratio_dataset(images, heat, spec)
    assert [(d.image_id, d.manipulated) for d in a] == [(d.image_id, d.manipulated) for d in b]
    assert all(x.image == y.image for x, y in zip(a, b))


def test_missing_heatmap_named():
    images, heat, by_cat = _dataset(4)
    del heat["c1_2"]
    with pytest.raises(KeyError, match="c1_2"):
        build_ratio_dataset(images, heat, RatioDatasetSpec(1.0, "HS", by_cat, 0, _small_cfg()))


def test_manifest(tmp_path):
    images, heat, by_cat = _dataset(2)
    ds = build_ratio_dataset(images, heat, RatioDatasetSpec(0.5, "AS", by_cat, 0, _small_cfg()))
    write_manifest(tmp_path, ds, "AS", 0.5)
    with open(tmp_path / "manifest.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["image", "category", "direction", "ratio", "manipulated", "blur_fraction"]
    assert len(rows) == 4 and sum(int(r["manipulated"]) for r in rows) == 2
    assert all((tmp_path / f"{r['image']}.ppm").exists() for r in rows)
