import math

import numpy as np
import pytest

from splatbench import splat
from splatbench.core import LabeledCloud
from splatbench.splat import (CameraRig, DimensionMismatch, GaussianSet,
                              InvalidConfig, colormap_depth, init_gaussians,
                              make_views, rasterize, reference_rasterize,
                              render_affordance_masks, splat_features)

from conftest import random_cloud


def centered_rig(res=33, focal=40.0):
    """Identity-pose camera whose principal point lies on a pixel center."""
    c = res // 2 + 0.5
    return CameraRig(np.eye(3)[None], np.zeros((1, 3)), focal=focal,
                     principal=(c, c), height=res, width=res)


def random_scene(n, seed, iso=0.05, opacity=0.8, with_features=0):
    cloud = random_cloud(n, seed=seed)
    feats = None
    if with_features:
        rng = np.random.default_rng(seed + 1)
        feats = rng.random((n, with_features))
    return GaussianSet(cloud.points, iso, opacity, colors=cloud.labels,
                       features=feats)


# ---------------------------------------------------------------- cameras

def test_make_views_counts_and_rings():
    rig = make_views(12, elevations=(math.radians(30), math.radians(-30)))
    assert rig.n_views == 12


def test_make_views_optical_axis_through_center():
    center = np.array([0.2, -0.1, 0.4])
    rig = make_views(12, center=center, bound_radius=1.0)
    for v in range(rig.n_views):
        r, t = rig.rotations[v], rig.translations[v]
        eye = -r.T @ t
        forward = r[2]
        to_center = center - eye
        to_center /= np.linalg.norm(to_center)
        assert np.linalg.norm(np.cross(forward, to_center)) < 1e-6


def test_make_views_defaults_match_rendering_config():
    rig = make_views()
    assert rig.n_views == 12
    assert rig.height == rig.width == 112


def test_make_views_rejects_inside_radius():
    with pytest.raises(InvalidConfig):
        make_views(12, radius_factor=0.9)


# ---------------------------------------------------------------- init

def test_init_gaussians_affordance_colors(cloud2048):
    g = init_gaussians(cloud2048, color_mode="affordance")
    assert g.n == 2048
    np.testing.assert_array_equal(g.colors[:, 0], cloud2048.labels)
    np.testing.assert_array_equal(g.means, cloud2048.points)


def test_init_gaussians_zero_scale_rejected(cloud2048):
    with pytest.raises(InvalidConfig):
        init_gaussians(cloud2048, iso_scale=0.0)


def test_init_gaussians_bad_opacity(cloud2048):
    with pytest.raises(InvalidConfig):
        init_gaussians(cloud2048, opacity=1.5)


# ---------------------------------------------------------------- analytic

def test_single_gaussian_center_pixel():
    # o=1 Gaussian exactly on a pixel center at depth 2: alpha there is 1,
    # so the one-term blend gives C = color and D = depth
    g = GaussianSet(np.array([[0.0, 0.0, 2.0]]), 0.05, 1.0,
                    colors=np.array([0.7]))
    rig = centered_rig()
    out = rasterize(g, rig)
    row = col = rig.height // 2
    assert out.color[0, 0, row, col] == pytest.approx(0.7, abs=1e-12)
    assert out.depth[0, row, col] == pytest.approx(2.0, abs=1e-12)
    assert out.alpha[0, row, col] == pytest.approx(1.0, abs=1e-12)


def test_two_gaussian_alpha_blend():
    # front alpha 0.5 color 1, back alpha 0.5 color 0 -> 0.5*1 + 0.5*0.5*0
    means = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 2.5]])
    g = GaussianSet(means, 0.05, 0.5, colors=np.array([1.0, 0.0]))
    rig = centered_rig()
    out = rasterize(g, rig)
    row = col = rig.height // 2
    assert out.color[0, 0, row, col] == pytest.approx(0.5, abs=1e-12)
    assert out.depth[0, row, col] == pytest.approx(
        0.5 * 2.0 + 0.25 * 2.5, abs=1e-12)
    assert out.alpha[0, row, col] == pytest.approx(0.75, abs=1e-12)


def test_empty_gaussian_set_renders_background():
    g = GaussianSet(np.zeros((0, 3)), 0.05, 0.9, colors=np.zeros(0))
    rig = centered_rig(res=16)
    out = reference_rasterize(g, rig)
    assert not out.color.any()
    assert not out.depth.any()
    assert not out.alpha.any()


def test_behind_camera_culled():
    g = GaussianSet(np.array([[0.0, 0.0, -2.0]]), 0.05, 1.0,
                    colors=np.array([1.0]))
    out = rasterize(g, centered_rig(res=16))
    assert not out.color.any()


# ---------------------------------------------------------------- oracle

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_tile_matches_reference(seed):
    g = random_scene(400, seed, with_features=3)
    rig = make_views(4, resolution=64)
    tiled = rasterize(g, rig)
    ref = reference_rasterize(g, rig)
    assert np.abs(tiled.color - ref.color).max() <= 1e-5
    assert np.abs(tiled.depth - ref.depth).max() <= 1e-5
    assert np.abs(tiled.alpha - ref.alpha).max() <= 1e-5
    assert np.abs(tiled.feature - ref.feature).max() <= 1e-5


def test_single_gaussian_cross_check():
    g = GaussianSet(np.array([[0.05, -0.02, 1.7]]), 0.08, 1.0,
                    colors=np.array([0.4]))
    rig = centered_rig()
    a = rasterize(g, rig)
    b = reference_rasterize(g, rig)
    assert np.abs(a.color - b.color).max() <= 1e-7


def test_alpha_always_in_unit_interval():
    g = random_scene(500, 9, iso=0.1, opacity=1.0)
    out = rasterize(g, make_views(3, resolution=48))
    assert out.alpha.min() >= 0.0
    assert out.alpha.max() <= 1.0


def test_alpha_conservation_identity():
    # per-pixel accumulated alpha telescopes to 1 - prod(1 - a_i)
    rng = np.random.default_rng(0)
    for _ in range(200):
        alphas = rng.random(rng.integers(1, 30))
        t = 1.0
        acc = 0.0
        for a in alphas:
            acc += a * t
            t *= 1.0 - a
        assert abs(acc - (1.0 - np.prod(1.0 - alphas))) < 1e-10


def test_order_invariance_under_permutation():
    g = random_scene(128, 5)
    rig = make_views(2, resolution=32)
    perm = np.random.default_rng(1).permutation(128)
    g2 = GaussianSet(g.means[perm], g.iso_scale, g.opacity, g.colors[perm])
    a = rasterize(g, rig)
    b = rasterize(g2, rig)
    np.testing.assert_allclose(a.color, b.color, atol=1e-12)


def test_thread_count_independence():
    g = random_scene(300, 11)
    rig = make_views(6, resolution=48)
    one = rasterize(g, rig, threads=1)
    four = rasterize(g, rig, threads=4)
    np.testing.assert_array_equal(one.color, four.color)
    np.testing.assert_array_equal(one.alpha, four.alpha)


# ---------------------------------------------------------------- masks

def test_affordance_masks_all_zero_labels():
    cloud = random_cloud(256, seed=2)
    cloud = LabeledCloud(cloud.points, np.zeros(256))
    masks = render_affordance_masks(cloud, make_views(2, resolution=32))
    assert not masks.any()


def test_affordance_masks_in_unit_interval(cloud2048):
    masks = render_affordance_masks(cloud2048, make_views(2, resolution=48))
    assert masks.min() >= 0.0
    assert masks.max() <= 1.0


def test_saturated_mask_approaches_one():
    # opaque all-ones labels, gaussian on top of a pixel
    cloud = LabeledCloud(np.array([[0.0, 0.0, 2.0]]), np.array([1.0]))
    rig = centered_rig()
    masks = render_affordance_masks(cloud, rig, iso_scale=0.05, opacity=1.0)
    row = col = rig.height // 2
    assert abs(masks[0, row, col] - 1.0) < 1e-3


# ---------------------------------------------------------------- features

def test_feature_splat_d1_equals_mask(cloud2048):
    rig = make_views(2, resolution=32)
    feats = splat_features(cloud2048, cloud2048.labels[:, None], rig)
    masks = render_affordance_masks(cloud2048, rig)
    np.testing.assert_allclose(feats[:, 0], masks, atol=1e-12)


def test_feature_splat_linearity():
    cloud = random_cloud(300, seed=6)
    rig = make_views(3, resolution=48)
    rng = np.random.default_rng(3)
    f1 = rng.random((300, 4))
    f2 = rng.random((300, 4))
    a, b = 0.6, -1.3
    combined = splat_features(cloud, a * f1 + b * f2, rig)
    separate = a * splat_features(cloud, f1, rig) + b * splat_features(cloud, f2, rig)
    assert np.abs(combined - separate).max() <= 1e-5


def test_feature_splat_dimension_mismatch(cloud2048):
    with pytest.raises(DimensionMismatch):
        splat_features(cloud2048, np.zeros((100, 4)), make_views(1, resolution=16))


# ---------------------------------------------------------------- colormap

def test_colormap_constant_depth_mid_gray():
    depth = np.full((1, 8, 8), 3.0)
    alpha = np.ones((1, 8, 8))
    img, invalid = colormap_depth(depth, alpha, mode="gray")
    assert invalid == [False]
    np.testing.assert_allclose(img, 0.5)


def test_colormap_all_invalid_flagged():
    depth = np.ones((2, 8, 8))
    alpha = np.zeros((2, 8, 8))
    img, invalid = colormap_depth(depth, alpha, mode="gray")
    assert invalid == [True, True]
    assert not img.any()


def test_colormap_gray_inverse_nearest_is_brightest():
    depth = np.linspace(1.0, 2.0, 64).reshape(1, 8, 8)
    alpha = np.ones((1, 8, 8))
    img, _ = colormap_depth(depth, alpha, mode="gray_inv")
    assert img[0, 0, 0, 0] == pytest.approx(1.0)
    assert img[0, 0, -1, -1] == pytest.approx(0.0)


def test_colormap_turbo_shape_and_range():
    depth = np.linspace(1.0, 2.0, 64).reshape(1, 8, 8)
    alpha = np.ones((1, 8, 8))
    img, _ = colormap_depth(depth, alpha, mode="turbo")
    assert img.shape == (1, 3, 8, 8)
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_colormap_rejects_nonfinite():
    with pytest.raises(InvalidConfig):
        colormap_depth(np.full((1, 4, 4), np.nan), np.ones((1, 4, 4)))
