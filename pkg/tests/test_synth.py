import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxmask.features import compute_lbp, srgb_to_lab
from boxmask.imagecore import GroundTruthMask, ImageGrid, grayscale
from boxmask.synth import (Fill, PlacementError, SceneSpec, ShapeSpec, dice_coefficient, evaluate,
                           generate_scene, gray_for_lightness, high_contrast_scene, iou,
                           texture_challenge_scene)


def test_centred_disk_area():
    r = 9.0
    spec = SceneSpec(40, 40, (ShapeSpec("disk", r, Fill("flat", (1, 0, 0)), center=(20, 20)),),
                     Fill("flat", (0, 0, 0)))
    _, [(gt, box)] = generate_scene(spec)
    n = gt.data.sum()
    assert math.pi * (r - 1) ** 2 <= n <= math.pi * (r + 1) ** 2
    assert box == gt.tight_box()


def test_generation_deterministic():
    spec = SceneSpec(48, 48, (ShapeSpec("disk", 6.0), ShapeSpec("rectangle", (8, 5))), seed=9)
    a = generate_scene(spec)
    b = generate_scene(spec)
    assert a[0] == b[0]
    assert [(m, bx) for m, bx in a[1]] == [(m, bx) for m, bx in b[1]]


def test_shapes_do_not_overlap():
    shapes = tuple(ShapeSpec("disk", 5.0) for _ in range(4))
    _, inst = generate_scene(SceneSpec(64, 64, shapes, seed=3))
    total = sum(m.data.astype(int) for m, _ in inst)
    assert total.max() == 1


def test_placement_failure():
    with pytest.raises(PlacementError):
        generate_scene(SceneSpec(20, 20, (ShapeSpec("disk", 8.0), ShapeSpec("disk", 8.0)), seed=0))


@pytest.mark.parametrize("seed", range(5))
def test_boxes_are_tight(seed):
    _, inst = generate_scene(high_contrast_scene(seed))
    for gt, box in inst:
        m = gt.data
        assert m[box.y_min, box.x_min:box.x_max].any()
        assert m[box.y_max - 1, box.x_min:box.x_max].any()
        assert m[box.y_min:box.y_max, box.x_min].any()
        assert m[box.y_min:box.y_max, box.x_max - 1].any()
        assert not m[~box.indicator(m.shape[1], m.shape[0])].any()


def test_gray_for_lightness_inverts_lab():
    for L in (0.0, 5.0, 37.5, 53.389, 90.0, 100.0):
        g = gray_for_lightness(L)
        assert srgb_to_lab(ImageGrid(np.full((1, 1, 3), g))).data[0, 0, 0] == pytest.approx(L, abs=1e-4)


def test_texture_scene_mean_colour_matched():
    spec = SceneSpec(48, 48, (ShapeSpec("disk", 14.0, Fill("stripe", (gray_for_lightness(58),) * 3,
                                                            (gray_for_lightness(42),) * 3, period=4),
                                        center=(24, 24)),),
                     Fill("flat", (gray_for_lightness(50),) * 3))
    img, [(gt, _)] = generate_scene(spec)
    lab = srgb_to_lab(img).data
    obj = lab[gt.data].mean(axis=0)
    bg = lab[~gt.data].mean(axis=0)
    assert abs(obj[0] - bg[0]) < 2.0
    codes = compute_lbp(grayscale(img)).codes
    h_obj = np.bincount(codes[gt.data], minlength=10) / gt.data.sum()
    h_bg = np.bincount(codes[~gt.data], minlength=10) / (~gt.data).sum()
    assert np.abs(h_obj - h_bg).sum() > 0.2


@pytest.mark.parametrize("seed", range(10))
def test_texture_preset_scenes_matched(seed):
    img, [(gt, _)] = generate_scene(texture_challenge_scene(seed))
    lab = srgb_to_lab(img).data
    assert abs(lab[gt.data, 0].mean() - lab[~gt.data, 0].mean()) < 2.0


def test_iou_examples():
    gt = np.ones((4, 4), dtype=bool)
    assert iou(gt, GroundTruthMask(gt)) == 1.0
    top = np.zeros((4, 4), dtype=bool)
    top[:2] = True
    assert iou(top, GroundTruthMask(gt)) == 0.5
    assert iou(top, GroundTruthMask(~top)) == 0.0
    empty = np.zeros((4, 4), dtype=bool)
    assert iou(empty, empty) == 1.0
    with pytest.raises(ValueError):
        iou(empty, np.zeros((3, 4)))


def test_dice_examples():
    a = np.zeros((20, 10), dtype=bool)
    b = np.zeros((20, 10), dtype=bool)
    a[:10] = True
    b[5:15] = True
    assert dice_coefficient(a, a) == 1.0
    assert dice_coefficient(a, b) == 0.5
    assert dice_coefficient(a, ~a) == 0.0
    assert dice_coefficient(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0


@settings(max_examples=100)
@given(st.integers(0, 2**31))
def test_dice_iou_identity(seed):
    rng = np.random.default_rng(seed)
    p = rng.random((6, 6)) < rng.random()
    g = rng.random((6, 6)) < rng.random()
    rep = evaluate(p, g)
    if p.any() or g.any():
        assert rep.dice == pytest.approx(2 * rep.iou / (1 + rep.iou), abs=1e-12)
        assert rep.dice >= rep.iou


def test_scene_spec_from_dict():
    spec = SceneSpec.from_dict({
        "width": 32, "height": 32, "seed": 4,
        "background": [0.1, 0.1, 0.1],
        "shapes": [{"geometry": "rectangle", "size": [6, 4],
                    "fill": {"kind": "checker", "color": [1, 1, 1], "color2": [0, 0, 0], "cell": 1}}],
    })
    img, inst = generate_scene(spec)
    assert img.shape == (32, 32)
    assert inst[0][1].area == 24


def test_fill_validation():
    with pytest.raises(ValueError):
        Fill("noise")
    with pytest.raises(ValueError):
        Fill("flat", (2, 0, 0))
    with pytest.raises(ValueError):
        ShapeSpec("triangle", 3)
