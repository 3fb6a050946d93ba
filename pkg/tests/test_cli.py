import json

import numpy as np
import pytest

from boxmask.cli import main
from boxmask.imagecore import BoxAnnotation, ImageGrid, load_image, load_mask, save_boxes, save_image


@pytest.fixture
def scene(tmp_path):
    """Synthetic high-contrast scene written by the synth command."""
    d = tmp_path / "scene"
    assert main(["synth", str(d), "--preset", "high-contrast", "--seed", "1", "--size", "32"]) == 0
    return d


def test_synth_writes_scene_and_is_deterministic(tmp_path, scene):
    again = tmp_path / "again"
    assert main(["synth", str(again), "--preset", "high-contrast", "--seed", "1", "--size", "32"]) == 0
    for name in ("image.png", "boxes.json", "mask_0.png"):
        assert (scene / name).read_bytes() == (again / name).read_bytes()
    assert load_image(scene / "image.png").data.shape == (32, 32, 3)


def test_synth_from_scene_json(tmp_path):
    spec = {"width": 20, "height": 16, "background": [0, 0, 0], "seed": 4,
            "shapes": [{"geometry": "rectangle", "size": [6, 4],
                        "fill": {"kind": "flat", "color": [1, 1, 1]}}]}
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(spec))
    assert main(["synth", str(path), str(tmp_path / "out")]) == 0
    mask = load_mask(tmp_path / "out" / "mask_0.png")
    assert mask.data.sum() == 24


def test_synth_needs_scene_or_preset(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "out")]) == 1
    assert "error" in capsys.readouterr().err


def test_segment_outputs(tmp_path, scene, capsys):
    out = tmp_path / "seg"
    code = main(["segment", str(scene / "image.png"), str(scene / "boxes.json"), str(out), "--steps", "60"])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["feature"] == "fused"
    assert summary["config"]["max_iters"] == 60
    inst = summary["instances"][0]
    assert inst["iterations"] <= 60
    assert inst["final_loss"]["l_mask"] <= inst["initial_loss"]["l_mask"]
    assert load_image(out / "mask_0.png").data.shape == (32, 32, 1)
    assert load_image(out / "probs_0.pgm").data.shape == (32, 32, 1)
    rows = (out / "trace_0.csv").read_text().splitlines()
    assert rows[0] == "iter,l_proj,l_pair,l_mask"
    assert len(rows) == inst["iterations"] + 2
    assert json.loads(capsys.readouterr().out) == summary


def test_segment_feature_choice_recorded(tmp_path, scene):
    for feat, theta in (("lab", [1.0, 0.0]), ("fused", [0.9, 0.1]), ("lbp", [0.0, 1.0])):
        out = tmp_path / feat
        assert main(["segment", str(scene / "image.png"), str(scene / "boxes.json"), str(out),
                     "--feature", feat, "--steps", "5"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["feature"] == feat
        assert [summary["config"]["theta1"], summary["config"]["theta2"]] == theta


def test_segment_missing_boxes_leaves_no_output(tmp_path, scene, capsys):
    out = tmp_path / "never"
    assert main(["segment", str(scene / "image.png"), str(tmp_path / "nope.json"), str(out)]) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_segment_box_outside_image(tmp_path, scene):
    boxes = tmp_path / "bad.json"
    save_boxes([BoxAnnotation(0, 0, 40, 10)], boxes)
    out = tmp_path / "never"
    assert main(["segment", str(scene / "image.png"), str(boxes), str(out)]) == 1
    assert not out.exists()


def test_segment_bad_thread_env(tmp_path, scene, monkeypatch):
    monkeypatch.setenv("BOXMASK_THREADS", "many")
    assert main(["segment", str(scene / "image.png"), str(scene / "boxes.json"), str(tmp_path / "o")]) == 1


def test_segment_threads_do_not_change_output(tmp_path, monkeypatch):
    img = np.zeros((24, 24, 3))
    img[3:10, 3:10] = 0.9
    img[14:21, 12:22] = [0.9, 0.2, 0.1]
    save_image(ImageGrid(img), tmp_path / "img.png")
    save_boxes([BoxAnnotation(2, 2, 11, 11), BoxAnnotation(11, 13, 23, 22)], tmp_path / "boxes.json")
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("BOXMASK_THREADS", threads)
        out = tmp_path / f"t{threads}"
        assert main(["segment", str(tmp_path / "img.png"), str(tmp_path / "boxes.json"), str(out),
                     "--steps", "40"]) == 0
        outs.append(out)
    for name in ("mask_0.png", "mask_1.png", "trace_0.csv", "trace_1.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_heatmap_all_modes(tmp_path, scene):
    out = tmp_path / "heat"
    assert main(["heatmap", str(scene / "image.png"), str(out)]) == 0
    for mode in ("lab", "lbp", "fused"):
        grid = load_image(out / f"heatmap_{mode}.pgm")
        assert grid.data.shape == (32, 32, 1)


def test_heatmap_constant_image_is_white(tmp_path):
    save_image(ImageGrid(np.full((9, 7, 3), 0.3)), tmp_path / "flat.ppm")
    out = tmp_path / "heat"
    assert main(["heatmap", str(tmp_path / "flat.ppm"), str(out), "--mode", "lab"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["heatmap_lab.pgm"]
    raw = load_image(out / "heatmap_lab.pgm")
    assert raw.data.shape == (9, 7, 1)
    assert np.all(raw.data == 1.0)


def test_gradcheck_pass_fail_and_repeatable(capsys):
    assert main(["gradcheck", "--trials", "3"]) == 0
    first = capsys.readouterr().out
    assert main(["gradcheck", "--trials", "3"]) == 0
    assert capsys.readouterr().out == first
    assert first.strip().splitlines()[-1].startswith("PASS")
    assert main(["gradcheck", "--trials", "2", "--corrupt", "0.01"]) == 2
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("FAIL")


def test_gradcheck_rejects_tiny_size():
    assert main(["gradcheck", "--size", "2"]) == 1


def test_cost_preset(capsys):
    assert main(["cost", "--preset", "fpn"]) == 0
    out = capsys.readouterr().out
    assert "assumption:" in out
    assert "within factor 2" in out
    assert "0.065430" in out


def test_cost_all_presets(capsys):
    assert main(["cost", "--preset", "all"]) == 0
    out = capsys.readouterr().out
    assert "[fpn]" in out and "[head]" in out


def test_cost_spec_file(tmp_path, capsys):
    path = tmp_path / "layers.json"
    path.write_text(json.dumps([
        {"kind": "standard", "k": 3, "c_in": 256, "c_out": 256, "w_out": 1, "h_out": 1},
        {"kind": "depthwise_separable", "k": 3, "c_in": 256, "c_out": 256},
    ]))
    assert main(["cost", str(path)]) == 0
    out = capsys.readouterr().out
    payload = json.loads(out[:out.index("\n}") + 2])
    assert payload["mults"] == 589824 + 67840


def test_cost_bad_spec(tmp_path):
    path = tmp_path / "layers.json"
    path.write_text(json.dumps([{"kind": "grouped", "k": 3, "c_in": 4, "c_out": 4}]))
    assert main(["cost", str(path)]) == 1
    assert main(["cost"]) == 1


def test_eval_identity_and_mismatch(tmp_path, scene, capsys):
    assert main(["eval", str(scene), str(scene)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["mean_iou"] == 1.0 and payload["mean_dice"] == 1.0
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["eval", str(empty), str(scene)]) == 1


def test_eval_after_segment(tmp_path, scene, capsys):
    out = tmp_path / "seg"
    assert main(["segment", str(scene / "image.png"), str(scene / "boxes.json"), str(out)]) == 0
    capsys.readouterr()
    assert main(["eval", str(out), str(scene)]) == 0
    assert json.loads(capsys.readouterr().out)["mean_iou"] >= 0.85
