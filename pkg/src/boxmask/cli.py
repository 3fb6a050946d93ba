"""Command-line entry point.

Exit codes: 0 success, 1 I/O or configuration error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import affinity, costmodel, gradcheck, synth
from .imagecore import ImageGrid, load_boxes, load_image, load_mask, mask_to_grid, save_boxes, save_image
from .optimizer import (FEATURE_MODES, OptimizerConfig, build_affinity, pixel_features, recover_mask,
                        threshold_mask, write_trace_csv)

EXIT_OK = 0
EXIT_IO = 1
EXIT_VERIFY = 2


class CliError(Exception):
    """Configuration or I/O problem reported with exit status 1."""


def _lab_scale(value: str):
    if value == "unit":
        return None
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("lab scale must be a positive number or 'unit'") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("lab scale must be positive")
    return v


def _add_affinity_flags(p):
    p.add_argument("--theta1", type=float, default=affinity.DEFAULT_THETA[0])
    p.add_argument("--theta2", type=float, default=affinity.DEFAULT_THETA[1])
    p.add_argument("--tau", type=float, default=affinity.DEFAULT_TAU)
    p.add_argument("--k", type=int, default=affinity.DEFAULT_K)
    p.add_argument("--dilation", type=int, default=affinity.DEFAULT_DILATION)
    p.add_argument("--lab-scale", type=_lab_scale, default=1.0,
                   help="divide raw CIELAB by this before similarity; 'unit' uses per-channel normalisation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxmask", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="recover one mask per box")
    p.add_argument("image")
    p.add_argument("boxes")
    p.add_argument("out_dir")
    p.add_argument("--feature", choices=FEATURE_MODES, default="fused")
    _add_affinity_flags(p)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--stop-delta", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-jitter", type=float, default=0.0,
                   help="std of a seeded perturbation of the starting logits")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("heatmap", help="per-pixel mean similarity maps")
    p.add_argument("image")
    p.add_argument("out_dir")
    p.add_argument("--mode", choices=affinity.HEATMAP_MODES + ("all",), default="all")
    _add_affinity_flags(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=12)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)

    p = sub.add_parser("cost", help="convolution cost report")
    p.add_argument("spec", nargs="?", help="JSON list of conv specs")
    p.add_argument("--preset", choices=tuple(costmodel.PRESETS) + ("all",))

    p = sub.add_parser("synth", help="render a synthetic scene")
    p.add_argument("scene", nargs="?", help="SceneSpec JSON")
    p.add_argument("out_dir")
    p.add_argument("--preset", choices=("high-contrast", "texture"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)

    p = sub.add_parser("eval", help="mean IoU / Dice of predicted masks against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    return parser


def _thread_cap() -> int:
    raw = os.environ.get("BOXMASK_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise CliError(f"BOXMASK_THREADS must be an integer, got {raw!r}") from None


def _prepare_out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def cmd_segment(args) -> int:
    image = load_image(args.image)
    boxes = load_boxes(args.boxes)
    if not boxes:
        raise CliError("boxes file holds no boxes")
    for b in boxes:
        b.check_inside(image.width, image.height)
    if not 0.0 < args.threshold < 1.0:
        raise CliError("threshold must be in (0, 1)")
    config = OptimizerConfig.for_feature(
        args.feature, step_size=args.lr, max_iters=args.steps, momentum=args.momentum,
        stop_delta=args.stop_delta, theta1=args.theta1, theta2=args.theta2, tau=args.tau,
        k=args.k, dilation=args.dilation, seed=args.seed, lab_scale=args.lab_scale,
        init_jitter=args.init_jitter)

    # solve everything before touching the output directory
    with ThreadPoolExecutor(max_workers=_thread_cap()) as pool:
        results = list(pool.map(lambda b: recover_mask(image, b, config), boxes))

    out = _prepare_out_dir(args.out_dir)
    instances = []
    for i, (box, res) in enumerate(zip(boxes, results)):
        binary = threshold_mask(res.mask, args.threshold)
        save_image(mask_to_grid(binary), out / f"mask_{i}.png")
        save_image(ImageGrid(res.mask.probs), out / f"probs_{i}.pgm")
        write_trace_csv(res.loss_trace, out / f"trace_{i}.csv")
        final = res.loss_trace[-1]
        instances.append({
            "index": i,
            "box": box.to_dict(),
            "iterations": res.iterations_run,
            "converged": res.converged,
            "initial_loss": res.loss_trace[0].to_dict(),
            "final_loss": final.to_dict(),
            "foreground_pixels": int(binary.data.sum()),
        })
    summary = {
        "image": str(args.image),
        "feature": args.feature,
        "config": config.to_dict(),
        "threshold": args.threshold,
        "instances": instances,
    }
    (out / "summary.json").write_text(_dump(summary) + "\n")
    print(_dump(summary))
    return EXIT_OK


def cmd_heatmap(args) -> int:
    image = load_image(args.image)
    lab, lbp = pixel_features(image, args.lab_scale)
    edges = affinity.build_edges(image.width, image.height, args.k, args.dilation)
    edges = affinity.annotate_edges(edges, lab, lbp, args.theta1, args.theta2, args.tau)
    modes = affinity.HEATMAP_MODES if args.mode == "all" else (args.mode,)
    maps = {m: affinity.similarity_heatmap(edges, m) for m in modes}
    out = _prepare_out_dir(args.out_dir)
    written = []
    for m, grid in maps.items():
        path = out / f"heatmap_{m}.pgm"
        save_image(grid, path)
        written.append(str(path))
    print(_dump({"heatmaps": written, "width": image.width, "height": image.height}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.size < 4:
        raise CliError("size must be >= 4")
    if args.trials < 1:
        raise CliError("trials must be >= 1")
    errors = gradcheck.run_gradcheck(args.seed, args.size, args.trials, corrupt=args.corrupt)
    for t, err in enumerate(errors):
        print(f"trial {t:3d} seed {args.seed + t:6d} max_rel_err {err:.6e}")
    worst = max(errors)
    ok = worst < gradcheck.TOLERANCE
    print(f"{'PASS' if ok else 'FAIL'} worst {worst:.6e} tolerance {gradcheck.TOLERANCE:g}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_cost(args) -> int:
    if args.spec is None and args.preset is None:
        raise CliError("give a spec file or --preset")
    status = EXIT_OK
    if args.spec is not None:
        report = costmodel.total_cost(costmodel.load_specs(args.spec))
        print(_dump(report.to_dict()))
        print(costmodel.format_table(report))
    if args.preset is not None:
        names = tuple(costmodel.PRESETS) if args.preset == "all" else (args.preset,)
        for name in names:
            preset = costmodel.PRESETS[name]
            rep = preset.report()
            print(_dump(rep))
            print(f"\n[{name}] claim: {preset.claim}")
            for line in preset.assumptions:
                print(f"  assumption: {line}")
            print("before:\n" + costmodel.format_table(costmodel.total_cost(preset.before)))
            print("after:\n" + costmodel.format_table(costmodel.total_cost(preset.after)))
            verdict = "within" if rep["within_factor_2"] else "OUTSIDE"
            print(f"ratio {rep['ratio']:.6f} vs target {preset.target:.6f} "
                  f"(1/{1 / rep['ratio']:.2f}); {verdict} factor 2\n")
            if not rep["within_factor_2"]:
                status = EXIT_VERIFY
    return status


def cmd_synth(args) -> int:
    if args.preset == "high-contrast":
        spec = synth.high_contrast_scene(args.seed, args.size)
    elif args.preset == "texture":
        spec = synth.texture_challenge_scene(args.seed, args.size)
    elif args.scene is not None:
        spec = synth.SceneSpec.from_json(args.scene)
    else:
        raise CliError("give a scene JSON or --preset")
    image, instances = synth.generate_scene(spec)
    out = _prepare_out_dir(args.out_dir)
    save_image(image, out / "image.png")
    save_boxes([box for _, box in instances], out / "boxes.json")
    for i, (gt, _) in enumerate(instances):
        save_image(mask_to_grid(gt), out / f"mask_{i}.png")
    print(_dump({"image": str(out / "image.png"), "instances": len(instances)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise CliError(f"not a directory: {d}")
    names = sorted(p.name for p in gt_dir.glob("mask_*.png"))
    if not names:
        raise CliError(f"no mask_*.png files in {gt_dir}")
    reports = []
    for name in names:
        if not (pred_dir / name).exists():
            raise CliError(f"missing prediction {pred_dir / name}")
        reports.append(synth.evaluate(load_mask(pred_dir / name), load_mask(gt_dir / name)))
    payload = {
        "count": len(reports),
        "mean_iou": float(np.mean([r.iou for r in reports])),
        "mean_dice": float(np.mean([r.dice for r in reports])),
        "per_mask": {n: {"iou": r.iou, "dice": r.dice} for n, r in zip(names, reports)},
    }
    print(_dump(payload))
    return EXIT_OK


COMMANDS = {
    "segment": cmd_segment,
    "heatmap": cmd_heatmap,
    "gradcheck": cmd_gradcheck,
    "cost": cmd_cost,
    "synth": cmd_synth,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CliError, OSError, ValueError, FloatingPointError, synth.PlacementError) as exc:
        print(f"boxmask {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
