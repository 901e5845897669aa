"""Batch command-line front end.

Every command materializes its resolved configuration into ``<out>.run.json``
next to its outputs; ``projconn replay <file>.run.json`` re-executes that
configuration and reproduces the outputs byte for byte. Exit codes: 0 on
success, 1 on verification failure, 2 on input or validation errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .composite import CompositeConfig, LossReport, OptimizeDiverged, loss_2d, loss_3d, optimize
from .distance import gen_distance_map, gen_distance_map_2d
from .graphs import AXES, AnnotationGraph, load_graph, project_graph, rasterize_graph, save_graph
from .metrics import (
    ExtractionConfig,
    MetricConfig,
    apls,
    ccq,
    metrics_csv,
    spatial_from_annotation,
    spatial_to_annotation,
    tlts,
    voxel_graph,
)
from .runtime import set_thread_count
from .skeleton import skeletonize
from .synth import load_scene, synth_volume
from .topo import TopoConfig, events_csv
from .volume import DistanceVolume, GenConfig, load_volume, min_projection, save_raw_grid, save_volume

_INPUT_ERRORS = (ValueError, OSError, KeyError, json.JSONDecodeError)


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"dims must be X,Y,Z, got {text!r}")
    dims = tuple(int(p) for p in parts)
    if any(d <= 0 for d in dims):
        raise ValueError(f"dims must be positive, got {text!r}")
    return dims  # type: ignore[return-value]


def _run_json_path(out: str) -> Path:
    path = Path(out)
    if path.suffix in (".json", ".csv", ".vol", ".swc"):
        path = path.with_suffix("")
    return path.parent / (path.name + ".run.json")


def _write_run_json(command: str, options: dict) -> None:
    path = _run_json_path(options["out"])
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump({"command": command, "options": options}, fh, indent=2)
        fh.write("\n")


def _dump_json(doc: dict, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _composite_config(options: dict) -> CompositeConfig:
    mode = "loss-3d" if options["mode"] == "3d" else "loss-2d"
    return CompositeConfig(
        alpha=options["alpha"],
        axes=tuple(options["axes"].split(",")),
        mode=mode,
        topo=TopoConfig(
            window=options["window"],
            dilation_radius=options["dilation"],
            beta=options["beta"],
            normalize_pairs=not options["raw_pairs"],
        ),
    )


def _load_targets(pred: DistanceVolume, options: dict):
    """Return (cfg, targets) where targets suit the configured mode."""
    cfg = _composite_config(options)
    if cfg.mode == "loss-3d":
        if not options.get("gt"):
            raise ValueError("mode 3d requires --gt")
        gt = load_volume(options["gt"])
        return cfg, gt
    if not options.get("gt2d"):
        raise ValueError("mode 2d requires --gt2d")
    paths = options["gt2d"].split(",")
    if len(paths) != 3:
        raise ValueError(f"--gt2d needs exactly 3 SWC paths (x,y,z), got {len(paths)}")
    gencfg = GenConfig(d_max=options["dmax"])
    targets = {}
    for axis, path in zip(AXES, paths):
        k = AXES.index(axis)
        dims2d = tuple(d for i, d in enumerate(pred.dims) if i != k)
        graph = load_graph(path, dims2d)
        targets[axis] = gen_distance_map_2d(graph, dims2d, gencfg)
    return cfg, targets


def _evaluate(pred: DistanceVolume, targets, cfg: CompositeConfig) -> LossReport:
    if cfg.mode == "loss-3d":
        return loss_3d(pred, targets, cfg)
    return loss_2d(pred, targets.get("x"), targets.get("y"), targets.get("z"), cfg)


def cmd_gengt(options: dict) -> int:
    graph = load_graph(options["graph"], _parse_dims(options["dims"]))
    vol = gen_distance_map(graph, _parse_dims(options["dims"]), GenConfig(d_max=options["dmax"]))
    save_volume(vol, options["out"])
    _write_run_json("gengt", options)
    return 0


def cmd_synth(options: dict) -> int:
    scene = load_scene(options["scene"])
    gt, graph, pred = synth_volume(scene)
    out = options["out"]
    save_volume(gt, f"{out}_gt")
    save_volume(pred, f"{out}_pred")
    save_graph(graph, f"{out}.swc")
    _write_run_json("synth", options)
    return 0


def cmd_loss(options: dict) -> int:
    pred = load_volume(options["pred"])
    cfg, targets = _load_targets(pred, options)
    report = _evaluate(pred, targets, cfg)
    _dump_json(report.to_json_dict(), options["out"])
    if options.get("grad_out"):
        save_raw_grid(report.gradient, options["grad_out"])
    if options.get("events_out"):
        lines = ["axis,window_x,window_y,qx,qy,value,cross_pairs,same_pairs"]
        for axis in cfg.axes:
            pproj = min_projection(pred, axis)
            target = (
                min_projection(targets, axis).values
                if cfg.mode == "loss-3d"
                else targets[axis]
            )
            body = events_csv(pproj.values, target, cfg.topo).splitlines()[1:]
            lines.extend(f"{axis},{row}" for row in body)
        Path(options["events_out"]).write_text("\n".join(lines) + "\n")
    _write_run_json("loss", options)
    return 0


def cmd_optimize(options: dict) -> int:
    pred = load_volume(options["pred"])
    cfg, targets = _load_targets(pred, options)
    mse_mask = None
    if options.get("mse_mask_ball"):
        cx, cy, cz, radius = (float(v) for v in options["mse_mask_ball"].split(","))
        coords = np.indices(pred.dims).reshape(3, -1).T
        outside = np.linalg.norm(coords - np.array([cx, cy, cz]), axis=1) > radius
        mask3d = outside.reshape(pred.dims).astype(np.float64)
        if cfg.mode == "loss-3d":
            mse_mask = mask3d
        else:
            mse_mask = {
                axis: min_projection(DistanceVolume(mask3d), axis).values for axis in cfg.axes
            }
    trajectory, final = optimize(
        pred,
        targets,
        cfg,
        steps=options["steps"],
        rate=options["rate"],
        d_max=options["dmax"],
        mse_mask=mse_mask,
    )
    header = ["step", "total", "mse"]
    for axis in cfg.axes:
        header += [f"{axis}_l_conn", f"{axis}_l_disc"]
    lines = [",".join(header)]
    for step, rep in enumerate(trajectory):
        row = [str(step), repr(rep.total), repr(rep.mse)]
        for axis in cfg.axes:
            lc, ld = rep.axes[axis]
            row += [repr(lc), repr(ld)]
        lines.append(",".join(row))
    Path(options["trace_out"]).write_text("\n".join(lines) + "\n")
    save_volume(final, options["out"])
    _write_run_json("optimize", options)
    return 0


def cmd_eval(options: dict) -> int:
    excfg = ExtractionConfig(threshold=options["threshold"])
    mcfg = MetricConfig(
        apls_pairs=options["pairs"],
        rng_seed=options["seed"],
        sample_leaves=options["sample_leaves"],
    )
    gencfg = GenConfig(d_max=options["dmax"])
    if options.get("pred_vol"):
        pred_volume = load_volume(options["pred_vol"])
        dims = pred_volume.dims
        pred_mask = skeletonize(pred_volume.values < excfg.threshold)
        pred_graph = voxel_graph(pred_mask, provenance="extracted")
        pred_voxels = np.argwhere(pred_mask)
    else:
        if not options.get("dims"):
            raise ValueError("--pred-graph requires --dims")
        dims = _parse_dims(options["dims"])
        annotation = load_graph(options["pred_graph"], dims)
        pred_graph = spatial_from_annotation(annotation)
        pred_voxels = np.argwhere(rasterize_graph(annotation, dims, gencfg.step))
    gt_annotation = load_graph(options["gt_graph"], dims)
    gt_volume = gen_distance_map(gt_annotation, dims, gencfg)
    gt_mask = skeletonize(gt_volume.values < excfg.threshold)
    gt_graph = voxel_graph(gt_mask, provenance="extracted")
    gt_voxels = np.argwhere(gt_mask)

    correctness, completeness, quality = ccq(pred_voxels, gt_voxels, mcfg)
    values = {
        "correctness": correctness,
        "completeness": completeness,
        "quality": quality,
        "apls": apls(pred_graph, gt_graph, mcfg),
        "tlts": tlts(pred_graph, gt_graph, mcfg),
    }
    Path(options["out"]).write_text(metrics_csv(values))
    if options.get("graph_out"):
        prefix = options["graph_out"]
        save_graph(spatial_to_annotation(pred_graph), f"{prefix}_pred.swc")
        save_graph(spatial_to_annotation(gt_graph), f"{prefix}_gt.swc")
    _write_run_json("eval", options)
    return 0


def _gradcheck_fixture(size: int, seed: int):
    """General-position prediction plus a two-line ground truth graph."""
    rng = np.random.default_rng(seed)
    n = size**3
    vals = np.linspace(0.5, 14.5, n)
    rng.shuffle(vals)
    pred = DistanceVolume(vals.reshape((size, size, size)))
    mid = size // 2
    off = max(1, size // 4)
    graph = AnnotationGraph(
        ids=np.arange(1, 5),
        positions=np.array(
            [
                [0.0, mid, mid],
                [size - 1.0, mid, mid],
                [off, 0.0, off],
                [off, size - 1.0, off],
            ]
        ),
        edges=np.array([[1, 2], [3, 4]]),
    )
    return pred, graph


def cmd_gradcheck(options: dict) -> int:
    size = options["size"]
    seed = options["seed"]
    pred, graph = _gradcheck_fixture(size, seed)
    dims = pred.dims
    window = max(8, size)
    cfg = CompositeConfig(
        alpha=options["alpha"],
        mode="loss-3d" if options["mode"] == "3d" else "loss-2d",
        topo=TopoConfig(window=window, beta=options["beta"]),
    )
    if cfg.mode == "loss-3d":
        targets = gen_distance_map(graph, dims)
    else:
        targets = {}
        for k, axis in enumerate(AXES):
            dims2d = tuple(d for i, d in enumerate(dims) if i != k)
            targets[axis] = gen_distance_map_2d(project_graph(graph, axis), dims2d)
    report = _evaluate(pred, targets, cfg)
    gradient = report.gradient
    if options.get("self_test_corrupt"):
        gradient = gradient + 1e-2

    rng = np.random.default_rng(seed + 1)
    n_samples = min(options["samples"], pred.values.size)
    flat = rng.choice(pred.values.size, size=n_samples, replace=False)
    step = 1e-3
    max_rel = 0.0
    base = pred.values
    for f in flat.tolist():
        idx = np.unravel_index(f, dims)
        plus = np.array(base)
        plus[idx] += step
        minus = np.array(base)
        minus[idx] -= step
        f_plus = _evaluate(DistanceVolume(plus), targets, cfg).total
        f_minus = _evaluate(DistanceVolume(minus), targets, cfg).total
        fd = (f_plus - f_minus) / (2 * step)
        an = float(gradient[idx])
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        max_rel = max(max_rel, rel)
    tolerance = 1e-3
    passed = max_rel < tolerance
    _dump_json(
        {
            "mode": options["mode"],
            "size": size,
            "seed": seed,
            "samples": n_samples,
            "max_rel_error": max_rel,
            "tolerance": tolerance,
            "pass": passed,
        },
        options["out"],
    )
    _write_run_json("gradcheck", options)
    return 0 if passed else 1


_COMMANDS = {
    "gengt": cmd_gengt,
    "synth": cmd_synth,
    "loss": cmd_loss,
    "optimize": cmd_optimize,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def cmd_replay(options: dict) -> int:
    with Path(options["run_json"]).open("r") as fh:
        doc = json.load(fh)
    command = doc["command"]
    if command not in _COMMANDS:
        raise ValueError(f"run.json names unknown command {command!r}")
    replayed = dict(doc["options"])
    set_thread_count(replayed.get("threads"))
    return _COMMANDS[command](replayed)


def _add_loss_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--pred", required=True, help="prediction volume basename")
    sub.add_argument("--gt", help="3D ground-truth volume basename (mode 3d)")
    sub.add_argument("--gt2d", help="comma-separated x,y,z SWC paths (mode 2d)")
    sub.add_argument("--mode", choices=("3d", "2d"), default="3d")
    sub.add_argument("--alpha", type=float, default=1e-3)
    sub.add_argument("--beta", type=float, default=0.1)
    sub.add_argument("--window", type=int, default=48)
    sub.add_argument("--dilation", type=int, default=3)
    sub.add_argument("--axes", default="x,y,z")
    sub.add_argument("--raw-pairs", action="store_true", help="disable pair-count normalization")
    sub.add_argument("--dmax", type=float, default=15.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="projconn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"projconn {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: env PROJCONN_THREADS or 1)")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("gengt", help="ground-truth distance volume from an SWC graph")
    sub.add_argument("--graph", required=True)
    sub.add_argument("--dims", required=True)
    sub.add_argument("--dmax", type=float, default=15.0)
    sub.add_argument("--out", required=True)

    sub = subs.add_parser("synth", help="synthetic scene: ground truth + corrupted prediction")
    sub.add_argument("--scene", required=True)
    sub.add_argument("--out", required=True)

    sub = subs.add_parser("loss", help="composite loss report (JSON), optional gradient volume")
    _add_loss_flags(sub)
    sub.add_argument("--grad-out", help="basename for the gradient volume")
    sub.add_argument("--events-out", help="CSV dump of per-window maximin events (mode 3d)")
    sub.add_argument("--out", required=True, help="loss report JSON path")

    sub = subs.add_parser("optimize", help="gradient descent on voxel values")
    _add_loss_flags(sub)
    sub.add_argument("--steps", type=int, required=True)
    sub.add_argument("--rate", type=float, required=True)
    sub.add_argument("--mse-mask-ball", help="cx,cy,cz,r ball where MSE supervision is withheld")
    sub.add_argument("--trace-out", required=True, help="per-step loss CSV path")
    sub.add_argument("--out", required=True, help="basename for the final volume")

    sub = subs.add_parser("eval", help="CCQ/APLS/TLTS metrics CSV")
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--pred-vol", help="prediction volume basename")
    group.add_argument("--pred-graph", help="prediction graph SWC")
    sub.add_argument("--gt-graph", required=True)
    sub.add_argument("--dims", help="X,Y,Z (required with --pred-graph)")
    sub.add_argument("--threshold", type=float, default=2.0)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--pairs", type=int, default=500)
    sub.add_argument("--sample-leaves", action="store_true", help="sample only leaf nodes as endpoints")
    sub.add_argument("--graph-out", help="prefix for SWC exports of both extracted graphs")
    sub.add_argument("--dmax", type=float, default=15.0)
    sub.add_argument("--out", required=True, help="metrics CSV path")

    sub = subs.add_parser("gradcheck", help="finite-difference verification of the gradient")
    sub.add_argument("--size", type=int, default=8)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--mode", choices=("3d", "2d"), default="3d")
    sub.add_argument("--samples", type=int, default=100)
    sub.add_argument("--alpha", type=float, default=1e-3)
    sub.add_argument("--beta", type=float, default=0.1)
    sub.add_argument("--self-test-corrupt", action="store_true", help=argparse.SUPPRESS)
    sub.add_argument("--out", required=True, help="report JSON path")

    sub = subs.add_parser("replay", help="re-run a command from its run.json")
    sub.add_argument("run_json")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    options = vars(args)
    command = options.pop("command")
    threads = options.pop("threads", None)
    set_thread_count(threads)
    if command == "replay":
        handler = cmd_replay
    else:
        options["threads"] = threads
        handler = _COMMANDS[command]
    try:
        return handler(options)
    except OptimizeDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
