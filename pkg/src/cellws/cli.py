"""Command line interface.

Four subcommands: segment, evaluate, phantom, and loss.  Every command
prints a JSON summary to stdout and human-readable progress to stderr.
Exit codes: 0 on success, 1 on runtime failures (bad files, no seeds,
degenerate inputs), 2 on usage errors.

Commands are deterministic for fixed inputs and flags; --threads only
caps how many independent volumes or layers are processed concurrently
and never changes any output byte.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import metrics, phantom, pipeline
from .morphology import Connectivity, connected_components
from .nrrdio import NrrdFormatError, read_volume, write_volume
from .volume import BinaryVolume, Dims, LabelVolume, ScalarVolume
from .watershed import NoMarkersError

__all__ = ["main", "entrypoint"]


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True), flush=True)


def _read_scalar(path: str, name: str) -> ScalarVolume:
    vol = read_volume(path)
    if not isinstance(vol, ScalarVolume):
        raise ValueError(f"{name} volume {path!r} is {type(vol).__name__}, expected float")
    return vol


def _read_labels(path: str, name: str) -> LabelVolume:
    vol = read_volume(path)
    if isinstance(vol, LabelVolume):
        return vol
    if isinstance(vol, BinaryVolume):
        # binary masks are labeled so each blob becomes one instance
        return connected_components(vol, Connectivity.VERTEX26)
    raise ValueError(f"{name} volume {path!r} is {type(vol).__name__}, expected labels")


def _config_from_args(args: argparse.Namespace) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        membrane_threshold=args.membrane_threshold,
        background_threshold=args.background_threshold,
        centroid_threshold=args.centroid_threshold,
        closing_diameter=args.closing_diameter,
        min_background_object=args.min_background_object,
        background_reject_frac=args.reject_frac,
        sv_merge_threshold=args.merge_threshold,
    )


def _cmd_segment(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    method = args.method
    n_jobs = len(args.membrane)
    if method == "sws" and len(args.centroid) != n_jobs:
        parser.error("sws needs one --centroid per --membrane")
    if method != "sws" and args.centroid:
        parser.error(f"--centroid is not used by method {method!r}")
    if len(args.background) != n_jobs or len(args.output) != n_jobs:
        parser.error("--membrane, --background and --output must repeat in step")

    cfg = _config_from_args(args)

    def run(i: int) -> dict:
        membrane = _read_scalar(args.membrane[i], "membrane")
        background = _read_scalar(args.background[i], "background")
        t0 = time.perf_counter()
        if method == "sws":
            centroid = _read_scalar(args.centroid[i], "centroid")
            labels = pipeline.segment_sws(centroid, membrane, background, cfg)
        elif method == "ws":
            labels = pipeline.segment_ws(membrane, background, cfg)
        else:
            labels = pipeline.segment_sv(membrane, background, cfg)
        elapsed = time.perf_counter() - t0
        write_volume(labels, args.output[i])
        _log(f"[{method}] {args.output[i]}: {labels.instance_count()} instances "
             f"in {elapsed:.2f}s")
        return {
            "output": args.output[i],
            "instances": labels.instance_count(),
            "labeled_voxels": int((labels.data != 0).sum()),
            "wall_time_s": round(elapsed, 3),
        }

    if args.threads > 1 and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run, range(n_jobs)))
    else:
        results = [run(i) for i in range(n_jobs)]
    _emit({"method": method, "results": results})
    return 0


def _cmd_evaluate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    gt = _read_labels(args.gt, "gt")
    pred = _read_labels(args.pred, "pred")
    centroids = None
    if args.centroid_labels:
        centroids = _read_labels(args.centroid_labels, "centroid-labels")
    report = metrics.evaluate(
        gt,
        pred,
        centroid_labels=centroids,
        radius=args.radius,
        window=args.window,
        threads=args.threads,
    )
    if args.report_json:
        report.write_json(args.report_json)
        _log(f"report written to {args.report_json}")
    if args.report_csv:
        report.write_layer_csv(args.report_csv)
        _log(f"layer profile written to {args.report_csv}")
    _emit(report.to_dict())
    return 0


def _cmd_phantom(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    dropout = []
    for spec_pair in args.dropout:
        parts = spec_pair.split(",")
        if len(parts) != 2:
            parser.error(f"--dropout takes 'A,B' label pairs, got {spec_pair!r}")
        dropout.append((int(parts[0]), int(parts[1])))
    cfg = phantom.PhantomConfig(
        dims=Dims(args.dims[0], args.dims[1], args.dims[2]),
        n_cells=args.cells,
        rng_seed=args.seed,
        membrane_halfwidth=args.halfwidth,
        specimen=tuple(args.semi_axes) if args.semi_axes else None,
        fade=args.fade,
        noise_sigma=args.noise_sigma,
        dropout_interfaces=tuple(dropout),
    )
    result = phantom.generate(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {}
    for name, vol in (
        ("gt", result.gt),
        ("centroid", result.centroid_prob),
        ("membrane", result.membrane_prob),
        ("background", result.background_prob),
    ):
        path = os.path.join(args.out_dir, f"{name}.nrrd")
        write_volume(vol, path)
        paths[name] = path
    sidecar = phantom.sidecar_dict(result)
    sidecar_path = os.path.join(args.out_dir, "phantom.json")
    with open(sidecar_path, "w", encoding="ascii") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"phantom with {cfg.n_cells} cells written to {args.out_dir}")
    _emit({"files": paths, "sidecar": sidecar_path, "n_cells": cfg.n_cells})
    return 0


def _cmd_loss(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if len(args.true_mask) != len(args.pred_map):
        parser.error("--true-mask and --pred-map must repeat in step")
    y_true = [_read_scalar(p, f"true-mask[{i}]") for i, p in enumerate(args.true_mask)]
    y_pred = [_read_scalar(p, f"pred-map[{i}]") for i, p in enumerate(args.pred_map)]
    per_class = metrics.weighted_bce_class_losses(y_true, y_pred)
    _emit({"classes": per_class, "mean": float(sum(per_class) / len(per_class))})
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellws",
        description="Watershed-based 3D cell instance segmentation toolkit",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="max worker threads for independent volumes/layers "
        "(outputs never depend on this)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment probability volumes")
    seg.add_argument("--method", choices=("sws", "ws", "sv"), required=True)
    seg.add_argument("--centroid", action="append", default=[],
                     help="centroid probability volume (sws only; repeatable)")
    seg.add_argument("--membrane", action="append", required=True,
                     help="membrane probability volume (repeatable for batches)")
    seg.add_argument("--background", action="append", required=True,
                     help="background probability volume (repeatable)")
    seg.add_argument("--output", action="append", required=True,
                     help="output label volume path (repeatable)")
    seg.add_argument("--membrane-threshold", type=float, default=0.5)
    seg.add_argument("--background-threshold", type=float, default=0.5)
    seg.add_argument("--centroid-threshold", type=float, default=0.8)
    seg.add_argument("--closing-diameter", type=int, default=5)
    seg.add_argument("--min-background-object", type=int, default=1000)
    seg.add_argument("--reject-frac", type=float, default=0.5)
    seg.add_argument("--merge-threshold", type=float, default=0.5)

    ev = sub.add_parser("evaluate", help="score a predicted labeling against gt")
    ev.add_argument("--gt", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--centroid-labels", default=None,
                    help="optional detected-centroid components to score")
    ev.add_argument("--radius", type=int, default=2)
    ev.add_argument("--window", type=int, default=5)
    ev.add_argument("--report-json", default=None)
    ev.add_argument("--report-csv", default=None)

    ph = sub.add_parser("phantom", help="generate a synthetic specimen")
    ph.add_argument("--dims", type=int, nargs=3, required=True, metavar=("NX", "NY", "NZ"))
    ph.add_argument("--cells", type=int, required=True)
    ph.add_argument("--seed", type=int, required=True)
    ph.add_argument("--halfwidth", type=int, default=1)
    ph.add_argument("--semi-axes", type=float, nargs=3, default=None)
    ph.add_argument("--fade", type=float, default=0.0)
    ph.add_argument("--noise-sigma", type=float, default=0.0)
    ph.add_argument("--dropout", action="append", default=[], metavar="A,B",
                    help="suppress the membrane between cells A and B (repeatable)")
    ph.add_argument("--out-dir", required=True)

    lo = sub.add_parser("loss", help="class-balanced cross entropy of predictions")
    lo.add_argument("--true-mask", action="append", required=True,
                    help="binary target volume for one class (repeatable)")
    lo.add_argument("--pred-map", action="append", required=True,
                    help="predicted probability volume for one class (repeatable)")

    return parser


_COMMANDS = {
    "segment": _cmd_segment,
    "evaluate": _cmd_evaluate,
    "phantom": _cmd_phantom,
    "loss": _cmd_loss,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, parser)
    except (
        OSError,
        ValueError,
        NrrdFormatError,
        NoMarkersError,
        pipeline.NoSeedsError,
        phantom.PhantomError,
        metrics.DegenerateClassError,
    ) as exc:
        _log(f"error: {exc}")
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
