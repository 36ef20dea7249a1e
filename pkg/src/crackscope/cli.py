"""Command-line interface.

Subcommands::

    analyze    binary mask (P5 graymap) -> per-component width reports (JSON)
    eval       ground-truth label dir + prediction file -> metrics JSON + PR CSV
    split      file list -> shuffled train/val/test list files
    gradcheck  finite-difference verification of every op and block
    attn-demo  run one attention block on seeded data and show its behavior

Exit codes: 0 success, 1 validation error (single ``error: ...`` line on
stderr), 2 usage error.  ``CRACKSCOPE_THREADS`` caps worker parallelism for
per-image/per-component work; unset means single-threaded.  All file writes
are atomic (temp file + rename) and outputs are emitted in deterministic
input order regardless of thread count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import attention, dataio, gradcheck, maskgeom, metrics
from .errors import CrackscopeError

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _worker_count() -> int:
    value = os.environ.get("CRACKSCOPE_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise CrackscopeError(f"CRACKSCOPE_THREADS must be an integer, got {value!r}") from None


def _map_ordered(fn, items):
    items = list(items)
    workers = _worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _json_value(x):
    if x is None:
        return None
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


# ---------------------------------------------------------------------------
# analyze


def _cmd_analyze(args) -> int:
    with open(args.mask, "rb") as fh:
        gray = dataio.read_pgm(fh.read())
    mask = maskgeom.threshold_mask(gray)
    scale = maskgeom.ScaleConfig(args.scale_mm_per_px) if args.scale_mm_per_px else None
    components = maskgeom.connected_components(mask)
    reports = []
    if components:
        edt = maskgeom.distance_transform(mask)
        skeleton = maskgeom.skeletonize(mask)
        reports = _map_ordered(
            lambda c: maskgeom.analyze_component(c, edt, skeleton, scale), components
        )
    doc = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    dataio.atomic_write_text(args.out, doc)
    print(f"{len(reports)} component(s) analyzed -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _load_ground_truth(gt_dir):
    gts = {}
    for name in sorted(os.listdir(gt_dir)):
        stem, ext = os.path.splitext(name)
        if ext.lower() != ".txt":
            continue
        with open(os.path.join(gt_dir, name), "r", encoding="utf-8") as fh:
            gts[stem] = dataio.parse_label_file(fh.read())
    if not gts:
        raise CrackscopeError(f"no label files (*.txt) found in {gt_dir}")
    return gts


def _cmd_eval(args) -> int:
    if args.pr_out and args.mode != "instance":
        print("error: --pr-out requires --mode instance", file=sys.stderr)
        return 1
    gts = _load_ground_truth(args.gt)
    with open(args.pred, "r", encoding="utf-8") as fh:
        preds = dataio.read_predictions(fh.read())
    unknown = sorted({p.image_id for p in preds} - set(gts))
    if unknown:
        for image_id in unknown:
            print(f"error: prediction references unknown image id {image_id!r}", file=sys.stderr)
        return 1

    by_image = {image_id: [] for image_id in gts}
    for p in preds:
        by_image[p.image_id].append(p)
    extent = (args.raster_size, args.raster_size)
    image_ids = sorted(gts)

    if args.mode == "instance":
        def match_one(image_id):
            return metrics.match_instances(
                by_image[image_id], gts[image_id], args.iou, mode=args.match, extent=extent
            )

        results = _map_ordered(match_one, image_ids)
        flagged = []
        fn_total = 0
        for image_id, (flags, fn) in zip(image_ids, results):
            flagged.extend((p.score, flag) for p, flag in zip(by_image[image_id], flags))
            fn_total += fn
        tp = sum(1 for _, flag in flagged if flag)
        fp = len(flagged) - tp
        counts = metrics.ConfusionCounts(tp=tp, fp=fp, fn=fn_total)
        total_gt = sum(len(g) for g in gts.values())
        points = metrics.pr_curve(flagged, total_gt) if total_gt else []
        summary = {
            "mode": "instance",
            "iou_threshold": args.iou,
            "tp": tp,
            "fp": fp,
            "fn": fn_total,
            "tn": None,
            "precision": _try_metric(metrics.precision, counts),
            "recall": _try_metric(metrics.recall, counts),
            "accuracy": None,
            "ap": metrics.average_precision(points) if points else None,
        }
    else:  # pixel
        def confuse_one(image_id):
            width, height = extent
            gt_mask = _union_mask(gts[image_id], width, height)
            pred_mask = _union_mask([p.polygon for p in by_image[image_id]], width, height)
            return metrics.pixel_confusion(pred_mask, gt_mask)

        counts = sum(_map_ordered(confuse_one, image_ids), metrics.ConfusionCounts())
        points = None
        summary = {
            "mode": "pixel",
            "iou_threshold": None,
            "tp": counts.tp,
            "fp": counts.fp,
            "fn": counts.fn,
            "tn": counts.tn,
            "precision": _try_metric(metrics.precision, counts),
            "recall": _try_metric(metrics.recall, counts),
            "accuracy": _try_metric(metrics.accuracy, counts),
            "ap": None,
        }

    doc = json.dumps({k: _json_value(v) for k, v in summary.items()}, indent=2) + "\n"
    if args.out:
        dataio.atomic_write_text(args.out, doc)
        print(f"metrics -> {args.out}")
    else:
        print(doc, end="")
    if args.pr_out and points is not None:
        dataio.atomic_write_text(args.pr_out, metrics.pr_curve_to_csv(points))
        print(f"pr curve -> {args.pr_out}")
    return 0


def _union_mask(polygons, width, height):
    mask = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        mask |= dataio.polygon_to_mask(poly, width, height)
    return mask


def _try_metric(fn, counts):
    try:
        return fn(counts)
    except CrackscopeError:
        return None


# ---------------------------------------------------------------------------
# split


def _cmd_split(args) -> int:
    with open(args.list, "r", encoding="utf-8") as fh:
        items = [line.strip() for line in fh if line.strip()]
    spec = dataio.SplitSpec(train=args.train, val=args.val, test=args.test, seed=args.seed)
    train, val, test = dataio.split_dataset(items, spec)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, chunk in (("train", train), ("val", val), ("test", test)):
        path = os.path.join(args.out_dir, f"{name}.txt")
        dataio.atomic_write_text(path, "".join(line + "\n" for line in chunk))
        print(f"{name}: {len(chunk)} item(s) -> {path}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck


def _cmd_gradcheck(args) -> int:
    reports = gradcheck.run_gradient_suite(
        seed=args.seed, eps=args.eps, tol=args.tol, cases=args.cases
    )
    for report in reports:
        print(report)
    failed = [r for r in reports if not r.passed]
    if failed:
        print(f"error: {len(failed)} gradient check(s) failed", file=sys.stderr)
        return 1
    print(f"all {len(reports)} gradient checks passed")
    return 0


# ---------------------------------------------------------------------------
# attn-demo


def _cmd_attn_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    x = rng.uniform(-1, 1, (1, 8, 12, 12))
    block = args.block

    if block == "eca":
        params = attention.init_eca(8, seed=args.seed)
        out = attention.eca_forward(x, params)
        weights = attention.eca_weights(x, params)
        zero_out = attention.eca_forward(x, attention.init_eca(8, zero=True))
    elif block == "cam":
        params = attention.init_cam(8, seed=args.seed)
        out = attention.cam_forward(x, params)
        weights = attention.cam_weights(x, params)
        zero_out = attention.cam_forward(x, attention.init_cam(8, zero=True))
    elif block == "sam":
        params = attention.init_sam(seed=args.seed)
        out = attention.sam_forward(x, params)
        weights = attention.sam_map(x, params)
        zero_out = attention.sam_forward(x, attention.init_sam(zero=True))
    elif block == "cbam":
        cam = attention.init_cam(8, seed=args.seed)
        sam = attention.init_sam(seed=args.seed + 1)
        out = attention.cbam_forward(x, cam, sam)
        weights = attention.sam_map(attention.cam_forward(x, cam), sam)
        zero_out = attention.cbam_forward(
            x, attention.init_cam(8, zero=True), attention.init_sam(zero=True)
        )
    else:  # sppf
        params = attention.init_sppf(8, 4, 8, seed=args.seed)
        out = attention.sppf_forward(x, params)
        weights = None
        zero_out = None

    print(f"block: {block}")
    print(f"input shape:  {x.shape}")
    print(f"output shape: {out.shape}")
    if weights is not None:
        print(
            "attention weights: "
            f"min={weights.min():.6f} mean={weights.mean():.6f} max={weights.max():.6f}"
        )
    if zero_out is not None:
        factor = 0.25 if block == "cbam" else 0.5
        residual = float(np.abs(zero_out - factor * x).max())
        print(f"zero-init identity |out - {factor}*x| = {residual:.3e}")
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="crackscope")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="measure crack widths in a binary mask")
    p.add_argument("--mask", required=True, help="input P5 graymap")
    p.add_argument("--out", required=True, help="output JSON report")
    p.add_argument("--scale-mm-per-px", type=float, default=None)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="directory of label .txt files")
    p.add_argument("--pred", required=True, help="JSON-lines prediction file")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--mode", choices=("instance", "pixel"), default="instance")
    p.add_argument("--match", choices=("box", "mask"), default="box",
                   help="instance-mode IoU geometry")
    p.add_argument("--raster-size", type=int, default=256,
                   help="raster extent for mask/pixel operations")
    p.add_argument("--out", default=None, help="metrics JSON path (stdout if omitted)")
    p.add_argument("--pr-out", default=None, help="PR curve CSV path")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("split", help="deterministic train/val/test split")
    p.add_argument("list", help="file with one item per line")
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--val", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=_cmd_split)

    p = sub.add_parser("gradcheck", help="verify every gradient against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--cases", type=int, default=10, help="random cases per op/block")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("attn-demo", help="demonstrate one block on seeded data")
    p.add_argument("--block", choices=("eca", "cam", "sam", "cbam", "sppf"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_attn_demo)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.fn(args)
    except CrackscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
