"""Batch command-line front end.

Every subcommand writes its outputs atomically and deterministically; the
randomized ones refuse to run without ``--seed``. Failures print a one-line
JSON object to stderr and exit with a code that names the failure class.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .augment import KINDS, apply, sample_choice
from .centers import DEFAULT_BETA, ellseg_centers
from .datasets import PRESETS, DatasetManifest, SplitError, load_dataset, stratified_split
from .evaluation import build_report
from .experiment import APERTURES, STRUCTURES, occlusion_experiment
from .fitting import RansacConfig
from .labels import (GroundTruthRecord, ellipses_to_ellseg, ellseg_to_ellipses,
                     occlusion_fraction, partseg_to_ellipses)
from .losses import LAMBDA1, LAMBDA2, com_loss, grad_com_loss, grad_seg_loss, seg_loss_components
from .synth import SynthParams, synth_eye

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SCHEMA = 4
EXIT_RUNTIME = 5

log = logging.getLogger("ellkit")


class CliError(Exception):
    code = EXIT_RUNTIME
    kind = "runtime_error"


class UsageError(CliError):
    code = EXIT_USAGE
    kind = "usage_error"


class InputError(CliError):
    code = EXIT_INPUT
    kind = "unreadable_input"


class SchemaError(CliError):
    code = EXIT_SCHEMA
    kind = "schema_violation"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(loader, path, *args):
    """Run a loader, translating failures into input/schema errors."""
    try:
        return loader(path, *args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    except OSError as exc:  # includes undecodable images
        raise InputError(f"{path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _mask_files(root: Path) -> list[tuple[str, Path]]:
    if not root.is_dir():
        raise InputError(f"{root}: not a directory")
    files = sorted(p for p in root.rglob("*.png") if p.is_file())
    return [(p.relative_to(root).as_posix(), p) for p in files]


def _ransac(args) -> RansacConfig:
    return RansacConfig(args.ransac_iterations, args.inlier_tol, args.min_inliers)


def _child_rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _check_classes(mask, n_classes: int, key: str):
    if mask.ndim != 2:
        raise SchemaError(f"{key}: mask must be single-channel")
    if mask.size and mask.max() >= n_classes:
        return f"mask holds values outside 0..{n_classes - 1}"
    return None


# --- subcommands ---------------------------------------------------------

def cmd_gen_gt(args) -> dict:
    out = Path(args.out)
    items = _mask_files(Path(args.masks))
    rngs = _child_rngs(args.seed, len(items))
    cfg = _ransac(args)
    rows, discarded = [], []
    occ = {"pupil": [], "iris": []}
    for (key, path), rng in zip(items, rngs):
        mask = _read(io.read_mask, path)
        problem = _check_classes(mask, 4, key)
        if problem:
            rec = GroundTruthRecord(diagnostics={"pupil": {"reason": problem},
                                                 "iris": {"reason": problem}})
        else:
            rec = partseg_to_ellipses(mask, cfg, rng)
        rows.append({"key": key, **rec.to_dict()})
        if not all(rec.valid.values()):
            discarded.append(key)
            continue
        h, w = mask.shape
        ell = ellipses_to_ellseg(rec.pupil, rec.iris, w, h)
        io.write_mask(out / "ellseg" / key, ell)
        fp, fi = occlusion_fraction(mask, ell)
        if fp is not None:
            occ["pupil"].append(fp)
        if fi is not None:
            occ["iris"].append(fi)
    io.write_jsonl(out / "gt.jsonl", rows)
    summary = {
        "n_images": len(items),
        "discarded": len(discarded),
        "discarded_keys": discarded,
        "valid": {s: sum(r["valid"][s] for r in rows) for s in ("pupil", "iris")},
        "mean_occlusion": {s: (float(np.mean(v)) if v else None) for s, v in occ.items()},
    }
    io.write_json(out / "summary.json", summary)
    return summary


def cmd_fit(args) -> dict:
    cfg = _ransac(args)
    paths = [Path(p) for p in args.masks]
    rngs = _child_rngs(args.seed, len(paths))
    result = {}
    n_classes = 4 if args.kind == "partseg" else 3
    for path, rng in zip(paths, rngs):
        mask = _read(io.read_mask, path)
        problem = _check_classes(mask, n_classes, str(path))
        if problem:
            raise SchemaError(f"{path}: {problem}")
        fit = partseg_to_ellipses if args.kind == "partseg" else ellseg_to_ellipses
        result[path.as_posix()] = fit(mask, cfg, rng).to_dict()
    io.write_json(args.out, result)
    return {"n_masks": len(paths)}


def cmd_centers(args) -> dict:
    result = {}
    for p in args.maps:
        maps = _read(io.read_prob_maps, p)
        try:
            pc, ic = ellseg_centers(maps, args.beta)
        except ValueError as exc:
            raise SchemaError(f"{p}: {exc}") from exc
        result[Path(p).as_posix()] = {"pupil_center": list(pc), "iris_center": list(ic),
                                      "beta": args.beta}
    io.write_json(args.out, result)
    return {"n_files": len(result)}


def _records_by_key(path) -> dict:
    rows = _read(io.read_jsonl, path)
    out = {}
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or "key" not in row:
            raise SchemaError(f"{path}: line {i + 1} has no 'key'")
        try:
            out[row["key"]] = GroundTruthRecord.from_dict(row)
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(f"{path}: line {i + 1}: {exc}") from exc
    return out


def cmd_eval(args) -> dict:
    gt = _records_by_key(args.gt)
    pred = _records_by_key(args.pred)
    keys = sorted(gt)
    pairs = [(pred.get(k, GroundTruthRecord()), gt[k]) for k in keys]
    masks = None
    if args.pred_masks or args.gt_masks:
        if not (args.pred_masks and args.gt_masks):
            raise UsageError("--pred-masks and --gt-masks go together")
        masks = []
        for k in keys:
            gp = Path(args.gt_masks) / k
            if not gp.exists():
                continue
            masks.append((_read(io.read_mask, Path(args.pred_masks) / k), _read(io.read_mask, gp)))
    thresholds = np.round(np.arange(0, args.max_threshold + 1e-9, args.threshold_step), 6)
    try:
        report = build_report(pairs, masks, thresholds, args.n_classes)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    out = Path(args.out)
    io.write_json(out / "metrics.json", report.to_dict())
    for s in ("pupil", "iris"):
        curve = getattr(report, f"{s}_detection")
        if curve is not None:
            io.atomic_write_text(out / f"{s}_detection.csv", curve.to_csv())
    return {"n_images": report.n_images, "miou": report.miou}


def _pair(v):
    if v is None:
        return None
    x, y = v
    return (float(x), float(y))


def cmd_loss_check(args) -> dict:
    logits = _read(io.read_prob_maps, args.logits)
    labels = _read(io.read_mask, args.labels)
    if logits.shape[1:] != labels.shape:
        raise SchemaError(f"logits {logits.shape} do not match labels {labels.shape}")
    if labels.max() >= logits.shape[0]:
        raise SchemaError("labels exceed the number of logit channels")
    try:
        comp = seg_loss_components(logits, labels, args.epoch, args.total_epochs,
                                   args.lambda1, args.lambda2)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    grad = grad_seg_loss(logits, labels, args.epoch, args.total_epochs, args.lambda1, args.lambda2)
    if args.centers:
        c = _read(io.read_json, args.centers)
        try:
            args.pupil_center = args.pupil_center or _pair(c.get("pupil_center"))
            args.iris_center = args.iris_center or _pair(c.get("iris_center"))
        except (AttributeError, TypeError, ValueError) as exc:
            raise SchemaError(f"{args.centers}: {exc}") from exc
    if args.pupil_center is not None:
        comp["com_loss"] = com_loss(logits, args.pupil_center, args.iris_center, args.beta)
        grad = grad + grad_com_loss(logits, args.pupil_center, args.iris_center, args.beta)
        comp["total"] = comp["seg_loss"] + comp["com_loss"]
    else:
        comp["total"] = comp["seg_loss"]
    comp["beta"] = args.beta
    comp["epoch"] = args.epoch
    comp["total_epochs"] = args.total_epochs
    comp["grad_l1"] = float(np.abs(grad).sum())
    io.write_json(args.out, comp)
    if args.grad_out:
        io.write_prob_maps(args.grad_out, grad, dtype="<f8")
    return {"total": comp["total"]}


def _centers_by_key(path) -> dict:
    if path is None:
        return {}
    return {k: [c for c in (r.pupil_center, r.iris_center) if c is not None]
            for k, r in _records_by_key(path).items()}


def cmd_augment(args) -> dict:
    img_root, mask_root = Path(args.images), Path(args.masks)
    items = _mask_files(img_root)
    centers = _centers_by_key(args.gt)
    rngs = _child_rngs(args.seed, len(items) * args.count)
    out = Path(args.out)
    rows = []
    for j, (key, path) in enumerate(items):
        image = _read(io.read_image, path)
        mask = _read(io.read_mask, mask_root / key)
        if image.shape != mask.shape:
            raise SchemaError(f"{key}: image {image.shape} and mask {mask.shape} differ")
        pts = centers.get(key, [])
        stem = key[:-4] if key.endswith(".png") else key
        for i in range(args.count):
            rng = rngs[j * args.count + i]
            choice = sample_choice(rng)
            if args.kind:
                while choice.kind != args.kind:
                    choice = sample_choice(rng)
            img, msk, new_pts = apply(image, mask, pts, choice, rng)
            name = f"{stem}_aug{i:03d}.png"
            io.write_image(out / "images" / name, img)
            io.write_mask(out / "masks" / name, msk)
            rows.append({"file": name, "source": key, "choice": choice.to_dict(),
                         "centers": new_pts.tolist()})
    io.write_jsonl(out / "augment.jsonl", rows)
    return {"inputs": len(items), "outputs": len(rows)}


def cmd_synth(args) -> dict:
    try:
        params = SynthParams(aperture=args.aperture, noise_sigma=args.noise_sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    gt_rows, entries = [], []
    for i, rng in enumerate(_child_rngs(args.seed, args.count)):
        image, part, ell, gt = synth_eye(params, rng)
        name = f"eye_{i:05d}.png"
        io.write_image(out / "images" / name, image)
        io.write_mask(out / "partseg" / name, part)
        io.write_mask(out / "ellseg" / name, ell)
        gt_rows.append({"key": name, **gt.to_dict()})
        entries.append({"image": f"images/{name}", "mask": f"partseg/{name}",
                        "ellseg": f"ellseg/{name}",
                        "pupil_center": list(gt.pupil_center), "iris_center": list(gt.iris_center),
                        "subset": str(i // args.batch_size)})
    io.write_jsonl(out / "gt.jsonl", gt_rows)
    io.write_json(out / "manifest.json", {"root": ".", "preset": "synthetic", "entries": entries})
    return {"count": args.count}


def cmd_occlusion_exp(args) -> dict:
    try:
        res = occlusion_experiment(args.n, args.apertures, np.random.default_rng(args.seed),
                                   ransac_cfg=_ransac(args), structure=args.structure)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    io.atomic_write_text(args.out, res.to_csv())
    if args.json:
        io.write_json(args.json, res.to_dict())
    return {"levels": len(res.levels)}


def cmd_split(args) -> dict:
    manifest = _read(DatasetManifest.load, args.manifest)
    records = list(load_dataset(manifest))
    by_key = {}
    for e in manifest.entries:
        by_key.setdefault(e.get("image") or e.get("mask"), e)
    try:
        train, val = stratified_split(records, args.ratio, tuple(args.grid_bins), args.min_bin,
                                      args.seed)
    except SplitError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    root = manifest.root.resolve().as_posix()
    for name, part in (("train", train), ("validation", val)):
        io.write_json(out / f"{name}.json", {
            "root": root, "preset": manifest.preset,
            "entries": [by_key[r.key] for r in part]})
    summary = {"n_records": len(records), "train": len(train), "validation": len(val),
               "dropped": len(records) - len(train) - len(val)}
    io.write_json(out / "split.json", summary)
    return summary


# --- parser --------------------------------------------------------------

def _add_seed(p, required=True):
    p.add_argument("--seed", type=int, required=required,
                   help="seed for every random draw (required)")


def _add_ransac(p):
    p.add_argument("--ransac-iterations", type=int, default=300)
    p.add_argument("--inlier-tol", type=float, default=1.0, help="Sampson distance, px")
    p.add_argument("--min-inliers", type=int, default=None)


def _point(s: str):
    try:
        x, y = (float(v) for v in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y but got {s!r}") from None
    return (x, y)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ellkit", description="Ellipse ground truth, fitting and "
                     "evaluation tools for eye segmentation.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true",
                        help="log progress and print a JSON summary")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("gen-gt", help="fit ellipses to PartSeg masks, write EllSeg masks")
    p.add_argument("--masks", required=True, help="directory of PartSeg PNG masks")
    p.add_argument("--out", required=True)
    _add_seed(p)
    _add_ransac(p)
    p.set_defaults(func=cmd_gen_gt)

    p = add("fit", help="fit pupil and iris ellipses to masks")
    p.add_argument("masks", nargs="+")
    p.add_argument("--kind", choices=("partseg", "ellseg"), default="partseg")
    p.add_argument("--out", required=True)
    _add_seed(p)
    _add_ransac(p)
    p.set_defaults(func=cmd_fit)

    p = add("centers", help="soft-argmax centers from activation maps")
    p.add_argument("maps", nargs="+", help="raw float maps with a JSON sidecar")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_centers)

    p = add("eval", help="metrics report and detection-rate curves")
    p.add_argument("--pred", required=True, help="JSONL of predicted records")
    p.add_argument("--gt", required=True, help="JSONL of ground-truth records")
    p.add_argument("--pred-masks")
    p.add_argument("--gt-masks")
    p.add_argument("--n-classes", type=int, default=3)
    p.add_argument("--max-threshold", type=float, default=10.0)
    p.add_argument("--threshold-step", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = add("loss-check", help="reference loss values and gradients")
    p.add_argument("--logits", required=True)
    p.add_argument("--labels", required=True, help="EllSeg class-index mask")
    p.add_argument("--epoch", type=float, required=True)
    p.add_argument("--total-epochs", type=float, required=True)
    p.add_argument("--lambda1", type=float, default=LAMBDA1)
    p.add_argument("--lambda2", type=float, default=LAMBDA2)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--pupil-center", type=_point, metavar="X,Y")
    p.add_argument("--iris-center", type=_point, metavar="X,Y")
    p.add_argument("--centers", help="JSON with pupil_center and optional iris_center")
    p.add_argument("--grad-out", help="write the float64 gradient here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_loss_check)

    p = add("augment", help="augment a corpus of images, masks and centers")
    p.add_argument("--images", required=True, help="directory of grayscale PNG images")
    p.add_argument("--masks", required=True, help="directory of masks with matching names")
    p.add_argument("--gt", help="JSONL records whose centers follow the geometry")
    p.add_argument("--count", type=int, default=1, help="augmented copies per image")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_augment)

    p = add("synth", help="render synthetic eyes with analytic ground truth")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--aperture", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=SynthParams.noise_sigma)
    p.add_argument("--batch-size", type=int, default=100, help="eyes per subset ID")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = add("occlusion-exp", help="PartSeg vs EllSeg fits under eyelid occlusion")
    p.add_argument("--n", type=int, default=200, help="eyes per aperture")
    p.add_argument("--apertures", type=float, nargs="+", default=list(APERTURES))
    p.add_argument("--structure", choices=STRUCTURES, default="iris")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--json", help="optional JSON with both structures")
    _add_seed(p)
    _add_ransac(p)
    p.set_defaults(func=cmd_occlusion_exp)

    p = add("split", help="stratified train/validation split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--grid-bins", type=int, nargs=2, default=(8, 6), metavar=("NX", "NY"))
    p.add_argument("--min-bin", type=int, default=5)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_split)
    return parser


def _validate(args):
    for name in ("count", "n", "batch_size", "ransac_iterations"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "preset", None) and args.preset not in PRESETS:
        raise UsageError(f"unknown preset {args.preset}")


def run(argv=None) -> int:
    """Run one subcommand; returns the process exit status."""
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        _validate(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        summary = args.func(args)
        if args.verbose:
            print(json.dumps(io._clean(summary), sort_keys=True))
        return EXIT_OK
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc), "exit_code": exc.code}
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        err = {"error": "runtime_error", "message": f"{type(exc).__name__}: {exc}",
               "exit_code": EXIT_RUNTIME}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return err["exit_code"]


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
