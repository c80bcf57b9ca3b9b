"""Command-line front end.

    eyecenter detect IMAGE (--regions FILE | --face-model F --eye-model E | --builtin-cascades)
    eyecenter evaluate DATASET_DIR ... [--seed N] [--report FILE]
    eyecenter tune DATASET_DIR ... [--grid 60:10:100]
    eyecenter synth OUT_DIR [--count N] [--seed N] [--noise P] [--occlusion P]
    eyecenter szp IMAGE --regions FILE

Exit codes: 0 success, 2 bad arguments, 3 unreadable or invalid inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from typing import Optional

from . import imagecore as ic
from .cascade import CascadeFormatError, DetectParams, builtin_cascade, load_cascade
from .evaluation import (DEFAULT_GRID, RESULTS_HEADER, EyeFileError, ImageResult, RegionSource,
                         cross_validate, dataset_index, normalized_errors, read_eye_file,
                         results_csv, tune_threshold)
from .hough import HoughParams
from .pipeline import ConfigError, PipelineConfig, parse_regions_manifest, run, szp_roi
from .synth import write_adversarial_corpus, write_corpus

log = logging.getLogger("eyecenter")

EXIT_OK, EXIT_USAGE, EXIT_INPUT = 0, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# ------------------------------------------------------------------ config

_SECTIONS = {"hough": (HoughParams, ""), "face_detect": (DetectParams, "face_"),
             "eye_detect": (DetectParams, "eye_")}


def config_keys() -> dict[str, tuple[Optional[str], str, str]]:
    """Flat key -> (section or None, field name, annotation)."""
    keys = {}
    for f in dataclasses.fields(PipelineConfig):
        if f.name in _SECTIONS:
            cls, prefix = _SECTIONS[f.name]
            for g in dataclasses.fields(cls):
                keys[prefix + g.name] = (f.name, g.name, str(g.type))
        else:
            keys[f.name] = (None, f.name, str(f.type))
    return keys


def _convert(key: str, text: str, typ: str) -> object:
    text = text.strip()
    try:
        if "Optional" in typ:
            return None if text.lower() in ("", "none") else int(text)
        if typ == "int":
            return int(text)
        return float(text)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {text!r}") from None


def parse_config_text(text: str, source: str = "config") -> dict[str, str]:
    """``key = value`` lines with '#' comments -> raw string mapping."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def build_config(values: dict[str, str]) -> PipelineConfig:
    keys = config_keys()
    unknown = sorted(set(values) - set(keys))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    top: dict = {}
    sub: dict = {name: {} for name in _SECTIONS}
    for k, v in values.items():
        section, name, typ = keys[k]
        (top if section is None else sub[section])[name] = _convert(k, v, typ)
    try:
        parts = {name: _SECTIONS[name][0](**sub[name]) for name in _SECTIONS}
        return PipelineConfig(**top, **parts)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def config_from_args(args) -> PipelineConfig:
    values: dict[str, str] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                text = f.read()
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc.strerror}") from None
        values.update(parse_config_text(text, args.config))
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v
    for key in ("t_b", "t_e", "r_min_frac", "r_max_frac", "min_completeness"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v)
    return build_config(values)


def parse_grid(spec: str) -> list[int]:
    """'60:10:100' (inclusive range) or '13,26,38' or a single value."""
    try:
        if ":" in spec:
            start, step, stop = (int(p) for p in spec.split(":"))
            if step <= 0:
                raise ValueError
            vals = list(range(start, stop + 1, step))
        else:
            vals = [int(p) for p in spec.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad grid spec {spec!r}; use START:STEP:STOP or a comma list") from None
    if not vals or any(not 0 <= v <= 255 for v in vals):
        raise UsageError(f"grid {spec!r} must hold values in [0, 255]")
    return vals


# ------------------------------------------------------------------ inputs

def _read_text(path, what):
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from None


def _read_image(path):
    try:
        return ic.read_pgm(path)
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc.strerror}") from None
    except ic.ImageFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_model(path):
    try:
        return load_cascade(path)
    except OSError as exc:
        raise InputError(f"cannot read cascade {path}: {exc.strerror}") from None
    except CascadeFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def region_source(args) -> RegionSource:
    models = args.face_model or args.eye_model
    chosen = sum(bool(x) for x in (args.regions, models, args.builtin_cascades))
    if chosen != 1:
        raise UsageError("give exactly one of --regions, --face-model/--eye-model, --builtin-cascades")
    if args.regions:
        try:
            return RegionSource(regions=parse_regions_manifest(_read_text(args.regions, "regions file")))
        except ConfigError as exc:
            raise InputError(f"{args.regions}: {exc}") from None
    if args.builtin_cascades:
        return RegionSource(builtin_cascade("face"), builtin_cascade("eye"))
    if not (args.face_model and args.eye_model):
        raise UsageError("--face-model and --eye-model must be given together")
    return RegionSource(_load_model(args.face_model), _load_model(args.eye_model))


def _regions_for(source: RegionSource, image_path: str):
    if source.regions is None:
        return None
    name = os.path.basename(image_path)
    if name not in source.regions:
        raise InputError(f"no provided regions for {name}")
    return source.regions[name]


def _write(path, data, binary=False):
    try:
        with open(path, "wb" if binary else "w", **({} if binary else {"encoding": "utf-8"})) as f:
            f.write(data)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- commands

def cmd_detect(args) -> int:
    cfg = config_from_args(args)
    source = region_source(args)
    frame = _read_image(args.image)
    regions = _regions_for(source, args.image)
    try:
        res = run(frame, cfg, source.face_model, source.eye_model, regions)
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    l, r = res.left, res.right
    print(f"{l.center[0]} {l.center[1]} {r.center[0]} {r.center[1]} {l.method} {r.method}")
    if args.annotate:
        circles = [c for c in (l.circle_in_frame, r.circle_in_frame) if c is not None]
        _write(args.annotate, ic.save_pgm(ic.annotate(frame, circles, [l.center, r.center])), binary=True)
    if args.csv:
        eye = os.path.splitext(args.image)[0] + ".eye"
        if os.path.exists(eye):
            try:
                errs = normalized_errors(l.center, r.center, read_eye_file(eye))
            except EyeFileError as exc:
                raise InputError(f"{eye}: {exc}") from None
            _write(args.csv, results_csv([ImageResult(os.path.basename(args.image), l.center, r.center,
                                                      errs, l.method, r.method)]))
        else:
            row = [os.path.basename(args.image), *l.center, *r.center, "", "", "", "", "", l.method, r.method]
            _write(args.csv, RESULTS_HEADER + "\n" + ",".join(map(str, row)) + "\n")
    return EXIT_OK


def _dataset(args):
    if not os.path.isdir(args.dataset):
        raise InputError(f"not a directory: {args.dataset}")
    ds = dataset_index(args.dataset)
    if not ds:
        raise InputError(f"no .pgm/.eye pairs in {args.dataset}")
    return ds


def _guard_eval(fn):
    try:
        return fn()
    except (ConfigError, EyeFileError, ic.ImageFormatError) as exc:
        raise InputError(str(exc)) from None
    except OSError as exc:
        raise InputError(f"{exc.filename}: {exc.strerror}") from None


def cmd_evaluate(args) -> int:
    cfg = config_from_args(args)
    source = region_source(args)
    ds = _dataset(args)
    grid = parse_grid(args.grid) if args.grid else list(DEFAULT_GRID)
    if len(ds) < args.k:
        raise InputError(f"dataset has {len(ds)} images, fewer than k={args.k}")
    cv = _guard_eval(lambda: cross_validate(ds, cfg, source, args.k, args.seed, grid, args.jobs))
    rep = cv.report
    print(" ".join(f"{f:.4f}" for f in rep.fractions))
    if args.report:
        _write(args.report, rep.table())
    if args.report_csv:
        _write(args.report_csv, rep.csv())
    if args.csv:
        _write(args.csv, results_csv(cv.results))
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = config_from_args(args)
    source = region_source(args)
    ds = _dataset(args)
    grid = parse_grid(args.grid) if args.grid else list(DEFAULT_GRID)
    t_b, acc = _guard_eval(lambda: tune_threshold(ds, cfg, source, grid, args.jobs))
    print(f"t_b = {t_b}")
    print(f"accuracy(e<=0.05) = {acc:.4f}")
    if args.out:
        _write(args.out, f"# selected on {len(ds)} images, grid {','.join(map(str, grid))}\n"
                         f"t_b = {t_b}\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    try:
        if args.adversarial:
            names = write_adversarial_corpus(args.out_dir)
        else:
            names = write_corpus(args.out_dir, args.count, args.seed, args.noise, args.occlusion)
    except OSError as exc:
        raise InputError(f"cannot write corpus to {args.out_dir}: {exc.strerror}") from None
    print(f"wrote {len(names)} frames to {args.out_dir}")
    return EXIT_OK


def cmd_szp(args) -> int:
    cfg = config_from_args(args)
    if not args.regions:
        raise UsageError("szp needs --regions")
    try:
        manifest = parse_regions_manifest(_read_text(args.regions, "regions file"))
    except ConfigError as exc:
        raise InputError(f"{args.regions}: {exc}") from None
    frame = _read_image(args.image)
    name = os.path.basename(args.image)
    if name not in manifest:
        raise InputError(f"no provided regions for {name}")
    h, w = frame.shape
    rois = []
    for side, rect in zip(("left", "right"), sorted(manifest[name], key=lambda r: r.center[0])):
        if rect.x < 0 or rect.y < 0 or rect.x + rect.w > w or rect.y + rect.h > h:
            raise InputError(f"region {tuple(rect)} lies outside the {w}x{h} frame")
        region = ic.crop(frame, rect)
        # same eyebrow crop as the main pipeline
        rows = int(ic.round_half_up(cfg.t_e * rect.h))
        if rect.h - rows < 4:
            rows = 0
        roi = szp_roi(region[rows:])
        roi = ic.Rect(roi.x + rect.x, roi.y + rect.y + rows, roi.w, roi.h)
        rois.append(roi)
        print(f"{side} {roi.x} {roi.y} {roi.w} {roi.h}")
    if args.annotate:
        out = frame.copy()
        for roi in rois:
            x0, y0, x1, y1 = roi.x, roi.y, roi.x + roi.w - 1, roi.y + roi.h - 1
            out[y0, x0:x1 + 1] = out[y1, x0:x1 + 1] = 255
            out[y0:y1 + 1, x0] = out[y0:y1 + 1, x1] = 255
        _write(args.annotate, ic.save_pgm(out), binary=True)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_config_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--t-b", dest="t_b", type=int, help="binarisation threshold (0-255)")
    p.add_argument("--t-e", dest="t_e", type=float, help="fraction of region height cropped from the top")
    p.add_argument("--r-min-frac", dest="r_min_frac", type=float)
    p.add_argument("--r-max-frac", dest="r_max_frac", type=float)
    p.add_argument("--min-completeness", dest="min_completeness", type=float)


def _add_source_flags(p):
    p.add_argument("--regions", help="provided-regions manifest")
    p.add_argument("--face-model", help="face cascade (legacy Haar XML)")
    p.add_argument("--eye-model", help="eye cascade (legacy Haar XML)")
    p.add_argument("--builtin-cascades", action="store_true", help="use the bundled face/eye cascades")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eyecenter", description="Hough-based eye centre localisation")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="localise both eye centres in one image")
    p.add_argument("image")
    _add_source_flags(p)
    _add_config_flags(p)
    p.add_argument("--annotate", metavar="OUT.pgm")
    p.add_argument("--csv", metavar="OUT.csv")
    p.set_defaults(func=cmd_detect, parser=p)

    for name, func, hlp in (("evaluate", cmd_evaluate, "k-fold cross-validated accuracy on a dataset"),
                            ("tune", cmd_tune, "select T_b on a dataset")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("dataset")
        _add_source_flags(p)
        _add_config_flags(p)
        p.add_argument("--grid", help="T_b grid, START:STEP:STOP or comma list")
        p.add_argument("--jobs", type=int, default=1)
        if name == "evaluate":
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("-k", type=int, default=5)
            p.add_argument("--report", metavar="OUT.txt", help="accuracy table")
            p.add_argument("--report-csv", metavar="OUT.csv", help="threshold,fraction table")
            p.add_argument("--csv", metavar="OUT.csv", help="per-image results")
        else:
            p.add_argument("--out", metavar="FRAGMENT", help="write 't_b = N' config fragment")
        p.set_defaults(func=func, parser=p)

    p = sub.add_parser("synth", help="write a synthetic corpus with ground truth")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.002, help="salt-and-pepper fraction")
    p.add_argument("--occlusion", type=float, default=0.25, help="max eyelid share of the iris outline")
    p.add_argument("--adversarial", action="store_true", help="blank / dark / 4x4 frames instead")
    p.set_defaults(func=cmd_synth, parser=p)

    p = sub.add_parser("szp", help="projection-histogram ROI baseline")
    p.add_argument("image")
    p.add_argument("--regions")
    _add_config_flags(p)
    p.add_argument("--annotate", metavar="OUT.pgm")
    p.set_defaults(func=cmd_szp, parser=p)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        args.parser.print_usage(sys.stderr)
        print(f"eyecenter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"eyecenter: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
