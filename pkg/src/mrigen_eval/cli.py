"""Command-line interface.

Exit codes: 0 success, 2 input or validation error, 3 at least one model is
too unreliable for assessment, 4 internal error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .anatomy import format_volumes_csv, region_volumes
from .config import Config
from .exceptions import InputError
from .metrics import embed_volumes, format_embeddings_csv
from .phantom import FamilySpec, demo_spec, phantom_family
from .protocol import (
    STAGES,
    ReferenceSet,
    _region_table,
    evaluate_model,
    scan_directory,
)
from .qc import (
    DEFAULT_QC_REGIONS,
    QCRecord,
    _calibrate_scores,
    fail_count,
    format_qc_csv,
    parse_qc_csv,
)
from .report import FORMATS, emit, from_json, write_report
from .volume_io import read_label_map, save_nifti

EXIT_OK, EXIT_INPUT, EXIT_UNRELIABLE, EXIT_INTERNAL = 0, 2, 3, 4

logger = logging.getLogger("mrigen_eval")


def _load_config(args):
    cfg = Config.from_file(args.config) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, metrics=replace(cfg.metrics, seed=args.seed))
    return cfg


def _output(args, reports):
    if args.out:
        for path in write_report(reports, args.out, args.format):
            logger.info("wrote %s", path)
    else:
        sys.stdout.buffer.write(emit(reports if len(reports) > 1 else reports[0], args.format))


def _require(args, *names):
    for name in names:
        if not getattr(args, name):
            raise InputError(f"--{name} is required for this command")


def _run_stages(args, stages):
    _require(args, "real", "synth")
    cfg = _load_config(args)
    ref = ReferenceSet(args.real, cfg, args.threads, stages)
    reports = [evaluate_model(ref, d, stages=stages) for d in args.synth]
    _output(args, reports)
    if any(r.gate is not None and not r.gate.assessable for r in reports):
        return EXIT_UNRELIABLE
    return EXIT_OK


def cmd_validate(args):
    cfg = _load_config(args)
    if not (args.real or args.synth):
        raise InputError("give --real and/or --synth directories to validate")
    result, real_bad = {}, False
    for kind, dirs in (("real", [args.real] if args.real else []), ("synthetic", args.synth or [])):
        for d in dirs:
            scan = scan_directory(d, cfg, args.threads)
            result[d] = {"kind": kind, "files": len(scan.images), "nonconforming": scan.nonconforming}
            real_bad |= kind == "real" and bool(scan.nonconforming)
    sys.stdout.write(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return EXIT_INPUT if real_bad else EXIT_OK


def cmd_metrics(args):
    return _run_stages(args, ("classic",))


def cmd_gate(args):
    return _run_stages(args, ("gate",))


def cmd_anatomy(args):
    code = _run_stages(args, ("gate", "anatomy"))
    if args.out:
        cfg = _load_config(args)
        table = _region_table(cfg)
        for d in [args.real, *args.synth]:
            scan = scan_directory(d, cfg, args.threads)
            ids = [s for s in scan.conforming_ids if s in scan.labels]
            if not ids:
                continue
            records = [region_volumes(read_label_map(scan.labels[s], table), s) for s in ids]
            name = os.path.basename(os.path.normpath(d))
            with open(os.path.join(args.out, f"{name}_region_volumes.csv"), "w", encoding="utf-8") as fh:
                fh.write(format_volumes_csv(records, table.merge_keys))
    return code


def cmd_evaluate(args):
    return _run_stages(args, STAGES)


def cmd_calibrate(args):
    cfg = _load_config(args)
    if args.qc:
        with open(args.qc, encoding="utf-8") as fh:
            records = parse_qc_csv(fh.read(), cfg.qc.regions)
    else:
        _require(args, "real")
        records = ReferenceSet(args.real, cfg, args.threads, ("gate",)).records
    q = cfg.qc
    scores = np.array([[r.scores[n] for n in q.regions] for r in records])
    threshold = _calibrate_scores(scores, q.target_fail, q.grid_step)
    result = {
        "threshold": threshold,
        "target_fail": q.target_fail,
        "grid_step": q.grid_step,
        "n_records": len(records),
        "realized_fail_fraction": fail_count(scores, threshold) / len(records),
        "fail_fraction_at_next_step": fail_count(scores, round(threshold + q.grid_step, 12)) / len(records),
    }
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "qc_threshold.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_scales(items):
    out = {}
    for item in items or ():
        key, _, value = item.partition("=")
        if not value:
            raise InputError(f"--scale-region expects key=factor, got {item!r}")
        out[key] = float(value)
    return out


def cmd_phantom(args):
    """Write a complete phantom dataset that `evaluate` can consume."""
    _require(args, "out")
    try:
        shape = tuple(int(x) for x in args.shape.split(","))
    except ValueError:
        raise InputError(f"--shape expects three integers, got {args.shape!r}") from None
    seed = args.seed or 0
    base = demo_spec(shape=shape, noise_sigma=args.noise, seed=seed)
    fam = FamilySpec(base, n=args.n, scale_region=_parse_scales(args.scale_region), seed=seed)
    for sub in ("images", "labels"):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)
    rng = np.random.default_rng(seed)
    ids, volumes, truth_rows, qc = [], [], [], []
    for k, (sid, vol, labels, truth) in enumerate(phantom_family(fam)):
        save_nifti(vol, os.path.join(args.out, "images", f"{sid}.nii.gz"))
        save_nifti(labels, os.path.join(args.out, "labels", f"{sid}.nii.gz"))
        ids.append(sid)
        volumes.append(vol)
        truth_rows.append([sid, *(repr(truth[r.merge_key]) for r in base.regions)])
        scores = dict(zip(DEFAULT_QC_REGIONS, np.round(rng.uniform(0.8, 1.0, len(DEFAULT_QC_REGIONS)), 4)))
        if k < args.qc_fail:
            scores[DEFAULT_QC_REGIONS[1]] = 0.5
        qc.append(QCRecord(sid, {n: float(v) for n, v in scores.items()}))
    with open(os.path.join(args.out, "ground_truth.csv"), "w", encoding="utf-8") as fh:
        fh.write(",".join(["subject_id", *(r.merge_key for r in base.regions)]) + "\n")
        fh.writelines(",".join(row) + "\n" for row in truth_rows)
    with open(os.path.join(args.out, "qc.csv"), "w", encoding="utf-8") as fh:
        fh.write(format_qc_csv(qc))
    with open(os.path.join(args.out, "embeddings_toy.csv"), "w", encoding="utf-8") as fh:
        fh.write(format_embeddings_csv(embed_volumes(volumes, dim=16, seed=0, ids=ids)))
    with open(os.path.join(args.out, "regions.tsv"), "w", encoding="utf-8") as fh:
        fh.write(base.region_table().to_text())
    config = (
        "[data]\nembeddings = toy=embeddings_toy.csv\n"
        f"region_table = {os.path.abspath(os.path.join(args.out, 'regions.tsv'))}\n\n"
        f"[geometry]\nshape = {','.join(map(str, shape))}\n\n"
        "[metrics]\nnum_pairs = 20\nscales = 3\n\n"
        "[qc]\nthreshold = 0.65\n"
    )
    with open(os.path.join(args.out, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(config)
    sys.stdout.write(f"wrote {len(ids)} phantoms to {args.out}\n")
    return EXIT_OK


def cmd_report(args):
    if not args.input:
        raise InputError("give one or more JSON reports with --input")
    reports = []
    for path in args.input:
        with open(path, "rb") as fh:
            reports.append(from_json(fh.read()))
    _output(args, reports)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--real", help="directory with the real reference set")
    common.add_argument("--synth", action="append", default=[], help="synthetic set directory (repeatable)")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--format", choices=FORMATS, default="json")
    common.add_argument("--seed", type=int, help="seed for MS-SSIM pair sampling, or for phantom generation")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mrigen-eval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "validate": (cmd_validate, "check volume geometry"),
        "metrics": (cmd_metrics, "classic metrics only (FID, MMD, image MMD, MS-SSIM)"),
        "calibrate-qc": (cmd_calibrate, "calibrate the QC threshold on the real set"),
        "gate": (cmd_gate, "QC-gate synthetic sets"),
        "anatomy": (cmd_anatomy, "gate, then regional-volume effect sizes"),
        "evaluate": (cmd_evaluate, "full protocol"),
        "phantom": (cmd_phantom, "write a synthetic phantom dataset"),
        "report": (cmd_report, "re-render JSON reports"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        if name == "calibrate-qc":
            p.add_argument("--qc", help="QC CSV to calibrate on (instead of --real)")
        if name == "report":
            p.add_argument("--input", nargs="+", help="JSON report files")
        if name == "phantom":
            p.add_argument("--n", type=int, default=20)
            p.add_argument("--shape", default="48,48,48")
            p.add_argument("--noise", type=float, default=0.05)
            p.add_argument("--scale-region", action="append", help="key=factor, e.g. alpha=1.1")
            p.add_argument("--qc-fail", type=int, default=0, help="number of subjects with a failing QC score")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - mapped to the internal-error exit code
        logger.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
