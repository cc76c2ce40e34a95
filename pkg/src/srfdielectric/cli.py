"""Command-line entry point: ``srfdielectric <verb> ...``.

Exit codes: 0 success, 1 partial or data failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset, report, stages
from .config import ConfigError, load_config
from .resonance import ResonatorModel, frequency_grid, synth_s21
from .synthref import ReferenceSheetError, load_reference_sheet, self_check
from .trace_io import document_from_trace, write_csv_trace, write_touchstone

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("srfdielectric")


class UsageError(Exception):
    pass


def _load_doc(path: Path, stage: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {stage} output {path}: {exc}") from None
    if doc.get("stage") != stage:
        raise UsageError(f"{path} holds stage {doc.get('stage')!r}, expected {stage!r}")
    return doc


def _out_dir(args, config) -> Path:
    return Path(args.out) if args.out else config.output_dir


def _finish(doc: dict, out: Path, name: str) -> int:
    path = report.write_json(doc, out / f"{name}.json")
    for f in doc.get("failures", []):
        log.warning("%s: %s", f["file"], f["error"])
    print(f"{name}: {len(doc.get('records', []))} records, {len(doc.get('failures', []))} failures -> {path}")
    if not doc.get("records"):
        return EXIT_DATA
    return EXIT_DATA if doc.get("failures") else EXIT_OK


FIT_COLUMNS = ("file", "f_res_hz", "q_loaded", "detuning_angle_rad", "residual_rms", "degraded")


def cmd_fit(args) -> int:
    if args.config:
        config = load_config(args.config)
        if args.files:
            raise UsageError("give either --config or trace files, not both")
        doc = stages.run_fit(config)
        out = _out_dir(args, config)
    else:
        if not args.files:
            raise UsageError("no input files")
        records, failures = stages.fit_files(args.files, args.parameter, fit_background=not args.no_background)
        doc = {"schema_version": stages.SCHEMA_VERSION, "stage": "fit", "records": records, "failures": failures}
        out = Path(args.out) if args.out else None
    width = max([len(c) for c in FIT_COLUMNS] + [len(r["file"]) for r in doc["records"]])
    print("  ".join(c.rjust(width if c == "file" else 16) for c in FIT_COLUMNS))
    for r in doc["records"]:
        print("  ".join(report.fmt(r[c]).rjust(width if c == "file" else 16) for c in FIT_COLUMNS))
    if out is None:
        for f in doc["failures"]:
            print(f"FAILED {f['file']}: {f['error']}", file=sys.stderr)
        if not doc["records"]:
            return EXIT_DATA
        return EXIT_DATA if doc["failures"] else EXIT_OK
    return _finish(doc, out, "fit")


def _stage(args, name: str):
    config = load_config(args.config)
    out = _out_dir(args, config)
    if name == "budget":
        fit = _load_doc(args.input, "fit") if args.input else stages.run_fit(config)
        return _finish(stages.run_budget(config, fit), out, name)
    if name == "extract":
        budget = _load_doc(args.input, "budget") if args.input else stages.run_budget(config, stages.run_fit(config))
        return _finish(stages.run_extract(config, budget), out, name)
    if name == "uncertainty":
        if args.input:
            extract = _load_doc(args.input, "extract")
        else:
            extract = stages.run_extract(config, stages.run_budget(config, stages.run_fit(config)))
        return _finish(stages.run_uncertainty(config, extract), out, name)
    if name == "photons":
        budget = _load_doc(args.input, "budget") if args.input else stages.run_budget(config, stages.run_fit(config))
        return _finish(stages.run_photons(config, budget), out, name)
    raise AssertionError(name)


def cmd_pipeline(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    doc = stages.run_pipeline(config)
    written = report.write_report(doc, out, figures=not args.no_figures)
    for f in doc["failures"]:
        log.warning("%s: %s", f["file"], f["error"])
    print(report.text_report(doc) if args.verbose else
          f"pipeline: {len(doc['records'])} records, {len(doc['failures'])} failures, "
          f"{len(written)} files -> {out}")
    if not doc["records"]:
        return EXIT_DATA
    return EXIT_DATA if doc["failures"] else EXIT_OK


def cmd_synth(args) -> int:
    if args.f_res_hz is not None or args.q_loaded is not None:
        if args.f_res_hz is None or args.q_loaded is None:
            raise UsageError("a single trace needs both --f-res-hz and --q-loaded")
        model = ResonatorModel(args.f_res_hz, args.q_loaded, args.amplitude, args.detuning)
        grid = frequency_grid(args.f_res_hz, args.q_loaded, args.span, args.points)
        trace = synth_s21(model, grid, args.sigma, args.seed)
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix.lower() == ".csv":
            path.write_text(write_csv_trace(trace))
        else:
            comment = f" synthetic S21: f_res = {args.f_res_hz!r} Hz, Q_L = {args.q_loaded!r}, sigma = {args.sigma!r}"
            path.write_text(write_touchstone(document_from_trace(trace, comments=(comment,))))
        print(f"synth: wrote {path}")
        return EXIT_OK
    sheet = load_reference_sheet(args.sheet)
    ds = dataset.generate(args.out, sheet, include_hom=not args.no_hom, points=args.points, sigma=args.sigma,
                          seed=args.seed)
    print(f"synth: {len(ds.points)} traces and {ds.config_path}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    try:
        sheet = load_reference_sheet(args.sheet)
    except (OSError, ReferenceSheetError) as exc:
        print(f"selfcheck: {exc}", file=sys.stderr)
        return EXIT_DATA
    result = self_check(sheet)
    print(result.format(verbose=args.verbose or not result.passed))
    return EXIT_OK if result.passed else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srfdielectric",
                                     description="Dielectric characterization from SRF cavity transmission traces.")
    parser.add_argument("-v", "--verbose", action="store_true", help="more output")
    sub = parser.add_subparsers(dest="verb", metavar="verb")

    def verbose(p):
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="more output")

    p = sub.add_parser("fit", help="fit resonances in trace files")
    p.add_argument("files", nargs="*", help=".s2p/.s1p or .csv traces")
    p.add_argument("--config", help="run config; fits every listed input instead of FILES")
    p.add_argument("--parameter", default="S21", help="S-parameter to fit (default S21)")
    p.add_argument("--no-background", action="store_true", help="do not fit a complex background")
    p.add_argument("--out", help="directory for fit.json")
    verbose(p)
    p.set_defaults(func=cmd_fit)

    for name, upstream, text in (("budget", "fit", "Q budget from fit results"),
                                 ("extract", "budget", "loss tangents and permittivity"),
                                 ("uncertainty", "extract", "uncertainty propagation"),
                                 ("photons", "budget", "photon-number calibration and loss-channel trends")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.add_argument("--input", help=f"{upstream}.json from the previous stage (recomputed if omitted)")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        verbose(p)
        p.set_defaults(func=lambda a, _n=name: _stage(a, _n))

    p = sub.add_parser("pipeline", help="run every stage and write the report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    verbose(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("synth", help="write synthetic traces")
    p.add_argument("--out", required=True, help="dataset directory, or trace path with --f-res-hz/--q-loaded")
    p.add_argument("--sheet", help="reference sheet JSON (default: bundled)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0, help="noise std per real/imag component")
    p.add_argument("--points", type=int, default=801)
    p.add_argument("--no-hom", action="store_true", help="leave out the higher-order mode")
    p.add_argument("--f-res-hz", type=float)
    p.add_argument("--q-loaded", type=float)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--detuning", type=float, default=0.0, help="detuning angle, rad")
    p.add_argument("--span", type=float, default=10.0, help="span in bandwidths")
    verbose(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("selfcheck", help="verify the bundled reference numbers")
    p.add_argument("--sheet", help="reference sheet JSON (default: bundled)")
    verbose(p)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.verb is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"{parser.prog} {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"{parser.prog} {args.verb}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
