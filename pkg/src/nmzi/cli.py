"""Command-line entry point: ``nmzi run|validate-spec|evaluate|presets``.

Exit codes: 0 success, 2 invalid input (nothing written), 3 a run finished
but at least one optimization found no feasible point (the best infeasible
result is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from nmzi import __version__, circuit, experiments, kernels
from nmzi.fock import TAIL_TOLERANCE, CutoffError, poisson_tail, required_cutoff
from nmzi.observables import REPORT_FIELDS, format_value
from nmzi.optimizer import KERR_BOUNDS, LINEAR_BOUNDS, THETA_BOUNDS, Objective, evaluate_spec

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3

DEFAULT_OUT = "runs"


def _versions():
    return {
        "nmzi": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def write_outputs(cfg, output, out_dir, wall_time):
    """Write ``<exp>.csv``, ``<exp>.manifest.json``, ``<exp>.runlog.csv`` and circuits."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = cfg.experiment
    paths = {"table": out_dir / f"{name}.csv", "manifest": out_dir / f"{name}.manifest.json"}
    paths["table"].write_text(output.csv_text(), encoding="utf-8")
    if output.runlog:
        paths["runlog"] = out_dir / f"{name}.runlog.csv"
        paths["runlog"].write_text(output.runlog_text(), encoding="utf-8")
    circuit_paths = []
    if output.circuits:
        cdir = out_dir / f"{name}_circuits"
        cdir.mkdir(exist_ok=True)
        for tag, cf in output.circuits.items():
            path = cdir / f"{tag}.circuit"
            circuit.save(cf, path)
            circuit_paths.append(str(path.relative_to(out_dir)))
    manifest = {
        "experiment": name,
        "seed": cfg.seed,
        "config": cfg.as_dict(),
        "config_text": cfg.to_text(),
        "versions": _versions(),
        "backend": kernels.BACKEND,
        "wall_time_s": wall_time,
        "columns": list(output.columns),
        "rows": len(output.rows),
        "infeasible_points": [str(p) for p in output.infeasible],
        "summary": output.summary,
        "circuits": circuit_paths,
    }
    paths["manifest"].write_text(json.dumps(_json_safe(manifest), indent=2) + "\n", encoding="utf-8")
    return paths


def _overrides(args):
    out = {}
    for key in ("seed", "budget", "restarts", "threads"):
        value = getattr(args, key)
        if value is not None:
            out[key] = value
    return out


def cmd_run(args):
    try:
        if args.config:
            text = Path(args.config).read_text(encoding="utf-8")
            cfg = experiments.parse_config(text, _overrides(args))
        else:
            cfg = experiments.preset(args.preset, **_overrides(args))
    except (experiments.ConfigError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = args.out or os.environ.get("NMZI_OUT_DIR") or DEFAULT_OUT
    start = time.perf_counter()
    try:
        output = experiments.run(cfg)
    except (experiments.ConfigError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    wall = time.perf_counter() - start
    paths = write_outputs(cfg, output, out_dir, wall)
    print(output.csv_text(), end="")
    print(f"wrote {paths['table']} ({len(output.rows)} rows, {wall:.1f} s, backend {kernels.BACKEND})",
          file=sys.stderr)
    if output.infeasible:
        print(f"infeasible: {', '.join(map(str, output.infeasible))}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def validate_spec(text):
    """Return ``(circuit_file, errors, warnings)`` for circuit-file text."""
    try:
        cf = circuit.loads(text)
    except circuit.SpecFormatError as exc:
        return None, [str(exc)], []
    errors, warnings = [], []
    ranges = (("theta", THETA_BOUNDS), ("linear_phi", LINEAR_BOUNDS), ("kerr_phi", KERR_BOUNDS))
    for i, e in enumerate(cf.spec.elements):
        for (name, (lo, hi)), value in zip(ranges, e.as_tuple()):
            if not lo <= value <= hi:
                warnings.append(f"record {i}, field {name!r}: {value!r} outside [{lo:.6g}, {hi:.6g}]")
    deficit = poisson_tail(cf.alpha, cf.n_max)
    if deficit >= TAIL_TOLERANCE:
        try:
            need = required_cutoff(cf.alpha)
        except CutoffError:
            need = None
        errors.append(f"field 'n_max': {cf.n_max} drops {deficit:.3e} of the input (need >= {need})")
    canonical = circuit.dumps(cf)
    again = circuit.loads(canonical)
    if again != cf or circuit.dumps(again) != canonical:
        errors.append("round trip through the file format is not exact")
    if canonical != text:
        warnings.append("file is not in canonical form (re-saving would change its bytes)")
    return cf, errors, warnings


def cmd_validate_spec(args):
    try:
        text = Path(args.path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    cf, errors, warnings = validate_spec(text)
    for w in warnings:
        print(f"warning: {w}")
    for e in errors:
        print(f"error: {e}")
    if errors:
        return EXIT_INVALID
    print(f"ok: {circuit.FORMAT_TAG}, {len(cf.spec)} elements, |alpha|^2={abs(cf.alpha) ** 2:.12g}, "
          f"n_max={cf.n_max}")
    return EXIT_OK


def cmd_evaluate(args):
    try:
        cf = circuit.load(args.path)
        target = experiments.parse_grid(args.target) if args.target else None
        objective = Objective("fidelity", target=target) if target else None
        rep, _, _ = evaluate_spec(cf.spec, cf.alpha, objective, cutoff=cf.cutoff)
    except (circuit.SpecFormatError, CutoffError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for name, value in zip(REPORT_FIELDS, rep.row()):
        print(f"{name} = {format_value(value)}")
    return EXIT_OK


def cmd_presets(args):
    if args.name:
        try:
            print(experiments.preset(args.name).to_text(), end="")
        except experiments.ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    else:
        for name in experiments.PRESETS:
            print(name)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="nmzi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log optimizer progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a preset or a config file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=tuple(experiments.PRESETS))
    src.add_argument("--config", help="config file (see docs/config_grammar.md)")
    p.add_argument("--out", help=f"output directory (default $NMZI_OUT_DIR or ./{DEFAULT_OUT})")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, help="forward simulations per optimization")
    p.add_argument("--restarts", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-spec", help="check a circuit file")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate_spec)

    p = sub.add_parser("evaluate", help="simulate a circuit file and print its observables")
    p.add_argument("path")
    p.add_argument("--target", help="superposition coefficients, e.g. '1, 1'")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("presets", help="list presets or print one as config text")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
