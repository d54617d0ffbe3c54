"""Command-line front end: ``ebsm check|codegen|simulate|coverage|fixtures``.

Exit codes: 0 ok, 1 model or guidance errors, 2 usage error, 3 runtime
simulation error.  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from importlib import resources

from . import __version__
from .ada import source_files
from .analyzer import check_guidance, check_model
from .codegen import GuidanceConfig, instrument, translate_taskbody
from .parser import has_errors, parse_guidance, parse_model
from .simulator import SimConfig, SimTrace, SimulationError, coverage_report, run_simulation

EXIT_OK, EXIT_MODEL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

FIXTURES = ("stop_start.ebsm", "run1.guidance.json", "run2.guidance.json")


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


def fixture_path(name: str):
    return resources.files("ebsm").joinpath("fixtures", name)


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as exc:
        print(f"ebsm: cannot read {path}: {exc.strerror}", file=sys.stderr)
        raise _Exit(EXIT_USAGE)
    except UnicodeDecodeError:
        print(f"ebsm: {path} is not UTF-8 text", file=sys.stderr)
        raise _Exit(EXIT_USAGE)


def _report(path: str, diags):
    for d in diags:
        print(f"{path}:{d}", file=sys.stderr)


def _load_model(path: str):
    result = parse_model(_read(path))
    if isinstance(result, list):
        _report(path, result)
        raise _Exit(EXIT_MODEL)
    return result


def _load_guidance(path, model) -> GuidanceConfig:
    if path is None:
        return GuidanceConfig()
    result = parse_guidance(_read(path))
    if isinstance(result, list):
        _report(path, result)
        raise _Exit(EXIT_MODEL)
    diags = list(result.warnings) + check_guidance(model, result)
    _report(path, diags)
    if has_errors(diags):
        raise _Exit(EXIT_MODEL)
    return result


def _write_all(out_dir: str, files: dict):
    """Write every file or none: stage to temporaries, then rename."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print(f"ebsm: cannot create {out_dir}: {exc.strerror}", file=sys.stderr)
        raise _Exit(EXIT_USAGE)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append((tmp, os.path.join(out_dir, name)))
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        for tmp, final in staged:
            os.replace(tmp, final)
    except OSError as exc:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        print(f"ebsm: cannot write to {out_dir}: {exc.strerror}", file=sys.stderr)
        raise _Exit(EXIT_USAGE)
    return [final for _, final in staged]


def cmd_check(args) -> int:
    model = _load_model(args.model)
    guidance = None
    if args.guidance is not None:
        guidance = _load_guidance(args.guidance, model)
    analysis = check_model(model, guidance, bound=args.bound)
    _report(args.model, analysis.diagnostics)
    if args.format == "json":
        sys.stdout.write(json.dumps(analysis.to_dict(), indent=1) + "\n")
    else:
        sys.stdout.write(analysis.text())
    return EXIT_OK if analysis.ok else EXIT_MODEL


def _program(args):
    model = _load_model(args.model)
    guidance = _load_guidance(args.guidance, model)
    return model, guidance, instrument(translate_taskbody(model), guidance)


def cmd_codegen(args) -> int:
    _, _, program = _program(args)
    for path in _write_all(args.out, source_files(program, args.seed)):
        print(path)
    return EXIT_OK


def cmd_simulate(args) -> int:
    _, guidance, program = _program(args)
    try:
        trace, coverage = run_simulation(program, SimConfig(args.seed, args.cycles, guidance))
    except SimulationError as exc:
        print(f"ebsm: simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_all(args.out, {
        "trace.txt": trace.text(),
        "trace.json": trace.to_json(),
        "coverage.json": coverage.to_json(),
    })
    if args.format == "json":
        sys.stdout.write(coverage.to_json())
    else:
        sys.stdout.write(coverage.text())
    return EXIT_OK


def cmd_coverage(args) -> int:
    model = _load_model(args.model)
    try:
        trace = SimTrace.from_dict(json.loads(_read(args.trace)))
    except (ValueError, KeyError, TypeError) as exc:
        print(f"ebsm: {args.trace} is not a trace document: {exc}", file=sys.stderr)
        return EXIT_MODEL
    if trace.model != model.name:
        print(f"ebsm: trace is for model {trace.model}, not {model.name}", file=sys.stderr)
        return EXIT_MODEL
    try:
        report = coverage_report(trace, model)
    except KeyError as exc:
        print(f"ebsm: trace names unknown transition {exc.args[0]}", file=sys.stderr)
        return EXIT_MODEL
    if args.format == "json":
        sys.stdout.write(report.to_json())
    else:
        sys.stdout.write(report.text())
    return EXIT_OK


def cmd_fixtures(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for name in FIXTURES:
        with resources.as_file(fixture_path(name)) as src:
            dest = os.path.join(args.out, name)
            shutil.copyfile(src, dest)
            print(dest)
    return EXIT_OK


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _cycles(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("cycles must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebsm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ebsm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, guidance=True, fmt=True):
        p.add_argument("model", help="model file (.ebsm)")
        if guidance:
            p.add_argument("--guidance", metavar="PATH", help="guidance document (JSON)")
        if fmt:
            p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("check", help="parse and statically check a model")
    common(p)
    p.add_argument("--bound", type=int, default=10 ** 7,
                   help="largest guard domain space to enumerate")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("codegen", help="emit Ada source")
    common(p, fmt=False)
    p.add_argument("--seed", type=_u64, default=1, help="PRNG seed baked into the program")
    p.add_argument("--out", default="out", metavar="DIR")
    p.set_defaults(func=cmd_codegen)

    p = sub.add_parser("simulate", help="run a seeded simulation")
    common(p)
    p.add_argument("--seed", type=_u64, default=1)
    p.add_argument("--cycles", type=_cycles, default=100)
    p.add_argument("--out", default="out", metavar="DIR")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coverage", help="transition coverage of a stored trace")
    common(p, guidance=False)
    p.add_argument("--trace", required=True, metavar="PATH", help="trace.json from simulate")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("fixtures", help="copy the bundled stop-start model and guidance files")
    p.add_argument("out", metavar="DIR")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Exit as exc:
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
