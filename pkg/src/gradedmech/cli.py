"""``gradedmech`` command-line front end.

Exit status: 0 on success, 2 when a structure check fails (the witness is
printed), 1 on usage, parse or runtime errors. Results go to ``--out`` or
standard output; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, csvio, dirac
from ._parse import ParseError
from .graded import GradedContext, GradedVectorField, is_q_structure
from .integrators import METHODS, State, StepError, load_system, simulate

logger = logging.getLogger("gradedmech")

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2

_DEFAULT_METHOD = {"hamiltonian": "verlet", "lagrangian": "dirac1", "port": "midpoint"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output file (standard output if omitted)")
    common.add_argument("--seed", type=int, default=dirac.DEFAULT_SEED, help="seed for sampled checks")
    common.add_argument("--samples", type=int, default=dirac.DEFAULT_SAMPLES, help="number of sample points for rank checks")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")

    parser = _Parser(prog="gradedmech", description="Graded-geometry checks and structure-preserving integrators.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check-q", parents=[common], formatter_class=fmt, help="test whether a vector field is a Q-structure")
    p.add_argument("context", type=Path, help="context file, one 'name degree' per line")
    p.add_argument("field", type=Path, help="field file, one 'coordinate = polynomial' per line")

    p = sub.add_parser("check-dirac", parents=[common], formatter_class=fmt, help="certify an (almost) Dirac structure")
    p.add_argument("spec", type=Path, help="Dirac spec file")
    p.add_argument("--level", choices=("almost", "dirac"), default="dirac", help="stop after the isotropy/rank check, or also test integrability")

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt, help="integrate a system file and write the trajectory CSV")
    p.add_argument("system", type=Path, help="system spec file")
    p.add_argument("--method", choices=sorted(METHODS), default=None, help="stepper (default depends on the system: verlet, dirac1 or midpoint)")
    p.add_argument("--h", type=float, default=1e-2, help="step size")
    p.add_argument("--T", type=float, default=1.0, help="final time")
    p.add_argument("--stride", type=int, default=1, help="record every stride-th step")
    p.add_argument("--q0", type=_vector, default=None, help="initial positions (or x for port systems); overrides [initial]")
    p.add_argument("--p0", type=_vector, default=None, help="initial momenta or velocities; overrides [initial]")
    p.add_argument("--t0", type=float, default=None, help="initial time; overrides [initial]")

    p = sub.add_parser("bench-sleigh", parents=[common], formatter_class=fmt, help="sleigh error table against the reduced RK4 reference")
    p.add_argument("--m", type=float, default=bench.DEFAULT_PARAMS.m, help="mass")
    p.add_argument("--a", type=float, default=bench.DEFAULT_PARAMS.a, help="contact point to centre of mass distance")
    p.add_argument("--I", type=float, default=bench.DEFAULT_PARAMS.I, help="moment of inertia")
    p.add_argument("--h", type=float, default=1e-3, help="step size")
    p.add_argument("--T", type=float, default=10.0, help="final time")
    p.add_argument("--q0", type=_vector, default="0,0,0", help="initial (x, y, theta)")
    p.add_argument("--v0", type=_vector, default="1,0,1", help="initial (vx, vy, omega)")
    p.add_argument("--diagnostics", type=Path, default=None, help="directory for per-method trajectory CSVs")

    p = sub.add_parser("bench-oscillator", parents=[common], formatter_class=fmt, help="energy drift of Euler, symplectic Euler and Verlet")
    p.add_argument("--h", type=float, default=1e-2, help="step size")
    p.add_argument("--T", type=float, default=1000.0, help="final time")
    p.add_argument("--diagnostics", type=Path, default=None, help="directory for per-method trajectory CSVs")
    return parser


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, newline="")


def _read_field(ctx: GradedContext, path: Path) -> GradedVectorField:
    comps = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, rhs = line.partition("=")
        name = name.strip()
        if not sep or name not in ctx:
            raise ParseError(f"{path}:{lineno}: expected '<coordinate> = <polynomial>'")
        if name in comps:
            raise ParseError(f"{path}:{lineno}: component {name!r} given twice")
        try:
            comps[name] = ctx.parse(rhs)
        except ParseError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return GradedVectorField(ctx, comps)


def _check_q(args) -> int:
    ctx = GradedContext.from_file(args.context)
    verdict = is_q_structure(_read_field(ctx, args.field))
    if verdict:
        _write("Q-structure: yes\n", args.out)
        return EXIT_OK
    if verdict.reason == "degree":
        text = f"Q-structure: no\nreason: field has degree {verdict.witness}, expected 1\n"
    else:
        text = f"Q-structure: no\nreason: {verdict.reason}\nwitness: 1/2 [Q,Q] along {verdict.where} = {verdict.witness}\n"
    _write(text, args.out)
    return EXIT_CHECK_FAILED


def _check_dirac(args) -> int:
    spec = dirac.load_dirac_spec(args.spec)
    check = dirac.isotropy_and_rank_check if args.level == "almost" else dirac.integrability_check
    verdict = check(spec, samples=args.samples, seed=args.seed)
    lines = [f"structure: {verdict.label}"]
    if not verdict:
        lines.append(f"reason: {verdict.reason}")
        if verdict.where is not None:
            lines.append(f"where: {verdict.where}")
        lines.append(f"witness: {verdict.witness}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK if verdict else EXIT_CHECK_FAILED


def _simulate(args) -> int:
    system, initial = load_system(args.system)
    if args.q0 is not None:
        second = args.p0 if args.p0 is not None else (None if initial is None else initial.p)
        initial = State(0.0 if initial is None else initial.t, args.q0, second)
    elif args.p0 is not None:
        if initial is None:
            raise UsageError("--p0 needs --q0 or an [initial] section")
        initial = State(initial.t, initial.q, args.p0)
    if initial is None:
        raise UsageError("no initial state: add an [initial] section or pass --q0/--p0")
    if args.t0 is not None:
        initial = State(args.t0, initial.q, initial.p)
    n = system.n
    if len(initial.q) != n or (system.kind != "port" and (initial.p is None or len(initial.p) != n)):
        raise UsageError(f"initial state must have {n} positions" + ("" if system.kind == "port" else " and velocities/momenta"))
    method = args.method or _DEFAULT_METHOD[system.kind]
    logger.info("simulating %r with %s, h=%g, T=%g", system, method, args.h, args.T)
    rec = simulate(system, method, initial, args.h, args.T, args.stride)
    _write(csvio.record_to_csv(rec), args.out)
    return EXIT_OK


def _dump(records: dict, directory: Path | None) -> None:
    if directory is None:
        return
    directory.mkdir(parents=True, exist_ok=True)
    for name, rec in records.items():
        csvio.emit_csv(rec, directory / f"{name}.csv")


def _bench_sleigh(args) -> int:
    params = bench.SleighParams(args.m, args.a, args.I)
    s0 = State(0.0, args.q0, args.v0)
    if len(s0.q) != 3 or len(s0.p) != 3:
        raise UsageError("--q0 and --v0 need three entries each")
    records = {} if args.diagnostics else None
    table = bench.run_sleigh_benchmark(params, s0, args.h, args.T, records)
    logger.info("\n%s", table)
    _write(csvio.table_to_csv(table), args.out)
    _dump(records or {}, args.diagnostics)
    return EXIT_OK


def _bench_oscillator(args) -> int:
    records = {} if args.diagnostics else None
    table = bench.oscillator_drift_study(args.h, args.T, records)
    logger.info("\n%s", table)
    _write(csvio.table_to_csv(table), args.out)
    _dump(records or {}, args.diagnostics)
    return EXIT_OK


_COMMANDS = {
    "check-q": _check_q,
    "check-dirac": _check_dirac,
    "simulate": _simulate,
    "bench-sleigh": _bench_sleigh,
    "bench-oscillator": _bench_oscillator,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except (ParseError, UsageError, ValueError, TypeError, OSError, StepError) as exc:
        print(f"gradedmech {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
