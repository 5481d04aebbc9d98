"""Command-line entry point.

Subcommands: gen, apq, bmo, opnorm, orlicz, sparse, verify, dump.  Every
output is a JSON document with a ``schema`` tag; errors are written to stderr
as one JSON object.

Exit codes: 0 success, 1 a hard assertion failed, 2 usage or malformed
input, 3 a numerical failure (degenerate matrix, solver did not converge).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import characteristics as ch
from . import io
from .errors import ConvergenceError, DegeneracyError, InvariantError, MWLabError, ParameterError
from .field import (SYMBOL_FAMILIES, VECTOR_FAMILIES, WEIGHT_FAMILIES, ExponentTriple, MatrixField,
                    VectorField, generate_symbol, generate_vector, generate_weight, identity_field)
from .grid import CubeSet, GridSpec
from .norms import (YoungFunction, bq_integral_probe, build_sparse_family, opnorm,
                    orlicz_bump_constants)
from .operators import build_averaging, build_commutator, build_ialpha, conjugate
from .verify import SUITES, BatchConfig, run_suite

EXIT_OK, EXIT_HARD, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
QUANTITIES = ("classic", "tilde", "dual", "jn1", "jn2", "jn3", "jn4", "jn5", "jn6", "nu")
OPERATORS = ("ialpha", "avg", "commutator", "conjugated")


class UsageError(ParameterError):
    pass


def _param(text: str):
    """``key=value`` with a JSON value when it parses, the raw string otherwise."""
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _add_exponents(p):
    g = p.add_argument_group("exponents (give --q and one of --p, --alpha)")
    g.add_argument("--p", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--alpha", type=float)


def _exponents(args, d: int) -> ExponentTriple:
    if args.q is None or (args.p is None) == (args.alpha is None):
        raise UsageError("give --q together with exactly one of --p, --alpha")
    if args.p is not None:
        return ExponentTriple.from_pq(args.p, args.q, d)
    return ExponentTriple.from_alpha_q(args.alpha, args.q, d)


def _load(path, expect):
    obj = io.field_from_doc(io.read(path))
    if not isinstance(obj, expect):
        raise UsageError(f"{path} does not hold a {expect.__name__}")
    return obj


def _weights(args):
    U = _load(args.U, MatrixField)
    V = _load(args.V, MatrixField) if args.V else U
    return U, V


def _result(command: str, payload: dict) -> dict:
    return {"schema": io.RESULT_SCHEMA, "command": command, **payload}


def _over(args, grid):
    if getattr(args, "cells", None) is None:
        return None
    return CubeSet(grid.standard, args.cells)


# -- subcommands ----------------------------------------------------------------

def cmd_gen(args) -> int:
    grid = GridSpec(args.d, args.L)
    params = dict(args.param or [])
    if args.kind == "weight":
        F = generate_weight(args.seed, grid, args.n, args.family, params)
    elif args.kind == "symbol":
        F = generate_symbol(args.seed, grid, args.n, args.family, params)
    else:
        F = generate_vector(args.seed, grid, args.n, args.family, params)
    io.write(io.field_doc(F), args.out)
    return EXIT_OK


def cmd_apq(args) -> int:
    W = _load(args.W, MatrixField)
    e = _exponents(args, W.grid.d)
    c = ch.apq_characteristic(W, e, over=_over(args, W.grid), max_level=args.max_level)
    io.write(_result("apq", {"characteristic": c.to_dict()}), args.out)
    return EXIT_OK


def cmd_bmo(args) -> int:
    U, V = _weights(args)
    B = _load(args.B, MatrixField)
    e = _exponents(args, U.grid.d)
    c = ch.characteristic_by_name(args.quantity, U, V, B, e, _over(args, U.grid), args.max_level)
    io.write(_result("bmo", {"quantity": args.quantity, "characteristic": c.to_dict()}), args.out)
    return EXIT_OK


def _operator(args):
    U = _load(args.U, MatrixField) if args.U else None
    V = _load(args.V, MatrixField) if args.V else U
    B = _load(args.B, MatrixField) if args.B else None
    ref = U or B
    if ref is not None:
        grid, n = ref.grid, ref.n
    elif args.d is not None and args.L is not None:
        grid, n = GridSpec(args.d, args.L), args.n
    else:
        raise UsageError("give a field file or both --d and --L")
    e = _exponents(args, grid.d)
    if args.op == "ialpha":
        T = build_ialpha(grid, e, n)
    elif args.op == "avg":
        cells = args.cells if args.cells is not None else np.arange(grid.n_cells)
        T = build_averaging(CubeSet(grid.standard, cells), e, grid, n)
    else:
        if B is None:
            raise UsageError(f"--op {args.op} needs --B")
        T = build_commutator(build_ialpha(grid, e, n), B)
        if args.op == "conjugated":
            if U is None:
                raise UsageError("--op conjugated needs --U (and optionally --V)")
            T = conjugate(T, V, U, e)
            U = V = None            # weights are already absorbed
    return T, U, V, e


def cmd_opnorm(args) -> int:
    T, U, V, e = _operator(args)
    est = opnorm(T, U, V, e, restarts=args.restarts, seed=args.seed)
    if args.operator_out:
        io.write(io.operator_doc(T), args.operator_out)
    io.write(_result("opnorm", {"operator": args.op, "exponents": e.as_dict(),
                                "estimate": est.to_dict()}), args.out)
    return EXIT_OK


def cmd_orlicz(args) -> int:
    U, V = _weights(args)
    B = _load(args.B, MatrixField)
    e = _exponents(args, U.grid.d)
    C, D = YoungFunction.parse(args.C), YoungFunction.parse(args.D)
    k1, k2 = orlicz_bump_constants(U, V, B, e, C, D, _over(args, U.grid), args.max_level)
    payload = {"C": C.label(), "D": D.label(), "kappa1": k1.to_dict(), "kappa2": k2.to_dict()}
    if args.probe:
        schedule = dict(args.probe)
        payload["probe"] = {}
        for name, phi in (("C", C), ("D", D)):
            r = bq_integral_probe(phi, schedule)
            payload["probe"][name] = {"verdict": r.verdict, "value": r.value,
                                      "shells": r.shells, "ratios": r.ratios,
                                      "schedule": r.schedule}
    io.write(_result("orlicz", payload), args.out)
    return EXIT_OK


def cmd_sparse(args) -> int:
    f = _load(args.f, VectorField)
    phi = YoungFunction.parse(args.phi)
    sp = build_sparse_family(f, phi, args.a)
    payload = {
        "phi": phi.label(), "a": sp.a,
        "stopping": {str(k): [c.label() for c in v] for k, v in sorted(sp.stopping.items())},
        "E": {P.label(): {"size": E.size, "cube_cells": P.n_cells} for P, E in sp.E.items()},
        "min_fraction": sp.min_fraction(),
    }
    io.write(_result("sparse", payload), args.out)
    return EXIT_OK


def load_config(path: str) -> BatchConfig:
    if path == "default":
        return BatchConfig()
    doc = io.read(path)
    if doc.get("schema") != io.CONFIG_SCHEMA:
        raise UsageError(f"config schema must be {io.CONFIG_SCHEMA!r}, got {doc.get('schema')!r}")
    return BatchConfig.from_dict(doc)


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    rep = run_suite(args.suite, cfg)
    io.write(rep.to_doc(), args.report)
    return EXIT_OK if rep.hard_ok else EXIT_HARD


def cmd_dump(args) -> int:
    schema, obj = io.load_artifact(args.input)
    io.write(io.artifact_doc(schema, obj), args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mwlab", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a weight, symbol or vector field")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--kind", choices=("weight", "symbol", "vector"), default="weight")
    p.add_argument("--family", required=True,
                   help=f"weight: {', '.join(WEIGHT_FAMILIES)}; symbol: {', '.join(SYMBOL_FAMILIES)};"
                        f" vector: {', '.join(VECTOR_FAMILIES)}")
    p.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("apq", help="A_{p,q} characteristic of a weight file")
    p.add_argument("--W", required=True, help="weight field file")
    _add_exponents(p)
    _add_region(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_apq)

    p = sub.add_parser("bmo", help="weighted BMO-type quantity of a symbol")
    _add_fields(p)
    p.add_argument("--quantity", choices=QUANTITIES, default="tilde")
    _add_exponents(p)
    _add_region(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bmo)

    p = sub.add_parser("opnorm", help="weighted operator-norm estimate")
    p.add_argument("--op", choices=OPERATORS, default="ialpha")
    p.add_argument("--U", help="source weight (omit for the unweighted norm)")
    p.add_argument("--V", help="target weight (defaults to --U)")
    p.add_argument("--B", help="symbol, for commutator and conjugated")
    p.add_argument("--d", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--cells", type=int, nargs="+", help="averaging set (default: all cells)")
    p.add_argument("--restarts", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    _add_exponents(p)
    p.add_argument("--operator-out", help="also write the assembled operator")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_opnorm)

    p = sub.add_parser("orlicz", help="Orlicz bump constants kappa1, kappa2")
    _add_fields(p)
    p.add_argument("--C", default="power:2", help="Young function, e.g. power:4 or powerlog:4,3.5")
    p.add_argument("--D", default="power:2")
    p.add_argument("--probe", type=_param, action="append", metavar="KEY=VALUE",
                   help="run the integral-class probe with keys a, b, c, shells")
    _add_exponents(p)
    _add_region(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_orlicz)

    p = sub.add_parser("sparse", help="sparse stopping family of a vector field")
    p.add_argument("--f", required=True, help="vector field file")
    p.add_argument("--phi", default="power:2", help="Young function for the local norms")
    p.add_argument("--a", type=float, help="stopping parameter, > 2^(d+1)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sparse)

    p = sub.add_parser("verify", help="run an experiment suite")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--config", default="default", help="config file, or 'default'")
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dump", help="reload and re-serialize an artifact")
    p.add_argument("input")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_dump)
    return ap


def _add_fields(p):
    p.add_argument("--U", required=True, help="weight U")
    p.add_argument("--V", help="weight V (defaults to U)")
    p.add_argument("--B", required=True, help="symbol B")


def _add_region(p):
    p.add_argument("--max-level", type=int, help="finest cube level to include")
    p.add_argument("--cells", type=int, nargs="+", help="restrict to this cell set")


def _error(kind: str, exc: BaseException) -> None:
    doc = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConvergenceError):
        doc["diagnostics"] = io.to_jsonable(exc.diagnostics)
    sys.stderr.write(json.dumps(doc) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DegeneracyError, ConvergenceError, InvariantError) as exc:
        _error("numerical", exc)
        return EXIT_NUMERIC
    except (ParameterError, OSError, KeyError, TypeError, ValueError) as exc:
        _error("usage", exc)
        return EXIT_USAGE
    except MWLabError as exc:
        _error("numerical", exc)
        return EXIT_NUMERIC


def run(argv=None) -> int:
    """Return the exit code; argparse's own usage errors map to 2 as well."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
