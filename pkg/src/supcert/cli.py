"""Command-line front end.

Exit codes: 0 success (region R1, verified plan, passing checks), 1 input
error, 2 refusal or failed verification, 3 unsupported sign pattern.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .basis import DEFAULT_TOL, build_basis, det_gram, independence_range
from .conditions import classify_region
from .errors import ConversionRefused, RankIncrease, SupcertError, UnsupportedCase
from .kraus import plan as make_plan
from .oracle import GridSpec, census_csv_lines, exhaustive_condition_scan, verify_plan
from .state import l1_norm, maximal_state_for, superposition_rank, tilde

EXIT_OK, EXIT_INPUT, EXIT_REFUSED, EXIT_UNSUPPORTED = 0, 1, 2, 3


def default_tol() -> float:
    raw = os.environ.get("SUPCERT_TOL")
    if raw is None or raw.strip() == "":
        return DEFAULT_TOL
    try:
        value = float(raw)
    except ValueError:
        raise SystemExit(f"SUPCERT_TOL must be a number, got {raw!r}")
    if not value > 0:
        raise SystemExit("SUPCERT_TOL must be positive")
    return value


def _emit(obj) -> None:
    sys.stdout.write(io.dumps(obj))


def _fail(message: str, code: int = EXIT_INPUT) -> int:
    print(f"supcert: {message}", file=sys.stderr)
    return code


def _state_summary(state) -> dict:
    return {
        "coeffs": state.coeffs.tolist(),
        "tilde": tilde(state).values.tolist(),
        "l1": l1_norm(state),
        "rank": superposition_rank(state),
    }


def _check_one(path: Path, tol: float):
    basis, psi, phi = io.load_problem(path, tol)
    report = classify_region(psi, phi, tol)
    out = report.to_dict()
    out["states"] = {"psi": _state_summary(psi), "phi": _state_summary(phi)}
    return out, report.region == "R1"


def cmd_check(args) -> int:
    if args.batch:
        files = sorted(Path(args.batch).glob("*.json"))
        # Overall exit code is the worst per-file code (unsupported > refused > input error).
        results, code = {}, EXIT_OK
        for path in files:
            try:
                out, ok = _check_one(path, args.tol)
                file_code = EXIT_OK if ok else EXIT_REFUSED
            except UnsupportedCase as exc:
                out, file_code = {"error": f"unsupported case: {exc}"}, EXIT_UNSUPPORTED
            except (SupcertError, OSError, json.JSONDecodeError) as exc:
                out, file_code = {"error": str(exc)}, EXIT_INPUT
            results[path.name] = out
            code = max(code, file_code)
        _emit({"results": results})
        return code
    if args.input is None:
        return _fail("check needs an input file or --batch DIR")
    try:
        out, ok = _check_one(Path(args.input), args.tol)
    except UnsupportedCase as exc:
        return _fail(f"unsupported case: {exc}", EXIT_UNSUPPORTED)
    except (SupcertError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    _emit(out)
    return EXIT_OK if ok else EXIT_REFUSED


def cmd_plan(args) -> int:
    try:
        basis, psi, phi = io.load_problem(args.input, args.tol)
    except (SupcertError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    try:
        plan = make_plan(basis, psi, phi, args.tol)
    except ConversionRefused as exc:
        _emit({"refused": True, "report": exc.report.to_dict()})
        return EXIT_REFUSED
    except RankIncrease as exc:
        _emit({"refused": True, "reason": str(exc)})
        return EXIT_REFUSED
    except UnsupportedCase as exc:
        return _fail(f"unsupported case: {exc}", EXIT_UNSUPPORTED)
    except SupcertError as exc:
        return _fail(str(exc), EXIT_REFUSED)
    verification = verify_plan(basis, psi, phi, plan, args.tol)
    out = io.plan_to_dict(plan)
    out["verified"] = verification.passed
    out["verification"] = verification.to_dict()
    if args.emit_ops:
        io.write_operators(args.emit_ops, plan)
    _emit(out)
    return EXIT_OK if verification.passed else EXIT_REFUSED


def cmd_verify(args) -> int:
    try:
        basis, psi, phi = io.load_problem(args.input, args.tol)
        plan = io.load_plan(args.plan)
        if args.ops:
            embedding, kraus_ops, completion = io.read_operators(args.ops)
            if embedding.shape != plan.embedding.shape:
                return _fail("operator file dimension does not match the plan")
            from dataclasses import replace

            plan = replace(
                plan,
                embedding=embedding,
                kraus_ops=tuple(kraus_ops),
                completion=tuple(completion) if plan.completion is not None or completion else None,
            )
    except (SupcertError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    if plan.d > basis.d or len(plan.source_map) != plan.d:
        return _fail(f"plan dimension {plan.d} does not fit the input dimension {basis.d}")
    report = verify_plan(basis, psi, phi, plan, args.tol)
    _emit(report.to_dict())
    if not report.passed:
        print("supcert: failing checks: " + ", ".join(report.failures), file=sys.stderr)
        return EXIT_REFUSED
    return EXIT_OK


def cmd_maximal(args) -> int:
    try:
        state = maximal_state_for(args.d, args.mu, args.sign, args.tol)
    except SupcertError as exc:
        return _fail(str(exc))
    out = {"d": args.d, "mu": args.mu, "sign": args.sign}
    out.update(_state_summary(state))
    _emit(out)
    return EXIT_OK


def _parse_mu(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise SystemExit(f"--mu must be a number or a JSON matrix, got {text!r}")


def cmd_gram(args) -> int:
    mu = _parse_mu(args.mu)
    try:
        lo, hi = independence_range(args.d)
        out = {"d": args.d, "mu": mu, "range": [lo, hi]}
        g = np.full((args.d, args.d), mu, dtype=float) if np.ndim(mu) == 0 else np.asarray(mu, dtype=float)
        if np.ndim(mu) == 0:
            np.fill_diagonal(g, 1.0)
        if g.shape != (args.d, args.d):
            return _fail(f"mu must be a number or a {args.d}x{args.d} matrix")
        out["det"] = float(np.linalg.det(g))
        out["min_eig"] = float(np.min(np.linalg.eigvalsh(0.5 * (g + g.T))))
        try:
            basis = build_basis(args.d, mu, args.tol)
            out["ok"] = True
            out["det"] = det_gram(basis)
        except SupcertError as exc:
            out["ok"] = False
            out["reason"] = str(exc)
    except (SupcertError, ValueError) as exc:
        return _fail(str(exc))
    _emit(out)
    return EXIT_OK if out["ok"] else EXIT_REFUSED


def cmd_scan(args) -> int:
    try:
        basis = build_basis(args.d, _parse_mu(args.mu), args.tol)
        extra = tuple(tuple(v) for v in json.loads(args.extra)) if args.extra else ()
        census = exhaustive_condition_scan(basis, GridSpec(args.n, extra), args.tol, workers=args.workers)
    except UnsupportedCase as exc:
        return _fail(f"unsupported case: {exc}", EXIT_UNSUPPORTED)
    except (SupcertError, ValueError) as exc:
        return _fail(str(exc))
    if args.csv:
        Path(args.csv).write_text("\n".join(census_csv_lines(census)) + "\n", encoding="utf-8")
    out = census.to_dict()
    out.update({"d": args.d, "mu": _parse_mu(args.mu), "n": args.n})
    _emit(out)
    return EXIT_OK if not census.disagreements else EXIT_REFUSED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="absolute tolerance (default: $SUPCERT_TOL or 1e-9)")

    parser = argparse.ArgumentParser(prog="supcert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="classify a state pair")
    p.add_argument("input", nargs="?", help="JSON file with basis, psi, phi")
    p.add_argument("--batch", metavar="DIR", help="check every *.json in DIR, in filename order")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plan", parents=[common], help="synthesize and verify a conversion plan")
    p.add_argument("input")
    p.add_argument("--emit-ops", metavar="PATH", help="also write the operators as a binary dump")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("verify", parents=[common], help="check a stored plan with the oracle")
    p.add_argument("plan")
    p.add_argument("input")
    p.add_argument("--ops", metavar="PATH", help="binary operator dump overriding the plan's matrices")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("maximal", parents=[common], help="print a maximal superposition state")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--sign", choices=["plus", "minus"], default="plus")
    p.set_defaults(func=cmd_maximal)

    p = sub.add_parser("gram", parents=[common], help="Gram matrix diagnostics")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mu", required=True, help="number or JSON matrix")
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("scan", parents=[common], help="region census over an angle grid")
    p.add_argument("--d", type=int, required=True, choices=[2, 3])
    p.add_argument("--mu", required=True, help="number or JSON matrix")
    p.add_argument("--n", type=int, default=50, help="angle steps per axis")
    p.add_argument("--extra", help="JSON list of additional coefficient vectors")
    p.add_argument("--csv", metavar="PATH", help="write per-pair rows for plotting")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.tol is None:
        args.tol = default_tol()
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
