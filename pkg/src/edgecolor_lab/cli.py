"""Command-line entry point: `python -m edgecolor_lab <command> [options]`.

Exit status is 0 when every asserted check passed, 1 on an assertion failure and 2 on bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
EIGEN_COMMANDS = {"jacobian", "worst-case", "trickledown", "suite"}


class InputError(Exception):
    pass


def build_digest() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def to_jsonable(x):
    """Rationals become "num/den" strings, floats keep 17 significant digits."""
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not np.isfinite(x) else float("%.17g" % x)
    if isinstance(x, complex):
        return {"re": to_jsonable(x.real), "im": to_jsonable(x.imag)}
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if hasattr(x, "to_dict"):
        return to_jsonable(x.to_dict())
    return str(x)


def fmt(x) -> str:
    if isinstance(x, Fraction):
        return to_jsonable(x)
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def emit(args, command: str, report: dict, passed: bool) -> int:
    report = {"command": command, "build": build_digest(), "seed": args.seed, "passed": passed, **report}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(to_jsonable(report), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return EXIT_OK if passed else EXIT_FAIL


def _load(args):
    from .instance import load_instance

    if not args.instance:
        raise InputError("--instance is required for this command")
    try:
        return load_instance(args.instance)
    except FileNotFoundError as exc:
        raise InputError(f"cannot read {args.instance}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid instance {args.instance}: {exc}") from exc


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise InputError("missing " + ", ".join("--" + n.replace("_", "-") for n in missing))


# ---------------------------------------------------------------------------
# commands

def cmd_count(args) -> int:
    from .exact import count

    inst, pin = _load(args)
    n = count(inst, pin, args.cap_enum)
    print(n)
    return emit(args, "count", {"count": n}, True)


def cmd_marginal(args) -> int:
    from .exact import marginal

    inst, pin = _load(args)
    edges = args.edges.split(",") if args.edges else [e for e in inst.edge_ids if e not in pin]
    unknown = [e for e in edges if e not in inst.lists]
    if unknown:
        raise InputError(f"unknown edges {unknown}")
    table = marginal(inst, pin, edges, args.cap_enum)
    for k, p in sorted(table.entries.items()):
        print(" ".join(map(str, k)), fmt(p))
    return emit(args, "marginal", {"table": table.to_dict()}, True)


def cmd_wasserstein(args) -> int:
    from .coupling import single_discrepancy

    inst, pin = _load(args)
    _need(args, "edge", "a", "b")
    if args.edge not in inst.lists:
        raise InputError(f"unknown edge {args.edge!r}")
    for c in (args.a, args.b):
        if c not in inst.lists[args.edge]:
            raise InputError(f"color {c} is not in the list of {args.edge}")
    rec = single_discrepancy(inst, args.edge, args.a, args.b, pin)
    print("w_rest", fmt(rec["w_rest"]))
    print("w_full", fmt(rec["w_full"]))
    return emit(args, "wasserstein", {"edge": args.edge, "a": args.a, "b": args.b, **rec}, True)


def cmd_coupling_audit(args) -> int:
    from .coupling import coupling_independence_audit, full_discrepancy, greedy_decomposition, small_pendant_cases

    eps = Fraction(args.eps)
    if args.instance:
        inst, _ = _load(args)
        res = coupling_independence_audit([inst], eps)
        print("max_w1", fmt(res["max_w1"]), "bound", fmt(res["bound"]))
        return emit(args, "coupling-audit", res, res["passed"])
    records, worst, ok = [], Fraction(0), True
    for inst, i, a, b, mult in small_pendant_cases(args.max_edges, args.q or 7, eps):
        rep = greedy_decomposition(inst, i, a, b, with_w1=False)
        full = full_discrepancy(inst, i, a, b)
        good = rep.decomposition_residual == 0 and rep.conditioned_equal and full["w_full"] <= 1 + 2 / eps
        ok &= good
        worst = max(worst, full["w_full"])
        records.append({"lists": [inst.lists[e] for e in inst.edge_ids], "a": a, "b": b,
                        "multiplicity": mult, "residual": rep.decomposition_residual,
                        "w_full": full["w_full"], "ok": good})
    print("representatives", len(records), "max_w1", fmt(worst), "bound", fmt(1 + 2 / eps))
    return emit(args, "coupling-audit", {"records": records, "max_w1": worst, "bound": 1 + 2 / eps}, ok)


def cmd_jacobian(args) -> int:
    from .acceptance import random_step
    from .spectral import dimension_reduction_audit, factorization_residual, finite_difference_check

    rng = random.Random(args.seed)
    delta = args.delta or 3
    _, children, root_lists = random_step(rng, delta, args.beta or 3)
    red = dimension_reduction_audit(children, root_lists, cap=args.cap_matrix)
    fd = finite_difference_check([c.as_float() for c in children], root_lists, seed=args.seed)
    fact = factorization_residual(children, root_lists)
    ok = red.passed and fd["passed"] and fact <= 1e-12
    print("lambda_max_A", fmt(red.lambda_max_A), "norm_B", fmt(red.norm_B))
    print("fd_max_rel_err", fmt(fd["max_relative_error"]), "factorization_residual", fmt(fact))
    report = {"lambda_max_A": red.lambda_max_A, "norm_B": red.norm_B, "radius_B": red.radius_B,
              "trace_rel_err": red.max_trace_rel_err, "checks": red.checks,
              "finite_difference": fd, "factorization_residual": fact}
    return emit(args, "jacobian", report, ok)


def cmd_worst_case(args) -> int:
    from .spectral import RegimeError, jacobian, matrix_B, spectral_norm, worst_pinning_instance

    _need(args, "delta", "q")
    try:
        w = worst_pinning_instance(args.delta, args.q)
    except RegimeError as exc:
        raise InputError(str(exc)) from exc
    closed = w.closed_form
    lam = spectral_norm(jacobian(w.children, w.root).J_phi_full) ** 2
    nb = spectral_norm(matrix_B(w.children, w.root))
    margin = max(abs(lam - float(closed)), abs(nb - float(closed)))
    print(fmt(closed))
    print("lambda_max", fmt(lam), "norm_B", fmt(nb), "margin", fmt(margin))
    ok = margin <= 1e-9 * max(1.0, float(closed))
    return emit(args, "worst-case", {"delta": args.delta, "q": args.q, "closed_form": closed,
                                     "lambda_max": lam, "norm_B": nb, "margin": margin}, ok)


def _mixing_out(args, rep, command):
    from .mixing import write_csv

    for ell, t in zip(rep.distances, rep.tv):
        print(ell, fmt(t), fmt(float(t)))
    if args.csv:
        write_csv([rep], args.csv)
    report = {"family": rep.family, "delta": rep.delta, "q": rep.q, "beta": rep.beta,
              "distances": rep.distances, "tv": rep.tv, "fitted_rate": rep.fitted_rate,
              "theorem_rate": rep.theorem_rate, "theorem_constant": rep.theorem_constant, "checks": rep.checks}
    return emit(args, command, report, rep.passed)


def cmd_wsm(args) -> int:
    from .mixing import wsm_experiment

    _need(args, "delta", "q")
    depth = args.depth or 6
    return _mixing_out(args, wsm_experiment(args.delta, args.q, range(2, depth + 1)), "wsm")


def cmd_ssm(args) -> int:
    from .mixing import ssm_experiment

    _need(args, "delta", "q")
    depth = args.depth or 5
    rep = ssm_experiment(args.delta, args.q, range(2, depth + 1), extra_pins=args.extra_pins, seed=args.seed)
    return _mixing_out(args, rep, "ssm")


def cmd_hardness(args) -> int:
    from .mixing import hardness_witness, root_edge
    from .spectral import RegimeError

    _need(args, "delta", "depth")
    try:
        h = hardness_witness(args.delta, args.depth, args.q)
    except RegimeError as exc:
        raise InputError(str(exc)) from exc
    root_tv = h["tv"][root_edge(h["instance"])]
    print("tv", fmt(root_tv))
    ok = root_tv == 1 and h["parity_ok"]
    return emit(args, "hardness", {"delta": args.delta, "depth": args.depth, "root_tv": root_tv,
                                   "edge_tv": h["tv"], "parity_ok": h["parity_ok"]}, ok)


def cmd_trickledown(args) -> int:
    from .trickledown import build_complex, final_bound_check, verify_certificate, weighted_broom_tree

    delta = args.delta or 3
    beta = args.beta or delta + 50
    T, B, v = weighted_broom_tree(random.Random(args.seed), delta, 3, beta)
    st = build_complex(T, B, v)
    rep = verify_certificate(st, args.constraint, seed=args.seed)
    fin = final_bound_check(st)
    ok = rep.passed and fin["passed"] and fin["pi_identity"] and fin["cov_identity"]
    for name in ("base_case", "expectation_step", "upper_by_pi"):
        print(name, fmt(rep.min_margin(name)))
    print("lambda_times_d_minus_1", fmt(fin["lambda_times_d_minus_1"]), "eta", fmt(fin["eta"]))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("k,a_k,b_k\n")
            for k in sorted(rep.coefficients.b):
                fh.write(f"{k},{'%.17g' % float(rep.coefficients.a[k])},{'%.17g' % rep.coefficients.b[k]}\n")
    records = [{"tau": r.tau, "codim": r.codim, "inequality": r.inequality, "margin": r.margin,
                "passed": r.passed} for r in rep.records]
    report = {"delta": delta, "beta": beta, "constraint": args.constraint, "b": rep.coefficients.b,
              "a": rep.coefficients.a, "records": records, "final": fin, "log_base": "natural"}
    return emit(args, "trickledown", report, ok)


def cmd_suite(args) -> int:
    from .acceptance import run_all

    results = run_all(args.jobs)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    report = {"criteria": [{"number": r.number, "name": r.name, "passed": r.passed, "seconds": r.seconds,
                            "detail": r.detail} for r in results]}
    return emit(args, "suite", report, ok)


COMMANDS = {
    "count": cmd_count,
    "marginal": cmd_marginal,
    "wasserstein": cmd_wasserstein,
    "coupling-audit": cmd_coupling_audit,
    "jacobian": cmd_jacobian,
    "worst-case": cmd_worst_case,
    "ssm": cmd_ssm,
    "wsm": cmd_wsm,
    "hardness": cmd_hardness,
    "trickledown": cmd_trickledown,
    "suite": cmd_suite,
}


def parser() -> argparse.ArgumentParser:
    from .exact import DEFAULT_CAP
    from .spectral import MATRIX_CAP

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out")
    common.add_argument("--csv")
    common.add_argument("--mode", choices=("exact", "float"), default="float")
    common.add_argument("--cap-enum", type=int, default=DEFAULT_CAP)
    common.add_argument("--cap-matrix", type=int, default=MATRIX_CAP)
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--delta", type=int)
    common.add_argument("--q", type=int)
    common.add_argument("--beta", type=int)
    common.add_argument("--depth", type=int)
    common.add_argument("--edges")
    common.add_argument("--edge")
    common.add_argument("--a", type=int)
    common.add_argument("--b", type=int)
    common.add_argument("--eps", default="1")
    common.add_argument("--max-edges", type=int, default=5)
    common.add_argument("--extra-pins", type=int, default=0)
    common.add_argument("--constraint", choices=("printed", "derived"), default="printed")

    p = argparse.ArgumentParser(prog="edgecolor-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {build_digest()}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    from .exact import EmptySupport, EnumerationCapError
    from .instance import InfeasiblePinning, StructuralError

    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    if args.mode == "exact" and args.command in EIGEN_COMMANDS:
        print(f"error: {args.command} needs eigensolvers and cannot run in exact mode", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (InputError, StructuralError, InfeasiblePinning, EmptySupport, EnumerationCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
