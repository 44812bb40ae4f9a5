"""Command-line interface.

Exit codes: 0 success or certified, 1 not certified, 2 usage error,
3 invalid input, 4 budget exceeded.

Default budgets can be overridden through the environment variable
``FPABNE_BUDGETS``, a comma-separated list such as
``max_iters=50000,restarts=8,node_budget=200000,max_guesses=10000``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

from . import gcircuit, lowering
from .auction import StrategyProfile, best_response, verify_epsilon_bne
from .brouwer import SolverConfig, solve_fixed_point
from .circuit_dag import DEFAULT_NODE_BUDGET, export_circuit
from .errors import DomainError, FpaError, ResourceError, StructureError, ValidationError
from .formats import dump_json, parse_instance, parse_strategy, serialize_instance, serialize_strategy
from .rational import as_fraction, fraction_text
from .solver_enum import EnumConfig, solve_constant_size

log = logging.getLogger("fpabne")

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_USAGE, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3, 4
BUDGET_ENV = "FPABNE_BUDGETS"


@dataclass(frozen=True)
class Budgets:
    max_iters: int = 100_000
    restarts: int = 32
    node_budget: int = DEFAULT_NODE_BUDGET
    max_guesses: int = 200_000
    enum_starts: int = 12

    @classmethod
    def from_env(cls, text: str | None) -> "Budgets":
        out = cls()
        if not text:
            return out
        known = {f.name for f in fields(cls)}
        updates = {}
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in known:
                raise DomainError(f"{BUDGET_ENV}: unknown budget {key!r}")
            try:
                updates[key] = int(value)
            except ValueError as exc:
                raise DomainError(f"{BUDGET_ENV}: {key} needs an integer") from exc
            if updates[key] <= 0:
                raise DomainError(f"{BUDGET_ENV}: {key} must be positive")
        return replace(out, **updates)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 2 with a clean message
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _eps(text: str) -> Fraction:
    try:
        return as_fraction(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _report_text(report, extra: dict | None = None) -> str:
    doc = {
        "certified": bool(report.is_eq),
        "eps": fraction_text(report.eps),
        "max_regret": fraction_text(report.max_regret),
        "max_regret_float": float(report.max_regret),
        "violations": len(report.witnesses),
    }
    doc.update(extra or {})
    return dump_json(doc)


# -- commands ------------------------------------------------------------------------


def cmd_solve(args, budgets: Budgets) -> int:
    instance = parse_instance(_read(args.instance))
    extra = {"method": args.method}
    if args.method == "brouwer":
        config = SolverConfig(
            damping=args.damping, max_iters=budgets.max_iters, restarts=budgets.restarts, seed=args.seed
        )
        result = solve_fixed_point(instance, args.eps, config)
        profile = result.profile
        extra.update(residual=result.residual, iterations=result.iterations, restarts=result.restarts_used)
        if args.trace:
            rows = ["restart,iteration,residual"] + [f"{r},{it},{res!r}" for r, it, res in result.trace]
            Path(args.trace).write_text("\n".join(rows) + "\n")
    else:
        config = EnumConfig(seed=args.seed, max_guesses=budgets.max_guesses, starts=budgets.enum_starts)
        result = solve_constant_size(instance, args.eps, config)
        extra.update(guesses_tried=result.guesses_tried)
        if result.profile is None:
            best = min(result.reports, key=lambda r: r.residual, default=None)
            log.warning("no guess certified; best residual %s", None if best is None else best.residual)
            _write(args.report, dump_json({"certified": False, "method": args.method, **extra}))
            return EXIT_NOT_CERTIFIED
        profile = result.profile
    exact = StrategyProfile(tuple(tuple(as_fraction(x) for x in row) for row in profile.jumps))
    report = verify_epsilon_bne(instance, exact, args.eps)
    _write(args.out, serialize_strategy(exact))
    if args.report or args.out not in (None, "-"):
        _write(args.report if args.report else None, _report_text(report, extra))
    log.info("certified=%s max_regret=%.3e", report.is_eq, float(report.max_regret))
    return EXIT_OK if report.is_eq else EXIT_NOT_CERTIFIED


def cmd_verify(args, budgets: Budgets) -> int:
    instance = parse_instance(_read(args.instance))
    profile = parse_strategy(_read(args.strategy))
    report = verify_epsilon_bne(instance, profile, args.eps)
    print(f"max_regret {float(report.max_regret):.6e} ({fraction_text(report.max_regret)})")
    for w in report.witnesses[: args.show]:
        print(
            f"bidder {w.bidder}: bid {fraction_text(w.bid)} -> {fraction_text(w.deviation)} "
            f"at value {float(w.value):.12g} gains {float(w.regret):.6e}"
        )
    print("certified" if report.is_eq else "not certified")
    return EXIT_OK if report.is_eq else EXIT_NOT_CERTIFIED


def cmd_best_response(args, budgets: Budgets) -> int:
    instance = parse_instance(_read(args.instance))
    profile = parse_strategy(_read(args.strategy))
    if not 0 <= args.bidder < instance.n:
        raise DomainError(f"bidder {args.bidder} out of range 0..{instance.n - 1}")
    row = best_response(instance, args.bidder, profile)
    print("jumps " + " ".join(fraction_text(x) for x in row), file=sys.stderr)
    _write(args.out, serialize_strategy(profile.replace(args.bidder, row)))
    return EXIT_OK


def cmd_reduce(args, budgets: Budgets) -> int:
    from .reduction import build_auction

    circuit = gcircuit.parse_circuit(_read(args.circuit))
    output = build_auction(circuit)
    _write(args.out, serialize_instance(output.auction))
    if args.sidecar:
        Path(args.sidecar).write_text(output.sidecar())
    return EXIT_OK


def cmd_circuit_check(args, budgets: Budgets) -> int:
    circuit = gcircuit.parse_circuit(_read(args.circuit))
    values = gcircuit.parse_assignment(_read(args.assignment), len(circuit))
    report = gcircuit.check_assignment(circuit, values, args.eps)
    print(f"max_violation {float(report.max_violation):.6e}")
    for i in report.witnesses:
        print(f"gate {i}: violation {float(report.violations[i]):.6e}")
    print("satisfied" if report.satisfied else "not satisfied")
    return EXIT_OK if report.satisfied else EXIT_NOT_CERTIFIED


def cmd_circuit_solve(args, budgets: Budgets) -> int:
    circuit = gcircuit.parse_circuit(_read(args.circuit))
    config = gcircuit.IterateConfig(max_iters=budgets.max_iters, seed=args.seed)
    result = gcircuit.iterate_solve(circuit, args.eps, config)
    _write(args.out, gcircuit.format_assignment(result.assignment))
    log.info("violation %.3e after %d iterations", result.violation, result.iterations)
    return EXIT_OK if result.success else EXIT_NOT_CERTIFIED


_TARGETS = {"plus": lowering.PLUS, "phi": lowering.PHI, "exact": lowering.EXACT, "square": lowering.SQUARE}


def _target(text: str) -> frozenset:
    if text in _TARGETS:
        return _TARGETS[text]
    try:
        return frozenset(gcircuit.GateType.from_label(t) for t in text.split(","))
    except StructureError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_circuit_lower(args, budgets: Budgets) -> int:
    circuit = gcircuit.parse_circuit(_read(args.circuit))
    result = lowering.lower_circuit(circuit, args.target, args.eps_budget)
    mult = "exact-only" if result.multiplier is None else str(result.multiplier)
    header = [
        f"# family {result.family}",
        f"# multiplier {mult}",
        f"# eps_max {fraction_text(result.eps_max)}",
        f"# source gates are 0..{len(circuit) - 1}",
    ] + [f"# {note}" for note in result.notes]
    _write(args.out, "\n".join(header) + "\n" + gcircuit.format_circuit(result.circuit))
    print(f"multiplier {mult}", file=sys.stderr)
    return EXIT_OK


def cmd_export_circuit(args, budgets: Budgets) -> int:
    instance = parse_instance(_read(args.instance))
    dag = export_circuit(instance, budgets.node_budget)
    _write(args.out, dag.to_text())
    log.info("%d nodes", len(dag))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fpabne", description="Equilibria of discrete-bid first-price auctions.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="compute a certified eps-equilibrium")
    s.add_argument("--instance", required=True)
    s.add_argument("--eps", type=_eps, required=True)
    s.add_argument("--method", choices=("brouwer", "enumerate"), default="brouwer")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--damping", type=float, default=0.5)
    s.add_argument("--out", help="strategy file (default: stdout)")
    s.add_argument("--report", help="certification report file")
    s.add_argument("--trace", help="CSV file for the residual trace (brouwer)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", help="check the eps-equilibrium conditions")
    s.add_argument("--instance", required=True)
    s.add_argument("--strategy", required=True)
    s.add_argument("--eps", type=_eps, required=True)
    s.add_argument("--show", type=int, default=10, help="violations to print")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("best-response", help="replace one bidder's strategy by a best response")
    s.add_argument("--instance", required=True)
    s.add_argument("--strategy", required=True)
    s.add_argument("--bidder", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_best_response)

    s = sub.add_parser("reduce", help="compile a {Gx2, G1-, Gphi} circuit into an auction")
    s.add_argument("--circuit", required=True)
    s.add_argument("--out")
    s.add_argument("--sidecar", help="file describing bidder roles and decoding")
    s.set_defaults(func=cmd_reduce)

    c = sub.add_parser("circuit", help="generalized-circuit tools")
    csub = c.add_subparsers(dest="circuit_command", required=True, parser_class=_Parser)
    s = csub.add_parser("check")
    s.add_argument("--circuit", required=True)
    s.add_argument("--assignment", required=True)
    s.add_argument("--eps", type=_eps, required=True)
    s.set_defaults(func=cmd_circuit_check)
    s = csub.add_parser("solve")
    s.add_argument("--circuit", required=True)
    s.add_argument("--eps", type=_eps, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_circuit_solve)
    s = csub.add_parser("lower")
    s.add_argument("--circuit", required=True)
    s.add_argument("--target", type=_target, required=True, help="plus, phi, exact, square or gate labels")
    s.add_argument("--eps-budget", type=_eps, default=Fraction(0))
    s.add_argument("--out")
    s.set_defaults(func=cmd_circuit_lower)

    s = sub.add_parser("export-circuit", help="write the arithmetic circuit of the fixed-point map")
    s.add_argument("--instance", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_export_circuit)
    return p


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        budgets = Budgets.from_env(os.environ.get(BUDGET_ENV))
        return args.func(args, budgets)
    except ResourceError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", ()):
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVALID
    except (FpaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv: list[str] | None = None) -> None:
    raise SystemExit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":  # pragma: no cover
    main()
