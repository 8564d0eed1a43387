"""Command-line front end.

Exit codes: 0 success, 1 a verification trial failed, 2 invalid input,
3 numeric failure. Reports are JSON with sorted keys and contain no timing
unless ``--timing`` is given, so reruns with the same inputs and seed are
byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channels import NuInfReport, nu_infinity
from .errors import InvalidInput, QlabError
from .fidelity import Certificate, FidelityBracket, FidelityConfig, accessible_fidelity
from .quantumness import QuantumnessConfig, QuantumnessReport, quantumness
from .serialize import dumps, encode_matrix, encode_vector, ensemble_to_json, load_channel, load_ensemble
from .verify import CSV_COLUMNS, SUITES, run_suite, summarize

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _bracket_json(b: FidelityBracket) -> dict:
    return {
        "lower": b.lower,
        "upper": b.upper,
        "width": b.width,
        "outcomes": b.outcomes,
        "strategy": {
            "povm": [encode_matrix(e) for e in b.strategy.povm.elements],
            "resend_states": [encode_vector(s.amplitudes) for s in b.strategy.resend_states],
        },
        "certificate": _certificate_json(b.certificate),
    }


def _certificate_json(c: Certificate) -> dict:
    return {
        "X": encode_matrix(c.X),
        "trace": c.upper,
        "margin": c.margin,
        "probe_count": c.probe_count,
        "rounds": c.rounds,
        "scalar_fallback": c.scalar_fallback,
    }


def _quantumness_json(r: QuantumnessReport) -> dict:
    return {
        "value_lower": r.value_lower,
        "value_upper": r.value_upper,
        "worst_prior": r.worst_prior.tolist(),
        "trace": [{"prior": p.tolist(), "lower": b.lower, "upper": b.upper} for p, b in r.trace],
    }


def _nu_json(r: NuInfReport) -> dict:
    return {
        "value": r.value,
        "argmax_state": encode_vector(r.argmax_state.amplitudes),
        "restarts_used": r.restarts_used,
        "best_per_restart": r.best_per_restart,
        "grid_value": r.grid_value,
    }


def _emit(args, report: dict, started: float) -> None:
    report["version"] = __version__
    report["command"] = args.command
    report["seed"] = args.seed
    if args.timing:
        report["wall_time_s"] = time.perf_counter() - started
    text = dumps(report)
    if args.json:
        Path(args.json).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_fidelity(args) -> int:
    e = load_ensemble(args.input)
    config = FidelityConfig(outcomes=args.outcomes, restarts=args.restarts, seed=args.seed)
    bracket = accessible_fidelity(e, config)
    return _report(args, {"input": ensemble_to_json(e), "config": _config_json(config), "bracket": _bracket_json(bracket)})


def cmd_quantumness(args) -> int:
    e = load_ensemble(args.input)
    final = FidelityConfig(outcomes=args.outcomes, restarts=args.restarts)
    config = QuantumnessConfig(final=final, starts=args.starts, max_evals=args.max_evals)
    report = quantumness(list(e.states), config, seed=args.seed)
    doc = {
        "states": [encode_vector(s.amplitudes) for s in e.states],
        "config": {"final": _config_json(final), "starts": config.starts, "max_evals": config.max_evals},
        "quantumness": _quantumness_json(report),
    }
    return _report(args, doc)


def cmd_nu_inf(args) -> int:
    m = load_channel(args.input)
    report = nu_infinity(m, restarts=args.restarts, seed=args.seed)
    return _report(args, {"in_dim": m.in_dim, "out_dim": m.out_dim, "nu_inf": _nu_json(report)})


def cmd_verify(args) -> int:
    rows = run_suite(args.suite, args.trials, args.seed, fixtures=args.fixtures)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())
    if args.csv:
        Path(args.csv).write_text(buf.getvalue(), encoding="utf-8")
    elif not args.json:
        sys.stdout.write(buf.getvalue())
    summary = summarize(rows)
    summary["suite"] = args.suite
    summary["fixtures"] = args.fixtures
    if args.json:
        _report(args, summary)
    for seed in summary["failed_seeds"]:
        print(f"trial with seed {seed} failed; replay with --seed {seed} --trials 1", file=sys.stderr)
    return EXIT_OK if not summary["failed_seeds"] else EXIT_FAIL


def _config_json(c: FidelityConfig) -> dict:
    return {
        "outcomes": c.outcomes,
        "restarts": c.restarts,
        "max_rounds": c.max_rounds,
        "verify_probes": c.verify_probes,
        "verify_restarts": c.verify_restarts,
    }


def _report(args, doc: dict) -> int:
    _emit(args, doc, args.started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qlab", description="Accessible fidelity, quantumness and maximal output norms.")
    parser.add_argument("--version", action="version", version=f"qlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, restarts_default):
        p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
        p.add_argument("--restarts", type=int, default=restarts_default)
        p.add_argument("--json", metavar="OUT", help="write the JSON report here instead of stdout")
        p.add_argument("--timing", action="store_true", help="include wall time (breaks byte-identical reruns)")

    p = sub.add_parser("fidelity", help="bracket the accessible fidelity of an ensemble file")
    p.add_argument("input")
    p.add_argument("--outcomes", type=int, default=None, help="POVM outcomes (default d^2)")
    common(p, 16)
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("quantumness", help="minimize the fidelity over priors for the states in a file")
    p.add_argument("input")
    p.add_argument("--outcomes", type=int, default=None)
    p.add_argument("--starts", type=int, default=QuantumnessConfig.starts)
    p.add_argument("--max-evals", type=int, default=QuantumnessConfig.max_evals)
    common(p, 16)
    p.set_defaults(func=cmd_quantumness)

    p = sub.add_parser("verify", help="run seeded verification trials")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixtures", action="store_true", help="use bundled fixtures instead of random draws")
    p.add_argument("--csv", metavar="OUT", help="write per-trial CSV here (default stdout)")
    p.add_argument("--json", metavar="OUT", help="write the JSON summary here")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("nu-inf", help="maximal output operator norm of a channel file")
    p.add_argument("input")
    common(p, 32)
    p.set_defaults(func=cmd_nu_inf)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.started = time.perf_counter()
    for name in ("restarts", "trials", "outcomes", "starts", "max_evals"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            print(f"qlab: error: --{name.replace('_', '-')} must be at least 1", file=sys.stderr)
            return EXIT_INPUT
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except InvalidInput as exc:
        print(f"qlab: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (QlabError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"qlab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
