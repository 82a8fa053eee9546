"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from simdis import experiment, verify
from simdis import labels as L
from simdis.errors import ConfigurationError, DomainError, TrainingDiverged
from simdis.losses import ALL_STRATEGIES, Strategy

log = logging.getLogger("simdis")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# anchor {0,1,2} against one sample per relation, R1..R5
CASE_ANCHOR = (0, 1, 2)
CASE_SAMPLES = ((3, 4, 5), (0, 1, 2), (0, 3, 4), (0, 1), (0, 1, 2, 3, 4))
CASE_EXPECTED = {
    "similarity": (Fraction(0), Fraction(1), Fraction(1, 3), Fraction(2, 3), Fraction(1)),
    "dissimilarity": (Fraction(1, 4), Fraction(1), Fraction(1, 3), Fraction(1), Fraction(1, 3)),
    "weight": (Fraction(0), Fraction(1), Fraction(1, 9), Fraction(2, 3), Fraction(1, 3)),
    "overlap": (0, 3, 1, 2, 3),
    "excess": (3, 0, 2, 0, 2),
}


def case_analysis_rows() -> list[dict]:
    anchor = L.LabelSet.of(CASE_ANCHOR, 6)
    rows = []
    for members in CASE_SAMPLES:
        sample = L.LabelSet.of(members, 6)
        f = L.pair_factors(anchor, sample)
        rows.append(
            {
                "sample": sample.to_text(),
                "relation": L.classify_relation(anchor, sample).value,
                "overlap": f.overlap_card,
                "excess": f.excess_card,
                "similarity": f.similarity,
                "dissimilarity": f.dissimilarity,
                "weight": f.weight,
            }
        )
    return rows


def cmd_case_analysis(args) -> int:
    rows = case_analysis_rows()
    header = ("relation", "sample", "|y^s|", "|y^d|", "K^s", "K^d", "K^s*K^d")
    print("anchor " + L.LabelSet.of(CASE_ANCHOR, 6).to_text())
    print("\t".join(header))
    for r in rows:
        print(
            "\t".join(
                str(v)
                for v in (r["relation"], r["sample"], r["overlap"], r["excess"],
                          r["similarity"], r["dissimilarity"], r["weight"])
            )
        )
    ok = (
        [r["relation"] for r in rows] == ["R1", "R2", "R3", "R4", "R5"]
        and all(
            isinstance(r[k], Fraction) and r[k] == e
            for k in ("similarity", "dissimilarity", "weight")
            for r, e in zip(rows, CASE_EXPECTED[k])
        )
        and tuple(r["overlap"] for r in rows) == CASE_EXPECTED["overlap"]
        and tuple(r["excess"] for r in rows) == CASE_EXPECTED["excess"]
    )
    print("case analysis: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_VERIFY


def _grad_reports(seed: int, batches: int) -> list[verify.PropertyReport]:
    out = []
    for strategy in ALL_STRATEGIES:
        agg = verify.PropertyReport(f"grad_check[{strategy.name}]", 0, 0, seed, max_error=0.0)
        for k in range(batches):
            batch = verify.random_batch(seed, k, max_size=12, max_dim=6)
            r = verify.grad_check(batch, strategy)
            agg.trials += 1
            agg.failures += r.failures
            agg.max_error = max(agg.max_error, r.max_error)
            if r.failures and agg.first_counterexample is None:
                agg.first_counterexample = r.first_counterexample
        out.append(agg)
    return out


def _emit(reports) -> bool:
    for line in verify.iter_report_lines(reports):
        print(line)
    return all(r.passed for r in reports)


def cmd_verify(args) -> int:
    try:
        reports = verify.check_theorems(
            args.universe, exhaustive=args.exhaustive, trials=args.trials, seed=args.seed
        )
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    reports += _grad_reports(args.seed, args.grad_batches)
    return EXIT_OK if _emit(reports) else EXIT_VERIFY


def cmd_grad_check(args) -> int:
    return EXIT_OK if _emit(_grad_reports(args.seed, args.batches)) else EXIT_VERIFY


def _strategies(arg: str | None, cfg) -> list[Strategy]:
    if not arg:
        return [cfg.train.strategy]
    return [Strategy.parse(name.strip(), cfg.train.strategy.penalty) for name in arg.split(",")]


def cmd_run(args) -> int:
    if args.dump_defaults:
        print(json.dumps(experiment.ExperimentConfig().to_dict(), indent=2))
        return EXIT_OK
    if not args.config:
        print("error: run needs --config PATH (or --dump-defaults)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = experiment.load_config(args.config)
        strategies = _strategies(args.strategy, cfg)
        if args.seed is not None:
            cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
            if cfg.synth is not None:
                cfg.synth = dataclasses.replace(cfg.synth, seed=args.seed)
        dataset, generated = experiment.load_data(cfg)
    except (ConfigurationError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    root = Path(cfg.output_dir)
    targets = [(s, root if len(strategies) == 1 else root / s.name) for s in strategies]
    for _, out in targets:
        if experiment.output_dir_in_use(out) and not args.force:
            print(f"error: {out} exists; pass --force to overwrite", file=sys.stderr)
            return EXIT_CONFIG

    for strategy, out in targets:
        run_cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, strategy=strategy))
        try:
            result = experiment.run_experiment(dataset, run_cfg)
        except TrainingDiverged as exc:
            out.mkdir(parents=True, exist_ok=True)
            if exc.trace is not None:
                (out / "trace.csv").write_text(exc.trace.to_csv())
            print(f"error: {strategy.name}: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        experiment.write_outputs(out, result, run_cfg, dataset if generated else None)
        summary = {k: v for k, v in result.metrics.items() if not isinstance(v, list)}
        print(json.dumps({"strategy": strategy.name, "output_dir": str(out), **summary}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simdis", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate from a JSON config")
    run.add_argument("--config")
    run.add_argument("--strategy", help="comma-separated, e.g. ALL,ANY,MulSupCon,SimDis-outside")
    run.add_argument("--seed", type=int)
    run.add_argument("--force", action="store_true")
    run.add_argument("--dump-defaults", action="store_true")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="theorem and gradient property checks")
    ver.add_argument("--universe", type=int, default=20)
    ver.add_argument("--trials", type=int, default=10_000)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--exhaustive", action="store_true")
    ver.add_argument("--grad-batches", type=int, default=5)
    ver.set_defaults(func=cmd_verify)

    case = sub.add_parser("case-analysis", help="print the five-relation fixture table")
    case.set_defaults(func=cmd_case_analysis)

    gc = sub.add_parser("grad-check", help="finite-difference gradient checks")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--batches", type=int, default=10)
    gc.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
