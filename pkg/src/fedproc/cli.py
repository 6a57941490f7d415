"""Command-line entry point.

    fedproc run --config exp.toml [--seed N] [--override key=value ...] [--resume]
    fedproc partition-stats --config exp.toml
    fedproc gradcheck [--points N]
    fedproc compare --runs a.csv b.csv [...]

Exit status: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigurationError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--config", required=required, help="TOML experiment config")
    p.add_argument("--seed", type=int, help="override [experiment] seed")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. T=5 or network.hidden_dims=[32]")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedproc", description="Prototypical contrastive federated learning simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every round")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment and write metrics.csv + run.json")
    _add_config_args(run)
    run.add_argument("--resume", action="store_true", help="continue from the last checkpointed round")

    stats = sub.add_parser("partition-stats", help="print per-client class histograms")
    _add_config_args(stats)

    grad = sub.add_parser("gradcheck", help="finite-difference check of every loss and layer")
    grad.add_argument("--points", type=int, default=10, help="random points per network and loss")

    cmp_ = sub.add_parser("compare", help="final-accuracy table for metrics CSVs")
    cmp_.add_argument("--runs", nargs="+", required=True, metavar="CSV")
    return parser


def cmd_run(args) -> int:
    from .experiment import run_experiment

    cfg = load_config(args.config, args.override, args.seed)
    series = run_experiment(cfg, resume=args.resume)
    last = series[-1]
    print(f"{cfg.strategy.value}: {len(series)} rounds, final top-1 {last.top1_accuracy:.4f} "
          f"-> {cfg.resolved_output_dir}")
    return EXIT_OK


def cmd_partition_stats(args) -> int:
    from .experiment import prepare

    cfg = load_config(args.config, args.override, args.seed)
    data = prepare(cfg)
    k = data.spec.num_classes
    width = max(5, len(str(max(len(c) for c in data.clients))))
    print(f"m={cfg.num_clients} beta={cfg.beta} seed={cfg.seed}")
    print("client " + " ".join(f"{j:>{width}}" for j in range(k)) + f" {'total':>{width + 2}}")
    for c in data.clients:
        counts = c.class_counts()
        print(f"{c.client_id:>6} " + " ".join(f"{v:>{width}}" for v in counts) + f" {len(c):>{width + 2}}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import STEP, TOLERANCE, run_suite

    results = run_suite(args.points)
    groups: dict[tuple[str, str], list] = {}
    for r in results:
        groups.setdefault((r.network, r.loss), []).append(r)
    ok = True
    for (net, loss), rs in groups.items():
        worst = max(r.max_rel_error for r in rs)
        passed = all(r.passed for r in rs)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {net:<10} {loss:<9} points={len(rs)} max_rel_err={worst:.2e}")
    print(f"{'PASS' if ok else 'FAIL'}: h={STEP:g}, tolerance={TOLERANCE:g}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_compare(args) -> int:
    from .experiment import final_accuracy, read_metrics

    rows = []
    for path in args.runs:
        if not Path(path).is_file():
            raise ConfigurationError(f"metrics file not found: {path}")
        rows.append((path, len(read_metrics(path)), final_accuracy(path)))
    base = rows[0][2]
    name_w = max(len(r[0]) for r in rows)
    print(f"{'run':<{name_w}} {'rounds':>6} {'final_top1':>10} {'delta':>8}")
    for path, n, acc in rows:
        print(f"{path:<{name_w}} {n:>6} {acc:>10.4f} {acc - base:>+8.4f}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "partition-stats": cmd_partition_stats,
    "gradcheck": cmd_gradcheck,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
