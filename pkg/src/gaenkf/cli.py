"""Command-line entry point: ``gaenkf {truth,run,report,compare}``.

Exit status is 0 on success, 1 on any error (missing files, bad
configuration, numerical failure) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, ContractError
from .harness import MODES, RunReport, generate_truth, load_config, read_truth, run_experiment
from .harness import summary_table

log = logging.getLogger("gaenkf")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None,
                   help="experiment TOML file (default: the bundled valley case)")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--out", type=Path, default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaenkf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("truth", help="run the truth and write synthetic observations")
    _common(p)

    p = sub.add_parser("run", help="run one experiment (or all) against the stored truth")
    _common(p)
    p.add_argument("--mode", choices=MODES + ("all",), default=None,
                   help="experiment to run (default: the configured mode)")

    p = sub.add_parser("report", help="print the summary table of the stored reports")
    _common(p)

    p = sub.add_parser("compare", help="side-by-side scores of two experiments and their delta")
    _common(p)
    p.add_argument("first", choices=MODES)
    p.add_argument("second", choices=MODES)
    return parser


def _config(args, mode=None):
    return load_config(args.config, seed=args.seed, output=args.out, mode=mode)


def _read_reports(cfg, modes):
    reports = {}
    for m in modes:
        if (cfg.mode_dir(m) / "report.csv").is_file():
            reports[m] = RunReport.read(cfg.mode_dir(m))
    return reports


def _cmd_truth(args) -> int:
    cfg = _config(args)
    generate_truth(cfg, write=True)
    print(f"truth written to {cfg.truth_dir}")
    return 0


def _cmd_run(args) -> int:
    cfg = _config(args)
    modes = MODES if args.mode == "all" else (args.mode or cfg.mode,)
    truth = read_truth(cfg)
    reports = {}
    for m in modes:
        log.info("running %s", m)
        reports[m] = run_experiment(_config(args, mode=m), truth, write=True)
        print(f"{m}: report written to {cfg.mode_dir(m) / 'report.csv'}")
    print(summary_table(reports))
    return 0


def _cmd_report(args) -> int:
    cfg = _config(args)
    reports = _read_reports(cfg, MODES)
    if not reports:
        raise FileNotFoundError(f"no report.csv under {cfg.output} (run `run` first)")
    print(summary_table(reports))
    return 0


def _cmd_compare(args) -> int:
    cfg = _config(args)
    reports = {m: RunReport.read(cfg.mode_dir(m)) for m in (args.first, args.second)}
    if args.first == args.second:
        reports = {args.first: reports[args.first]}
        print(summary_table(reports))
    else:
        print(summary_table(reports, delta=(args.first, args.second)))
    return 0


_COMMANDS = {"truth": _cmd_truth, "run": _cmd_run, "report": _cmd_report,
             "compare": _cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, ConfigurationError, ContractError, ArithmeticError,
            ValueError, OSError) as exc:
        print(f"gaenkf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
