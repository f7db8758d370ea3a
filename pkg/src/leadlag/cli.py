"""``leadlag`` command-line entry point.

Every subcommand reads the shared options ``--config``, ``--seed``, ``--jobs``,
``--out`` and ``--input``; subcommand flags override the matching config keys.
On success a JSON summary is printed to stdout; on failure a JSON error object
goes to stderr and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import pipeline as pl
from .backtest import ExitRule
from .config import RunConfig, load_config
from .errors import LeadLagError
from .synthgen import PRESETS, GenConfig

EXIT_ERROR = 2


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _exit_rule(text: str) -> str:
    try:
        return str(ExitRule.parse(text))
    except LeadLagError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="global seed (bootstrap and synthetic data)")
    common.add_argument("--jobs", type=int, help="worker processes for day-level parallelism")
    common.add_argument("--out", help="output directory")
    common.add_argument("--input", help="day file or directory of day files")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="leadlag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"leadlag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write synthetic day files")
    p.add_argument("--preset", choices=sorted(PRESETS), help="generator preset (default: config 'synth' or tuned)")
    p.add_argument("--days", type=int)
    p.add_argument("--ticks", type=int)

    p = sub.add_parser("sync", parents=[common], help="bin and fill raw streams into panels")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")

    sub.add_parser("stats", parents=[common], help="daily volume, spread and volatility")

    p = sub.add_parser("leadlag", parents=[common], help="cross-correlation curves and LLT/LLC/LLR")
    p.add_argument("--pair", action="append", help="e.g. F1,F2 (repeatable)")
    p.add_argument("--lags", type=int)
    p.add_argument("--mode", choices=("synced", "raw"))

    p = sub.add_parser("bootstrap", parents=[common], help="block-bootstrap lead-lag measures")
    p.add_argument("--pair", action="append")
    p.add_argument("--lags", type=int)
    p.add_argument("--resamples", type=int)
    p.add_argument("--block-minutes", type=float)

    p = sub.add_parser("mst", parents=[common], help="lead-lag network and minimum spanning tree")
    p.add_argument("--lags", type=int)

    p = sub.add_parser("pca", parents=[common], help="PCA of lead-aligned tick changes")
    p.add_argument("--textbook-partial", action="store_true", default=None,
                   help="use the standard partial-correlation normalisation")

    p = sub.add_parser("signal", parents=[common], help="per-tick theta, momentum and forward changes")
    p.add_argument("--cycle", type=int)
    p.add_argument("--horizons", type=_ints)

    p = sub.add_parser("regress", parents=[common], help="Model1/Model2 fits per day and horizon")
    p.add_argument("--horizons", type=_ints)
    p.add_argument("--models", type=_ints)
    p.add_argument("--cycle", type=int)

    p = sub.add_parser("backtest", parents=[common], help="calendar-spread feedback strategy")
    p.add_argument("--lambda", dest="lam", type=float, help="threshold in price ticks (skips calibration)")
    p.add_argument("--grid", type=_floats, help="lambda grid for in-sample calibration")
    p.add_argument("--split-day", type=float, help="in-sample day count, or fraction if < 1")
    p.add_argument("--fees", type=float, help="fee per side in price ticks")
    p.add_argument("--exit", type=_exit_rule, help="zero-cross | horizon:h | threshold:x")
    p.add_argument("--cycle", type=int)

    sub.add_parser("pipeline", parents=[common], help="run every stage and write all artifacts")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config, seed=args.seed, jobs=args.jobs, output=args.out, input=args.input)
    changes: dict = {}
    if getattr(args, "pair", None):
        changes["pairs"] = tuple(args.pair)
    for name, key in (("lags", "lags"), ("mode", "leadlag_mode"), ("cycle", "ema_cycle"),
                      ("horizons", "horizons"), ("models", "models"),
                      ("textbook_partial", "textbook_partial")):
        v = getattr(args, name, None)
        if v is not None:
            changes[key] = v
    if getattr(args, "resamples", None) is not None or getattr(args, "block_minutes", None) is not None:
        bs = cfg.bootstrap
        changes["bootstrap"] = replace(bs, n_resamples=args.resamples or bs.n_resamples,
                                       block_minutes=args.block_minutes or bs.block_minutes)
    if args.command == "backtest":
        st = cfg.strategy
        split = args.split_day
        if split is not None and split >= 1:
            split = int(split)
        changes["strategy"] = replace(
            st, lam=args.lam if args.lam is not None else st.lam,
            grid=args.grid or st.grid, split_day=split if split is not None else st.split_day,
            fee_ticks=args.fees if args.fees is not None else st.fee_ticks,
            exit=args.exit or st.exit)
    if args.command == "synth":
        gen = cfg.synth
        if args.preset or gen is None:
            gen = GenConfig.from_mapping({**PRESETS[args.preset or "tuned"], "seed": cfg.seed})
        gen = replace(gen, n_days=args.days or gen.n_days, n_ticks=args.ticks or gen.n_ticks)
        changes["synth"] = gen
    return replace(cfg, **changes)


def run(args) -> dict:
    cfg = _config(args)
    out = Path(cfg.output)
    if args.command == "synth":
        paths = pl.synth_corpus(cfg, out)
        return {"written": [str(p) for p in paths]}
    if args.command == "pipeline":
        summary = pl.run_pipeline(cfg, out)
        return {"out": str(out), "days": summary["days"]}
    days = pl.run_days(cfg, ["sync", args.command])
    if args.command == "sync":
        pl.write_sync(days, cfg, out, args.format)
        return {"out": str(out), "days": [d.date for d in days]}
    try:
        result = pl.WRITERS[args.command](days, cfg, out)
    except pl.StageError:
        raise
    except Exception as exc:
        raise pl.StageError(args.command, None, exc) from exc
    return {"out": str(out), "days": [d.date for d in days], "summary": result}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except pl.StageError as exc:
        print(json.dumps(exc.to_json(), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    except LeadLagError as exc:
        err = {"error": type(exc).__name__, "module": args.command, "day": None, "message": str(exc)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(pl._clean(result), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
