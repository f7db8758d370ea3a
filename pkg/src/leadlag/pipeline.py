"""Day-level orchestration of the analysis chain and deterministic artifact writing."""

from __future__ import annotations

import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .backtest import DayData, StrategyConfig, calibrate_lambda, run_backtest
from .bootstrap import bootstrap_pair, quantile
from .config import RunConfig, parse_pair, to_mapping
from .errors import LeadLagError, ValidationError
from .estimators import panel_curve, raw_curve
from .network import day_network
from .panel_io import write_panel_binary, write_panel_csv
from .pca import build_variation_matrix, partial_correlation_matrix, run_pca
from .regression import fit_day, identity_gap, summarize_fits
from .signal import compute_signals
from .stats import daily_summary
from .synthgen import generate_day
from .tick_sync import (SyncedPanel, UpdateTable, parse_lob_stream, rank_liquidity,
                        synchronize, write_lob_stream)

logger = logging.getLogger(__name__)

STAGES = ("sync", "stats", "leadlag", "bootstrap", "mst", "pca", "signal", "regress", "backtest")


class StageError(LeadLagError):
    """A module failed on a specific day; carries both for the error report."""

    def __init__(self, module: str, day: str | None, cause: BaseException):
        self.module, self.day, self.cause = module, day, cause
        where = f" on {day}" if day else ""
        super().__init__(f"{module} failed{where}: {type(cause).__name__}: {cause}")

    def to_json(self) -> dict:
        return {"error": type(self.cause).__name__, "module": self.module, "day": self.day,
                "message": str(self.cause)}


# ---------------------------------------------------------------- output helpers

def meta(cfg: RunConfig) -> dict:
    return {"tool": "leadlag", "version": __version__, "config_hash": cfg.config_hash,
            "seed": cfg.seed}


def header_comment(cfg: RunConfig) -> str:
    m = meta(cfg)
    return f"{m['tool']} {m['version']} config_hash={m['config_hash']} seed={m['seed']}"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_atomic(path: Path, data: str | bytes) -> None:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(cfg: RunConfig, columns: Sequence[str], rows: Iterable[dict]) -> str:
    out = [f"# {header_comment(cfg)}", ",".join(columns)]
    out += [",".join(_fmt(r.get(c)) for c in columns) for r in rows]
    return "\n".join(out) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def json_text(cfg: RunConfig, body: dict) -> str:
    return json.dumps({"_meta": meta(cfg), **_clean(body)}, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- inputs

def day_files(cfg: RunConfig) -> list[Path]:
    cfg.validate_paths()
    root = Path(cfg.input)
    files = [root] if root.is_file() else sorted(p for p in root.glob("*.csv"))
    if cfg.dates:
        lo, hi = cfg.dates
        files = [p for p in files if not _is_date(p.stem) or lo <= p.stem <= hi]
    if not files:
        raise StageError("sync", None, FileNotFoundError(f"no day files under {root}"))
    return files


def _is_date(s: str) -> bool:
    try:
        np.datetime64(s, "D")
        return len(s) == 10
    except ValueError:
        return False


def load_updates(path: Path, cfg: RunConfig) -> UpdateTable:
    with open(path, "rb") as fh:
        return parse_lob_stream(fh)


def sync_day(updates: UpdateTable, cfg: RunConfig) -> SyncedPanel:
    ranking = rank_liquidity(updates).ranking
    if cfg.instruments:
        ranking = tuple(i for i in ranking if i in cfg.instruments)
    return synchronize(updates, cfg.intra_event_gap_ns, ranking)


def resolve(panel: SyncedPanel, label: str) -> str:
    """``F1``..``Fn`` to the day's instrument id; ids pass through."""
    if label in panel.instruments:
        return label
    if label[:1] == "F" and label[1:].isdigit() and 1 <= int(label[1:]) <= len(panel.instruments):
        return panel.instruments[int(label[1:]) - 1]
    raise LeadLagError(f"unknown instrument {label!r}")


# ---------------------------------------------------------------- per-day stages

def stage_stats(updates, panel, cfg):
    return [s.as_row() for s in daily_summary(panel, updates)]


def stage_leadlag(updates, panel, cfg):
    out = {}
    for text in cfg.pairs:
        a, b = (resolve(panel, p) for p in parse_pair(text))
        if cfg.leadlag_mode == "raw":
            curve = raw_curve(updates, a, b, cfg.lags)
        else:
            curve = panel_curve(panel, a, b, cfg.lags)
        out[text] = {"x": a, "y": b, "lags": curve.lags, "rho": curve.rho, **curve.summary()}
    return out


def stage_bootstrap(updates, panel, cfg):
    out = {}
    for text in cfg.pairs:
        pair = tuple(resolve(panel, p) for p in parse_pair(text))
        res = bootstrap_pair(panel, pair, cfg.bootstrap)
        out[text] = {name: r.summary() for name, r in res.items()}
    return out


def stage_mst(updates, panel, cfg):
    matrix, tree, centred = day_network(panel, cfg.lags)
    return {"instruments": matrix.instruments, "llc": matrix.llc, "llt": matrix.llt,
            "edges": [list(e) for e in tree.edges], "weight": tree.weight,
            "lead_centered": centred}


def stage_pca(updates, panel, cfg):
    m = build_variation_matrix(panel)
    res = run_pca(m)
    return {"explained_ratio": res.explained_ratio, "pc1_rescaled": res.pc1_rescaled,
            "partial_corr": partial_correlation_matrix(m, textbook=cfg.textbook_partial)}


def stage_regress(signals, panel, cfg):
    fits = fit_day(signals, cfg.horizons, cfg.models, panel.date)
    gaps = {str(h): identity_gap(signals, h) for h in cfg.horizons} if 2 in cfg.models else {}
    return {"fits": fits, "identity_gap": gaps}


PER_DAY = {"stats": stage_stats, "leadlag": stage_leadlag, "bootstrap": stage_bootstrap,
           "mst": stage_mst, "pca": stage_pca}


@dataclass
class DayResult:
    date: str
    instruments: tuple
    results: dict


def analyze_day(path: Path, cfg: RunConfig, stages: Sequence[str] = STAGES) -> DayResult:
    """Run the requested per-day stages; errors are re-raised tagged with module and day."""
    module, day = "sync", path.stem
    try:
        updates = load_updates(path, cfg)
        day = updates.date or day
        panel = sync_day(updates, cfg)
        res: dict = {"panel": panel}
        signals = None
        for stage in stages:
            if stage in ("signal", "regress", "backtest") and signals is None:
                module = "signal"
                signals = res["signals"] = compute_signals(panel, cfg.ema_cycle, cfg.horizons)
            module = stage
            if module in PER_DAY:
                res[module] = PER_DAY[module](updates, panel, cfg)
            elif module == "regress":
                res[module] = stage_regress(signals, panel, cfg)
            elif module == "backtest":
                res[module] = DayData.from_panel(panel, signals)
        return DayResult(day, panel.instruments, res)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(module, day, exc) from exc


def run_days(cfg: RunConfig, stages: Sequence[str], files: Sequence[Path] | None = None) -> list[DayResult]:
    files = day_files(cfg) if files is None else files
    work = partial(analyze_day, cfg=cfg, stages=tuple(stages))
    if cfg.jobs > 1 and len(files) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(work, files))
    return [work(f) for f in files]


# ---------------------------------------------------------------- synthetic input

def _synth_one(day: int, cfg: RunConfig, out: str) -> str:
    sd = generate_day(cfg.synth, day)
    buf = io.StringIO()
    write_lob_stream(sd.updates, buf, header_comment(cfg))
    path = Path(out) / f"{sd.date}.csv"
    write_atomic(path, buf.getvalue())
    return str(path)


def synth_corpus(cfg: RunConfig, out_dir: str | Path) -> list[Path]:
    if cfg.synth is None:
        raise StageError("synth", None, LeadLagError("config has no 'synth' section"))
    days = range(cfg.synth.n_days)
    work = partial(_synth_one, cfg=cfg, out=str(out_dir))
    if cfg.jobs > 1 and len(days) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            paths = list(pool.map(work, days))
    else:
        paths = [work(d) for d in days]
    return [Path(p) for p in paths]


# ---------------------------------------------------------------- writers

def write_sync(days: list[DayResult], cfg: RunConfig, out: Path, fmt: str = "bin") -> None:
    for d in days:
        panel = d.results["panel"]
        if fmt == "csv":
            buf = io.StringIO()
            write_panel_csv(panel, buf, header_comment(cfg))
            write_atomic(out / "panels" / f"{d.date}.panel.csv", buf.getvalue())
        else:
            buf = io.BytesIO()
            write_panel_binary(panel, buf, meta(cfg))
            write_atomic(out / "panels" / f"{d.date}.panel.bin", buf.getvalue())


def write_stats(days, cfg, out):
    rows = [r for d in days for r in d.results["stats"]]
    cols = ["date", "instrument", "volume", "avg_spread", "ann_vol", "avg_abs_mid_change"]
    write_atomic(out / "stats.csv", csv_text(cfg, cols, rows))


def _qs(values) -> dict:
    v = [x for x in values if x is not None and math.isfinite(x)]
    if not v:
        return {}
    return {"q05": quantile(v, 0.05), "q50": quantile(v, 0.5), "q95": quantile(v, 0.95)}


def write_leadlag(days, cfg, out, key="leadlag"):
    rows, per_day = [], []
    for d in days:
        for pair, r in d.results[key].items():
            rows += [{"date": d.date, "pair": pair.replace(",", "-"), "lag": l, "rho": p}
                     for l, p in zip(r["lags"].tolist(), r["rho"].tolist())]
            per_day.append({"date": d.date, "pair": pair, "x": r["x"], "y": r["y"],
                            **{k: r[k] for k in ("llt", "llc", "llr", "llr_infinite")}})
    write_atomic(out / f"{key}.csv", csv_text(cfg, ["date", "pair", "lag", "rho"], rows))
    summary = {}
    for pair in cfg.pairs:
        items = [r for r in per_day if r["pair"] == pair]
        summary[pair] = {
            "days": len(items),
            "llt_eq_1": sum(r["llt"] == 1 for r in items),
            "llr_gt_1": sum(r["llr_infinite"] or (r["llr"] is not None and r["llr"] > 1) for r in items),
            "llt": _qs([r["llt"] for r in items]), "llc": _qs([r["llc"] for r in items]),
            "llr": _qs([r["llr"] for r in items])}
    write_atomic(out / f"{key}.json", json_text(cfg, {"summary": summary, "days": per_day}))
    return summary


def write_bootstrap(days, cfg, out):
    per_day = [{"date": d.date, "pairs": d.results["bootstrap"]} for d in days]
    summary = {p: {"days": len(days),
                   "flag_llr_q05_lt_1": sum(d.results["bootstrap"][p]["LLR"]["flag_llr_q05_lt_1"] for d in days),
                   "flag_llt_q05_lt_1": sum(d.results["bootstrap"][p]["LLT"]["flag_llt_q05_lt_1"] for d in days)}
               for p in cfg.pairs}
    body = {"config": to_mapping(cfg.bootstrap), "summary": summary, "days": per_day}
    write_atomic(out / "bootstrap.json", json_text(cfg, body))
    return summary


def write_mst(days, cfg, out):
    per_day = [{"date": d.date, **d.results["mst"]} for d in days]
    n = sum(bool(r["lead_centered"]) for r in per_day)
    summary = {"days": len(per_day), "lead_centered": n}
    write_atomic(out / "mst.json", json_text(cfg, {"summary": summary, "days": per_day}))
    return summary


def write_pca(days, cfg, out):
    per_day = [{"date": d.date, **d.results["pca"]} for d in days]
    k = len(per_day[0]["explained_ratio"])
    summary = {"explained_ratio": [_qs([float(r["explained_ratio"][i]) for r in per_day]) for i in range(k)],
               "pc1_rescaled": [_qs([float(r["pc1_rescaled"][i]) for r in per_day]) for i in range(k)],
               "textbook_partial": cfg.textbook_partial}
    write_atomic(out / "pca.json", json_text(cfg, {"summary": summary, "days": per_day}))
    return summary


def write_signals(days, cfg, out):
    for d in days:
        s = d.results["signals"]
        cols = ["tick", "warmup", "theta", "m1", "m2"] + [f"fwd_{h}" for h in s.fwd]
        table = {"tick": range(s.n_ticks), "warmup": s.warmup.tolist(), "theta": s.theta.tolist(),
                 "m1": s.m1.tolist(), "m2": s.m2.tolist()}
        for h, v in s.fwd.items():
            table[f"fwd_{h}"] = [x if math.isfinite(x) else None for x in v.tolist()]
        rows = (dict(zip(cols, vals)) for vals in zip(*(table[c] for c in cols)))
        write_atomic(out / "signals" / f"{d.date}.csv", csv_text(cfg, cols, rows))


def write_regress(days, cfg, out):
    fits = [f for d in days for f in d.results["regress"]["fits"]]
    cols = ["date", "model", "h", "n_obs", "r2", "beta0", "beta_theta", "beta1",
            "t_beta0", "t_beta_theta", "t_beta1"]
    write_atomic(out / "regress.csv", csv_text(cfg, cols, [f.as_row() for f in fits]))
    body = {"identity_gap_max": max((g for d in days for g in d.results["regress"]["identity_gap"].values()),
                                    default=None)}
    if len(days) >= 2:
        body["summary"] = summarize_fits(fits).to_json()
    write_atomic(out / "regress_summary.json", json_text(cfg, body))
    return body


def _metrics(m):
    return None if m is None else dict(vars(m))


def write_backtest(days, cfg, out):
    data = [d.results["backtest"] for d in days]
    split = cfg.strategy.split(len(data))
    calib = None
    skipped = None
    lam = cfg.strategy.lam
    if lam is None:
        base = cfg.strategy.strategy(cfg.ema_cycle)
        try:
            calib = calibrate_lambda(data[:split], base, cfg.strategy.grid)
            lam = calib.best
        except ValidationError as exc:
            # too few in-sample days (or no trades) for a Sharpe ratio
            skipped = str(exc)
            lam = StrategyConfig().lam
            logger.warning("lambda calibration skipped (%s); using %s", exc, lam)
    strat = cfg.strategy.strategy(cfg.ema_cycle, lam)
    report = run_backtest(data, strat, split)
    write_atomic(out / "backtest_daily.csv",
                 csv_text(cfg, ["date", "n_trades", "net_pnl", "cum_pnl"], report.daily_rows()))
    body = {"lambda_ticks": lam, "split_day": split, "fee_ticks": strat.fee_ticks,
            "exit": str(strat.exit), "pnl_per_trade_units": "ticks and Yuan; trades are round trips",
            "in_sample": _metrics(report.in_sample), "out_of_sample": _metrics(report.out_of_sample),
            "calibration": None if calib is None else {"best": calib.best,
                                                       "sharpe": {repr(k): v for k, v in calib.sharpes.items()}}}
    if skipped:
        body["calibration"] = {"skipped": skipped}
    write_atomic(out / "backtest_summary.json", json_text(cfg, body))
    return body


WRITERS: dict[str, Callable] = {
    "stats": write_stats, "leadlag": write_leadlag, "bootstrap": write_bootstrap,
    "mst": write_mst, "pca": write_pca, "signal": write_signals, "regress": write_regress,
    "backtest": write_backtest,
}


def run_pipeline(cfg: RunConfig, out: Path | None = None) -> dict:
    """Synthesise input if needed, run every stage, write all artifacts and ``summary.json``."""
    out = Path(out or cfg.output)
    if cfg.input is None and cfg.synth is not None:
        synth_corpus(cfg, out / "raw")
        cfg = replace(cfg, input=str(out / "raw"))
    cfg.validate_paths()
    days = run_days(cfg, STAGES)
    write_sync(days, cfg, out)
    summary = {}
    for stage in STAGES[1:]:
        try:
            summary[stage] = WRITERS[stage](days, cfg, out)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, None, exc) from exc
    summary.pop("signal", None)
    summary["days"] = [d.date for d in days]
    write_atomic(out / "summary.json", json_text(cfg, summary))
    return summary
