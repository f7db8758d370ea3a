"""Per-day OLS fits of the spread-feedback (Model1) and momentum-augmented (Model2) forecasts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import RankDeficientError, ValidationError
from .signal import SignalSeries

MODEL1 = "Model1"
MODEL2 = "Model2"


@dataclass(frozen=True)
class OlsResult:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    r2: float
    n_obs: int
    fitted: np.ndarray

    @property
    def t_stats(self) -> np.ndarray:
        return self.coef / self.se

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])


def fit_ols(y, X, names: Sequence[str] | None = None, intercept: bool = True,
            rcond: float = 1e-10) -> OlsResult:
    """Least squares with classical standard errors and centred R².

    Rank is checked from the singular values of the column-scaled design; a
    deficient design raises :class:`RankDeficientError` naming the columns
    involved in the (numerically) null direction.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = list(names) if names is not None else [f"x{i + 1}" for i in range(X.shape[1])]
    if intercept:
        X = np.column_stack([np.ones(len(y)), X])
        names = ["const"] + names
    n, p = X.shape
    if len(y) != n:
        raise ValidationError("response and design have different lengths")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise ValidationError("non-finite values in regression inputs")
    if n < p + 1:
        raise ValidationError(f"need at least {p + 1} observations for {p} parameters, got {n}")

    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    _, sv, vt = np.linalg.svd(X / scale, full_matrices=False)
    if sv[-1] <= rcond * sv[0]:
        null = vt[-1]
        involved = [names[i] for i in np.flatnonzero(np.abs(null) > 1e-6 * np.abs(null).max())]
        raise RankDeficientError(involved)

    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    resid = y - fitted
    rss = float(resid @ resid)
    sigma2 = rss / (n - p)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(xtx_inv) * sigma2)
    yc = y - y.mean()
    tss = float(yc @ yc)
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)
    return OlsResult(tuple(names), coef, se, min(1.0, max(0.0, r2)), n, fitted)


@dataclass(frozen=True)
class RegressionFit:
    model: str
    horizon: int
    beta0: float
    beta_theta: float
    beta1: float | None
    t_stats: dict
    r2: float
    n_obs: int
    date: str | None = None
    se: dict | None = None

    def coefficients(self) -> dict:
        out = {"beta0": self.beta0, "beta_theta": self.beta_theta}
        if self.beta1 is not None:
            out["beta1"] = self.beta1
        return out

    def as_row(self) -> dict:
        row = {"date": self.date, "model": self.model, "h": self.horizon, "n_obs": self.n_obs,
               "r2": self.r2, **self.coefficients()}
        row.update({f"t_{k}": v for k, v in self.t_stats.items()})
        return row


def _rows(signals: SignalSeries, h: int) -> np.ndarray:
    if h not in signals.fwd:
        raise ValidationError(f"forward change for horizon {h} not computed")
    return signals.usable(h)


def _to_fit(model: str, h: int, res: OlsResult, date) -> RegressionFit:
    keys = {"const": "beta0", "theta": "beta_theta", "m1": "beta1"}
    t = {keys[n]: float(v) for n, v in zip(res.names, res.t_stats)}
    se = {keys[n]: float(v) for n, v in zip(res.names, res.se)}
    return RegressionFit(model, h, res["const"], res["theta"],
                         res["m1"] if "m1" in res.names else None, t, res.r2, res.n_obs, date, se)


def fit_model1(signals: SignalSeries, h: int, date: str | None = None) -> RegressionFit:
    """``dF1(t, t+h) = b0 + b_theta * theta(t)``."""
    m = _rows(signals, h)
    res = fit_ols(signals.fwd[h][m], signals.theta[m], ["theta"])
    return _to_fit(MODEL1, h, res, date)


def fit_model2(signals: SignalSeries, h: int, date: str | None = None) -> RegressionFit:
    """``dF1(t, t+h) = b0 + b_theta * theta(t) + b1 * m1(t)``."""
    m = _rows(signals, h)
    res = fit_ols(signals.fwd[h][m], np.column_stack([signals.theta[m], signals.m1[m]]),
                  ["theta", "m1"])
    return _to_fit(MODEL2, h, res, date)


def momentum_weights(fit: RegressionFit) -> tuple[float, float]:
    """Model2 rewritten on the two momenta: ``(b_theta + b1, -b_theta)``."""
    if fit.beta1 is None:
        raise ValidationError("momentum weights need a Model2 fit")
    return fit.beta_theta + fit.beta1, -fit.beta_theta


def identity_gap(signals: SignalSeries, h: int) -> float:
    """Largest fitted-value difference between the (theta, m1) and (m1, m2) forms.

    Checked two ways: plugging the implied weights into the momentum form,
    and an independent direct fit on ``(m1, m2)``.
    """
    m = _rows(signals, h)
    fit = fit_model2(signals, h)
    w1, w2 = momentum_weights(fit)
    theta, m1, m2 = signals.theta[m], signals.m1[m], signals.m2[m]
    via_theta = fit.beta0 + fit.beta_theta * theta + fit.beta1 * m1
    via_weights = fit.beta0 + w1 * m1 + w2 * m2
    direct = fit_ols(signals.fwd[h][m], np.column_stack([m1, m2]), ["m1", "m2"]).fitted
    return float(max(np.max(np.abs(via_theta - via_weights)), np.max(np.abs(via_theta - direct))))


def fit_day(signals: SignalSeries, horizons=(1, 2, 4, 8), models=(1, 2),
            date: str | None = None) -> list[RegressionFit]:
    fits = []
    for h in horizons:
        if 1 in models:
            fits.append(fit_model1(signals, h, date))
        if 2 in models:
            fits.append(fit_model2(signals, h, date))
    return fits


def fit_pooled(days: Sequence[SignalSeries], h: int, model: int = 1) -> RegressionFit:
    """Single fit on all usable rows of all days (the alternative to per-day fits)."""
    y, cols = [], []
    for s in days:
        m = _rows(s, h)
        y.append(s.fwd[h][m])
        cols.append(np.column_stack([s.theta[m], s.m1[m]]))
    X = np.vstack(cols)
    names = ["theta", "m1"]
    if model == 1:
        X, names = X[:, :1], ["theta"]
    res = fit_ols(np.concatenate(y), X, names)
    return _to_fit(MODEL1 if model == 1 else MODEL2, h, res, "pooled")


@dataclass(frozen=True)
class CoefSummary:
    mean: float
    lo: float
    hi: float


@dataclass(frozen=True)
class FitPanelSummary:
    fits: tuple
    table: dict             # (model, h) -> {name: CoefSummary}

    def to_json(self) -> dict:
        out = {}
        for (model, h), stats in sorted(self.table.items()):
            out.setdefault(model, {})[str(h)] = {
                k: {"mean": v.mean, "q025": v.lo, "q975": v.hi} for k, v in stats.items()}
        return out


def summarize_fits(fits: Sequence[RegressionFit]) -> FitPanelSummary:
    """Cross-day mean and empirical 2.5%/97.5% quantiles per coefficient and R²."""
    groups: dict = {}
    for f in fits:
        groups.setdefault((f.model, f.horizon), []).append(f)
    table = {}
    for key, group in groups.items():
        if len(group) < 2:
            raise ValidationError(f"need at least 2 days to summarise {key}")
        stats = {}
        for name in ("beta0", "beta_theta", "beta1", "r2"):
            vals = [getattr(f, name) for f in group]
            if any(v is None for v in vals):
                continue
            v = np.asarray(vals, dtype=float)
            lo, hi = np.quantile(v, [0.025, 0.975])
            stats[name] = CoefSummary(float(v.mean()), float(lo), float(hi))
        table[key] = stats
    return FitPanelSummary(tuple(fits), table)
