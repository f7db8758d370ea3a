"""PCA of lead-aligned tick variations and conditional (partial) correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimatorUndefined, SingularDenominatorError, ValidationError
from .tick_sync import SyncedPanel

MIN_PCA_ROWS = 5


@dataclass(frozen=True)
class VariationMatrix:
    """Rows ``[dF1(t-1), dF2(t), ..., dFn(t)]`` in Yuan, one per usable tick ``t >= 2``."""

    values: np.ndarray
    instruments: tuple
    first_tick: int = 2


def build_variation_matrix(panel: SyncedPanel) -> VariationMatrix:
    """Tick-by-tick mid changes with the lead (first) column shifted back one tick."""
    if panel.n_ticks < 3:
        raise ValidationError("need at least 3 ticks to build the variation matrix")
    d = np.diff(panel.mid2, axis=0) * (panel.tick_size / 2)
    # d[t - 1] is the change from t - 1 to t
    values = np.column_stack([d[:-1, 0], d[1:, 1:]])
    return VariationMatrix(values, panel.instruments)


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray          # rows are loading vectors, PC1 first
    explained_ratio: np.ndarray
    eigenvalues: np.ndarray
    mean: np.ndarray

    @property
    def pc1_rescaled(self) -> np.ndarray:
        """PC1 loadings divided by the lead-contract loading."""
        return self.components[0] / self.components[0, 0]

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values) - self.mean) @ self.components.T

    def inverse_transform(self, scores) -> np.ndarray:
        return np.asarray(scores) @ self.components + self.mean


def run_pca(m: VariationMatrix | np.ndarray) -> PcaResult:
    """Covariance PCA on mean-centred columns.

    Components are sorted by decreasing variance and signed so that the first
    column's loading is positive (or, if it is zero, the largest loading).
    """
    x = np.asarray(m.values if isinstance(m, VariationMatrix) else m, dtype=float)
    if x.ndim != 2 or x.shape[0] < MIN_PCA_ROWS:
        raise ValidationError(f"PCA needs a 2-d matrix with at least {MIN_PCA_ROWS} rows")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (len(x) - 1)
    total = np.trace(cov)
    if total <= 0:
        raise EstimatorUndefined("zero total variance: PCA undefined")
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    v = v[:, order].T
    for row in v:
        pivot = row[0] if abs(row[0]) > 1e-12 else row[np.argmax(np.abs(row))]
        if pivot < 0:
            row *= -1
    return PcaResult(v, w / w.sum(), w, mean)


def partial_correlation(rho_ij: float, rho_i1: float, rho_j1: float, textbook: bool = False) -> float:
    """Correlation of i and j conditional on the lead contract's lagged change.

    By default the denominator keeps the squared terms under the root,
    ``sqrt((1 - rho_i1**2)**2 * (1 - rho_j1**2)**2)``. ``textbook=True``
    uses the usual first-order partial correlation,
    ``sqrt((1 - rho_i1**2) * (1 - rho_j1**2))``. The two agree to first
    order for small conditioning correlations.
    """
    for r in (rho_ij, rho_i1, rho_j1):
        if not -1 <= r <= 1:
            raise ValidationError(f"correlation {r} outside [-1, 1]")
    a = 1 - rho_i1 ** 2
    b = 1 - rho_j1 ** 2
    if a == 0 or b == 0:
        raise SingularDenominatorError("conditioning correlation of magnitude 1")
    den = math.sqrt(a * b) if textbook else math.sqrt(a * a * b * b)
    value = (rho_ij - rho_i1 * rho_j1) / den
    if _valid_triple(rho_ij, rho_i1, rho_j1):
        if abs(value) > 1 + 1e-9:
            raise ValidationError(
                f"partial correlation {value:.6f} outside [-1, 1] for a valid correlation triple")
        value = min(1.0, max(-1.0, value))
    return value


def _valid_triple(r12: float, r13: float, r23: float) -> bool:
    det = 1 - r12 ** 2 - r13 ** 2 - r23 ** 2 + 2 * r12 * r13 * r23
    return det >= -1e-12


def partial_correlation_matrix(m: VariationMatrix, textbook: bool = False) -> np.ndarray:
    """Pairwise conditional correlations among the lagging columns given column 0."""
    c = np.corrcoef(m.values, rowvar=False)
    k = c.shape[0]
    out = np.full((k - 1, k - 1), np.nan)
    for i in range(1, k):
        for j in range(1, k):
            if i == j:
                out[i - 1, j - 1] = 1.0
            else:
                out[i - 1, j - 1] = partial_correlation(c[i, j], c[i, 0], c[j, 0], textbook)
    return out
