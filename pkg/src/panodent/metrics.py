"""Evaluation metrics: MCC, cross-entropy, composite loss, Fleiss' kappa, OLS.

MCC has two modes. Evaluation mode returns 0 when any denominator factor is
zero (the standard convention for degenerate confusion matrices, e.g. a
condition nobody predicted). Loss mode adds a small epsilon to the
denominator instead, keeping the value finite and smooth for the soft
(probability-weighted) counts used during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateAgreement,
    DegenerateVariance,
    EmptyCounts,
    LengthMismatch,
    RankDeficient,
)


@dataclass(frozen=True)
class ConfusionCounts:
    """TP/FP/FN/TN cell counts; reals so soft counts fit the same type."""

    tp: float
    fp: float
    fn: float
    tn: float

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.fn + self.tn


def confusion_from_predictions(pred, truth) -> ConfusionCounts:
    """Exact counts from hard binary predictions."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has shape {pred.shape}, truth {truth.shape}")
    return ConfusionCounts(
        tp=float(np.sum((pred == 1) & (truth == 1))),
        fp=float(np.sum((pred == 1) & (truth == 0))),
        fn=float(np.sum((pred == 0) & (truth == 1))),
        tn=float(np.sum((pred == 0) & (truth == 0))),
    )


def soft_confusion(y, p) -> ConfusionCounts:
    """Probability-weighted confusion counts (differentiable surrogate)."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    if y.shape != p.shape:
        raise LengthMismatch(f"y has shape {y.shape}, p {p.shape}")
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return ConfusionCounts(
        tp=float(np.sum(y * p)),
        fp=float(np.sum((1 - y) * p)),
        fn=float(np.sum(y * (1 - p))),
        tn=float(np.sum((1 - y) * (1 - p))),
    )


def mcc(counts: ConfusionCounts, epsilon: float | None = None) -> float:
    """Matthews correlation coefficient of a confusion matrix.

    With ``epsilon=None`` (evaluation mode) a zero denominator factor yields
    0. With an epsilon (loss mode) the value is (tp*tn - fp*fn) /
    (sqrt(product) + epsilon).
    """
    if counts.total <= 0:
        raise EmptyCounts("confusion matrix has zero total")
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    numerator = tp * tn - fp * fn
    product = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if epsilon is None:
        if product == 0:
            return 0.0
        return numerator / math.sqrt(product)
    return numerator / (math.sqrt(product) + epsilon)


@dataclass(frozen=True)
class LossConfig:
    """Mixing weight and numerical guards for the composite loss."""

    alpha: float = 0.5
    epsilon: float = 1e-8
    clamp: float = 1e-7

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.clamp < 0.5:
            raise ValueError(f"clamp must be in (0, 0.5), got {self.clamp}")


def bce(y, p, clamp: float = 1e-7) -> float:
    """Mean binary cross-entropy with probabilities clamped away from 0/1."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    if y.shape != p.shape:
        raise LengthMismatch(f"y has shape {y.shape}, p {p.shape}")
    if y.size == 0:
        raise EmptyCounts("cannot evaluate cross-entropy on empty vectors")
    p = np.clip(p, clamp, 1.0 - clamp)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def combined_loss(y, p, config: LossConfig = LossConfig()) -> float:
    """alpha * BCE + (1 - alpha) * (1 - soft MCC)."""
    soft = mcc(soft_confusion(y, p), epsilon=config.epsilon)
    return config.alpha * bce(y, p, config.clamp) + (1.0 - config.alpha) * (1.0 - soft)


# --- Fleiss' kappa -----------------------------------------------------------


@dataclass(frozen=True)
class AgreementTable:
    """N items x k categories table of rating counts; rows sum to n raters."""

    counts: np.ndarray
    n_raters: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 2:
            raise ValueError("counts must be a 2-D table")
        if counts.min(initial=0) < 0:
            raise ValueError("counts must be non-negative")
        if not np.all(counts.sum(axis=1) == self.n_raters):
            raise ValueError("every row must sum to the number of raters")

    @property
    def n_items(self) -> int:
        return self.counts.shape[0]

    @property
    def n_categories(self) -> int:
        return self.counts.shape[1]

    @classmethod
    def from_binary_votes(cls, positive_votes, n_raters: int) -> "AgreementTable":
        """Two-category table from per-item positive-vote counts."""
        positives = np.asarray(positive_votes, dtype=float)
        return cls(np.column_stack([n_raters - positives, positives]), n_raters)


def fleiss_kappa(table: AgreementTable) -> float:
    """Chance-corrected agreement among n raters over N categorical items.

    kappa = (P_bar - Pe_bar) / (1 - Pe_bar), with per-item agreement
    P_i = (sum_j n_ij^2 - n) / (n (n - 1)) and chance agreement
    Pe_bar = sum_j p_j^2 over category shares p_j.
    """
    if table.n_raters < 2:
        raise ValueError("Fleiss' kappa needs at least 2 raters")
    counts = table.counts
    n = table.n_raters
    p_item = (np.sum(counts**2, axis=1) - n) / (n * (n - 1))
    p_bar = float(np.mean(p_item))
    shares = counts.sum(axis=0) / (table.n_items * n)
    pe_bar = float(np.sum(shares**2))
    if pe_bar >= 1.0:
        raise DegenerateAgreement(
            "all ratings fall in a single category; kappa is undefined"
        )
    return (p_bar - pe_bar) / (1.0 - pe_bar)


# --- ordinary least squares --------------------------------------------------


@dataclass(frozen=True)
class RegressionFit:
    """OLS result: intercept-first coefficients, centered R^2, residuals."""

    coefficients: np.ndarray
    r_squared: float
    residuals: np.ndarray
    fitted: np.ndarray = field(repr=False, default=None)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.intercept + X @ self.slopes


def ols_fit(X, y, with_intercept: bool = True) -> RegressionFit:
    """Least-squares fit via normal equations with a pivoting solve.

    Regressor count is tiny everywhere this is used (d <= 2), so the normal
    equations are well conditioned. R^2 is the centered 1 - SSE/SST.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    n_obs, n_regressors = X.shape
    if y.shape != (n_obs,):
        raise LengthMismatch(f"y has shape {y.shape}, expected ({n_obs},)")
    design = np.column_stack([np.ones(n_obs), X]) if with_intercept else X
    n_params = design.shape[1]
    if n_obs <= n_regressors + 1:
        raise RankDeficient(
            f"{n_obs} observations cannot support {n_regressors} regressors"
        )
    if np.linalg.matrix_rank(design) < n_params:
        raise RankDeficient("design matrix is rank deficient")

    gram = design.T @ design
    coefficients = np.linalg.solve(gram, design.T @ y)
    fitted = design @ coefficients
    residuals = y - fitted

    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise DegenerateVariance("response has zero variance; R^2 undefined")
    sse = float(residuals @ residuals)
    r_squared = min(1.0, max(0.0, 1.0 - sse / sst))

    if not with_intercept:
        coefficients = np.concatenate([[0.0], coefficients])
    return RegressionFit(
        coefficients=coefficients, r_squared=r_squared, residuals=residuals, fitted=fitted
    )
