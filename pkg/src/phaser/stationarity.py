"""Augmented Dickey-Fuller unit-root statistic (constant, no trend)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["AdfResult", "ADF_CRITICAL_5PCT", "schwert_lag", "adf_design", "adf_statistic", "dataset_adf_summary"]

# asymptotic 5% critical value, constant-only regression
ADF_CRITICAL_5PCT = -2.86


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lag_order: int
    n_obs: int
    coefficients: np.ndarray
    reject_at_5pct: bool


def schwert_lag(n: int) -> int:
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def adf_design(x: np.ndarray, lag_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Build (y, X) for dy_t = a + g*y_{t-1} + sum_i d_i*dy_{t-i}.

    Columns of X are [1, y_{t-1}, dy_{t-1}, ..., dy_{t-p}].
    """
    dy = np.diff(x)
    p = lag_order
    y = dy[p:]
    cols = [np.ones_like(y), x[p:-1]]
    for i in range(1, p + 1):
        cols.append(dy[p - i : len(dy) - i])
    return y, np.column_stack(cols)


def adf_statistic(x, lag_order="auto") -> AdfResult:
    """t-ratio of the lagged-level coefficient in the ADF regression.

    ``lag_order="auto"`` picks ``floor(12 * (n/100)**0.25)`` lags.  More
    negative statistics mean stronger evidence against a unit root.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    n = len(x)
    if n < 20:
        raise ValueError(f"ADF needs at least 20 observations, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("ADF input contains non-finite values")
    if np.var(x) == 0:
        raise np.linalg.LinAlgError("constant series: ADF regression is singular")
    p = schwert_lag(n) if lag_order == "auto" else int(lag_order)
    if p < 0:
        raise ValueError("lag_order must be nonnegative")
    n_obs = n - p - 1
    k = p + 2
    if n_obs <= k:
        raise ValueError(f"only {n_obs} observations left for {k} regressors after lagging")

    y, X = adf_design(x, p)
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * diag.max():
        raise np.linalg.LinAlgError("ADF design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    sigma2 = resid @ resid / (n_obs - k)
    r_inv = np.linalg.solve(r, np.eye(k))
    var_gamma = sigma2 * (r_inv[1] @ r_inv[1])
    stat = float(beta[1] / np.sqrt(var_gamma))
    if not np.isfinite(stat):
        raise ArithmeticError("ADF statistic is not finite")
    return AdfResult(stat, p, n_obs, beta, stat < ADF_CRITICAL_5PCT)


def dataset_adf_summary(ds, lag_order="auto") -> np.ndarray:
    """Mean ADF statistic per variate over every sample in ``ds``."""
    n_var = ds.n_variates
    total = np.zeros(n_var)
    for i, sample in enumerate(ds.samples):
        for v in range(n_var):
            try:
                total[v] += adf_statistic(sample.values[v], lag_order).statistic
            except (ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
                raise type(exc)(f"sample {i}, variate {v}: {exc}") from exc
    return total / len(ds)
