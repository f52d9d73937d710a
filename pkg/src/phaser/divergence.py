"""Rényi / beta divergences between per-timestep Gaussian domains, mixture search,
ensemble disagreement estimators and the unseen-domain risk bound.

Two closed forms are provided for the Gaussian Rényi divergence.
:func:`renyi_gaussian_paper` is the published expression taken literally; it
uses ``(1 - q) * s_i**2 + s_j**2`` where the textbook form uses
``(1 - q) * s_i**2 + q * s_j**2``, so it is nonzero for identical Gaussians and
undefined at ``q = 2`` whenever ``s_j <= s_i``.  :func:`renyi_gaussian_standard`
is the textbook ``D_q(N(mu_i, s_i^2) || N(mu_j, s_j^2))`` and agrees with
quadrature.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DivergenceDomainError",
    "GaussianTrack",
    "MixtureSpec",
    "GaussianDensity",
    "MixtureDensity",
    "Ensemble",
    "BoundReport",
    "renyi_gaussian_paper",
    "renyi_gaussian_standard",
    "default_grid",
    "renyi_numeric",
    "beta_divergence",
    "epsilon_bound",
    "simplex_grid",
    "closest_mixture",
    "expected_disagreement",
    "expected_joint_error",
    "gibbs_risk",
    "risk_bound_rhs",
    "bound_report",
    "write_bound_csv",
]


class DivergenceDomainError(ValueError):
    """Parameters fall outside the region where the divergence is finite."""


# -- domain types -------------------------------------------------------


@dataclass(frozen=True)
class GaussianTrack:
    """Per-timestep mean and standard deviation of one domain."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        if mu.shape != sigma.shape or mu.ndim != 1:
            raise ValueError("mu and sigma must be 1-D and equally long")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("track values must be finite")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def __len__(self) -> int:
        return len(self.mu)

    def at(self, t: int) -> "GaussianDensity":
        return GaussianDensity(float(self.mu[t]), float(self.sigma[t]))

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}


@dataclass(frozen=True)
class MixtureSpec:
    weights: np.ndarray
    tracks: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(w) != len(self.tracks):
            raise ValueError("one weight per track is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must lie on the probability simplex")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "tracks", tuple(self.tracks))

    def at(self, t: int) -> "MixtureDensity":
        return MixtureDensity(self.weights, [tr.mu[t] for tr in self.tracks], [tr.sigma[t] for tr in self.tracks])


_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class GaussianDensity:
    mu: float
    sigma: float

    def logpdf(self, x):
        z = (np.asarray(x) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    @property
    def span(self) -> tuple[float, float, float]:
        return self.mu, self.mu, self.sigma


@dataclass(frozen=True)
class MixtureDensity:
    weights: np.ndarray
    mus: list
    sigmas: list

    def logpdf(self, x):
        x = np.asarray(x)
        terms = [
            math.log(w) + GaussianDensity(m, s).logpdf(x)
            for w, m, s in zip(self.weights, self.mus, self.sigmas)
            if w > 0
        ]
        return np.logaddexp.reduce(np.stack(terms), axis=0)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    @property
    def span(self) -> tuple[float, float, float]:
        return min(self.mus), max(self.mus), max(self.sigmas)


@dataclass
class Ensemble:
    """Finite stand-in for a distribution over classifiers.

    Each member maps an (N, ...) batch to N integer predictions.
    """

    members: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least 2 members")

    def predict(self, data) -> np.ndarray:
        return np.stack([np.asarray(m(data), dtype=np.int64).reshape(-1) for m in self.members])


@dataclass
class BoundReport:
    d_hat: float
    e_hat: float
    epsilon: float
    q: float
    rhs: float
    empirical_risk: float
    holds: bool

    @property
    def infinite(self) -> bool:
        return math.isinf(self.rhs)

    def as_row(self) -> dict:
        return asdict(self)


# -- closed forms -------------------------------------------------------


def _check_q(q: float) -> None:
    if not q > 0:
        raise DivergenceDomainError(f"q must be positive, got {q}")
    if q == 1:
        raise DivergenceDomainError("q = 1 is singular for these closed forms (use the KL limit)")


def renyi_gaussian_paper(mu_i, sigma_i, mu_j, sigma_j, q):
    """Published closed form, evaluated literally (vectorized)."""
    _check_q(q)
    mu_i, sigma_i, mu_j, sigma_j = (np.asarray(a, dtype=np.float64) for a in (mu_i, sigma_i, mu_j, sigma_j))
    mix = (1 - q) * sigma_i**2 + sigma_j**2
    if np.any(mix <= 0):
        raise DivergenceDomainError(f"(1-q)*sigma_i^2 + sigma_j^2 = {np.min(mix):.6g} <= 0 at q={q}")
    out = q * (mu_j - mu_i) ** 2 / (2 * mix) + np.log(np.sqrt(mix) / (sigma_i ** (1 - q) * sigma_j**q)) / (1 - q)
    return float(out) if out.ndim == 0 else out


def renyi_gaussian_standard(mu_i, sigma_i, mu_j, sigma_j, q):
    """``D_q(N(mu_i, sigma_i^2) || N(mu_j, sigma_j^2))`` (vectorized)."""
    _check_q(q)
    mu_i, sigma_i, mu_j, sigma_j = (np.asarray(a, dtype=np.float64) for a in (mu_i, sigma_i, mu_j, sigma_j))
    var_q = q * sigma_j**2 + (1 - q) * sigma_i**2
    if np.any(var_q <= 0):
        raise DivergenceDomainError(f"q*sigma_j^2 + (1-q)*sigma_i^2 = {np.min(var_q):.6g} <= 0 at q={q}")
    out = (
        np.log(sigma_j / sigma_i)
        + np.log(sigma_j**2 / var_q) / (2 * (q - 1))
        + q * (mu_i - mu_j) ** 2 / (2 * var_q)
    )
    return float(out) if out.ndim == 0 else out


def beta_divergence(rd, q):
    """``2 ** ((q - 1) / q * rd)``."""
    if not q > 0:
        raise DivergenceDomainError("q must be positive")
    out = np.power(2.0, (q - 1) / q * np.asarray(rd, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


# -- quadrature ---------------------------------------------------------


def default_grid(*densities, width: float = 8.0, n: int = 20001) -> np.ndarray:
    lo = min(d.span[0] for d in densities)
    hi = max(d.span[1] for d in densities)
    s = max(d.span[2] for d in densities)
    return np.linspace(lo - width * s, hi + width * s, n)


def _logpdf(d, x):
    if hasattr(d, "logpdf"):
        return d.logpdf(x)
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(d(x), dtype=np.float64))


def renyi_numeric(p, r, q: float, grid=None, *, mass_tol: float = 1e-10) -> float:
    """``1/(q-1) * ln integral p^q r^(1-q) dx`` by trapezoidal quadrature.

    ``p`` and ``r`` are density objects (with ``logpdf``) or plain callables
    returning densities.  Raises if either density has more than ``mass_tol``
    of its mass off the grid.
    """
    _check_q(q)
    if grid is None:
        grid = default_grid(p, r)
    grid = np.asarray(grid, dtype=np.float64)
    lp, lr = _logpdf(p, grid), _logpdf(r, grid)
    for name, lg in (("p", lp), ("r", lr)):
        mass = np.trapezoid(np.exp(lg), grid)
        if abs(1.0 - mass) > mass_tol:
            raise ArithmeticError(f"grid misses {abs(1.0 - mass):.3e} of the mass of {name}")
    with np.errstate(invalid="ignore"):
        log_integrand = q * lp + (1 - q) * lr
    # both densities underflow to zero: contributes nothing
    log_integrand = np.where(np.isneginf(lp) & np.isneginf(lr), -np.inf, log_integrand)
    if np.any(np.isnan(log_integrand)) or np.any(np.isposinf(log_integrand)):
        return math.inf
    peak = np.max(log_integrand)
    integral = np.trapezoid(np.exp(log_integrand - peak), grid)
    return float((math.log(integral) + peak) / (q - 1))


# -- bounds over tracks -------------------------------------------------


_FORMS = {"paper": renyi_gaussian_paper, "standard": renyi_gaussian_standard}


def epsilon_bound(tracks, q: float, form: str = "paper") -> tuple[float, tuple[int, int, int]]:
    """Max beta divergence over ordered pairs i != j and timesteps.

    Returns ``(value, (i, j, t))``; ties go to the lowest (i, j, t).
    """
    if len(tracks) < 2:
        raise ValueError("epsilon_bound needs at least 2 tracks")
    t_len = len(tracks[0])
    if any(len(tr) != t_len for tr in tracks):
        raise ValueError("all tracks must have equal length")
    rd_fn = _FORMS[form]
    best, where = -math.inf, (-1, -1, -1)
    for i, j in itertools.permutations(range(len(tracks)), 2):
        a, b = tracks[i], tracks[j]
        try:
            rd = np.atleast_1d(rd_fn(a.mu, a.sigma, b.mu, b.sigma, q))
        except DivergenceDomainError as exc:
            mix = (1 - q) * a.sigma**2 + (b.sigma**2 if form == "paper" else q * b.sigma**2)
            t_bad = int(np.argmax(mix <= 0))
            raise DivergenceDomainError(f"pair ({i}, {j}) at t={t_bad}: {exc}") from exc
        beta = np.atleast_1d(beta_divergence(rd, q))
        t = int(np.argmax(beta))
        if beta[t] > best:
            best, where = float(beta[t]), (i, j, t)
    return best, where


def simplex_grid(n_sources: int, resolution: int) -> np.ndarray:
    """All weight vectors with entries k/(resolution-1) summing to 1, lexicographic order."""
    steps = resolution - 1
    pts = [c for c in itertools.product(range(steps + 1), repeat=n_sources) if sum(c) == steps]
    return np.array(sorted(pts, reverse=True), dtype=np.float64) / steps


def closest_mixture(target: GaussianTrack, sources, q: float, grid_resolution: int = 11) -> MixtureSpec:
    """Exhaustive simplex-grid search for the mixture of ``sources`` closest to ``target``.

    The objective is the time-averaged quadrature Rényi divergence
    ``RD_q(target_t || mixture_t)``.  Ties keep the first grid point visited.
    """
    sources = list(sources)
    if not 1 <= len(sources) <= 4:
        raise ValueError("closest_mixture supports 1 to 4 sources")
    if len(sources) == 1:
        return MixtureSpec(np.ones(1), sources)
    if grid_resolution < 11:
        raise ValueError("grid_resolution must be >= 11 points per simplex edge")
    t_len = len(target)
    if any(len(s) != t_len for s in sources):
        raise ValueError("target and sources must have equal length")
    best, best_w = math.inf, None
    for w in simplex_grid(len(sources), grid_resolution):
        spec = MixtureSpec(w, sources)
        score = np.mean([renyi_numeric(target.at(t), spec.at(t), q) for t in range(t_len)])
        if score < best:
            best, best_w = score, w
    return MixtureSpec(best_w, sources)


# -- ensemble estimators ------------------------------------------------


def _predictions(ens, data) -> np.ndarray:
    preds = ens.predict(data) if hasattr(ens, "predict") else np.asarray(ens, dtype=np.int64)
    if preds.ndim != 2 or preds.shape[0] < 2:
        raise ValueError("need predictions from at least 2 ensemble members")
    if preds.shape[1] == 0:
        raise ValueError("empty data")
    return preds


def expected_disagreement(ens, data=None) -> float:
    """Mean over samples and unordered member pairs of I[h(x) != h'(x)].

    ``ens`` is an :class:`Ensemble` (called on ``data``) or an (M, N)
    prediction matrix.
    """
    p = _predictions(ens, data)
    m = p.shape[0]
    counts = np.stack([(p == k).sum(axis=0) for k in np.unique(p)]).astype(np.float64)
    agree = float((counts * (counts - 1) / 2).sum())
    pairs = m * (m - 1) / 2
    return float(1.0 - agree / (pairs * p.shape[1]))


def expected_joint_error(ens, data=None, labels=None) -> float:
    """Mean over samples and unordered member pairs of I[h(x) != y] * I[h'(x) != y]."""
    p = _predictions(ens, data)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(y) != p.shape[1]:
        raise ValueError("labels do not match the data")
    m = p.shape[0]
    wrong = (p != y).sum(axis=0).astype(np.float64)
    return float((wrong * (wrong - 1) / 2).sum() / (m * (m - 1) / 2 * p.shape[1]))


def gibbs_risk(ens, data=None, labels=None) -> float:
    """Mean member error rate."""
    p = _predictions(ens, data)
    return float((p != np.asarray(labels).reshape(-1)).mean())


def risk_bound_rhs(d_hat: float, e_hat: float, epsilon: float, q: float) -> float:
    """``0.5 * d_hat + epsilon * e_hat ** (1 - 1/q)``.

    For ``q < 1`` and ``e_hat == 0`` the exponent is negative and the value is
    ``inf``; a RuntimeWarning flags it.
    """
    if not (0 <= d_hat <= 1 and 0 <= e_hat <= 1):
        raise ValueError("d_hat and e_hat must lie in [0, 1]")
    if epsilon < 0 or not q > 0:
        raise ValueError("need epsilon >= 0 and q > 0")
    expo = 1 - 1 / q
    if e_hat == 0:
        if expo < 0:
            warnings.warn("e_hat = 0 with q < 1: bound is infinite", RuntimeWarning, stacklevel=2)
            return math.inf
        term = 0.0 if expo > 0 else 1.0
    else:
        term = e_hat**expo
    return 0.5 * d_hat + epsilon * term


def bound_report(d_hat, e_hat, epsilon, q, empirical_risk) -> BoundReport:
    rhs = risk_bound_rhs(d_hat, e_hat, epsilon, q)
    return BoundReport(float(d_hat), float(e_hat), float(epsilon), float(q), float(rhs), float(empirical_risk), bool(rhs >= empirical_risk))


def write_bound_csv(report: BoundReport, path) -> None:
    row = report.as_row()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(row))
        w.writerow([repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v for v in row.values()])
