import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaser.divergence import (
    BoundReport,
    DivergenceDomainError,
    Ensemble,
    GaussianDensity,
    GaussianTrack,
    MixtureDensity,
    MixtureSpec,
    beta_divergence,
    bound_report,
    closest_mixture,
    epsilon_bound,
    expected_disagreement,
    expected_joint_error,
    gibbs_risk,
    renyi_gaussian_paper,
    renyi_gaussian_standard,
    renyi_numeric,
    risk_bound_rhs,
    simplex_grid,
    write_bound_csv,
)


def oracle_renyi(mu_i, s_i, mu_j, s_j, q, n=400001):
    # direct trapezoid on a very wide fixed grid, no shared helpers
    x = np.linspace(min(mu_i, mu_j) - 60, max(mu_i, mu_j) + 60, n)
    lp = -0.5 * ((x - mu_i) / s_i) ** 2 - np.log(s_i * np.sqrt(2 * np.pi))
    lr = -0.5 * ((x - mu_j) / s_j) ** 2 - np.log(s_j * np.sqrt(2 * np.pi))
    g = q * lp + (1 - q) * lr
    m = g.max()
    return (np.log(np.trapezoid(np.exp(g - m), x)) + m) / (q - 1)


# -- closed forms ---------------------------------------------------------


def test_verbatim_form_hand_values():
    # mix = 0.5 + 1 = 1.5: 0.5/(2*1.5) + 2*ln(sqrt(1.5))
    assert renyi_gaussian_paper(0, 1, 1, 1, 0.5) == pytest.approx(0.57213, abs=1e-4)
    assert renyi_gaussian_paper(0, 1, 1, 1, 0.5) == pytest.approx(1 / 6 + math.log(1.5), abs=1e-12)
    # nonzero for identical Gaussians
    assert renyi_gaussian_paper(0, 1, 0, 1, 0.5) == pytest.approx(math.log(1.5), abs=1e-12)


def test_verbatim_form_domain_error():
    # (1-2)*4 + 1 < 0
    with pytest.raises(DivergenceDomainError):
        renyi_gaussian_paper(0, 2, 0, 1, 2)
    # identical sigma at q=2: mix is exactly 0
    with pytest.raises(DivergenceDomainError):
        renyi_gaussian_paper(0, 1, 0, 1, 2)


def test_standard_form_hand_values():
    assert renyi_gaussian_standard(0, 1, 1, 1, 0.5) == pytest.approx(0.25, abs=1e-12)
    for q in (0.3, 0.5, 2, 4, 7):
        assert abs(renyi_gaussian_standard(0.7, 1.3, 0.7, 1.3, q)) < 1e-14
    # equal variances: q * dmu^2 / (2 sigma^2)
    assert renyi_gaussian_standard(0, 2, 3, 2, 3.0) == pytest.approx(3 * 9 / 8, abs=1e-12)


def test_standard_form_domain_error():
    with pytest.raises(DivergenceDomainError):
        renyi_gaussian_standard(0, 2.0, 0, 1.0, 4)  # 4 - 3*4 < 0
    for q in (0, -1, 1):
        with pytest.raises(DivergenceDomainError):
            renyi_gaussian_standard(0, 1, 0, 1, q)


def test_standard_form_vectorized():
    mu = np.linspace(0, 1, 5)
    out = renyi_gaussian_standard(mu, np.ones(5), np.zeros(5), np.full(5, 1.2), 2.0)
    assert out.shape == (5,)
    assert out[2] == pytest.approx(renyi_gaussian_standard(0.5, 1.0, 0.0, 1.2, 2.0))


@pytest.mark.parametrize("q", [0.5, 2.0, 4.0])
def test_standard_form_matches_quadrature(q):
    rng = np.random.default_rng(int(q * 10))
    # ratio bound keeps q*s_j^2 - (q-1)*s_i^2 > 0 with margin for q > 1
    hi = 1.3 if q == 2 else 1.1 if q == 4 else 2.0
    for _ in range(50):
        mu_i, mu_j = rng.uniform(-2, 2, 2)
        s_j = rng.uniform(0.5, 1.5)
        s_i = s_j * rng.uniform(0.5, hi)
        closed = renyi_gaussian_standard(mu_i, s_i, mu_j, s_j, q)
        grid = np.linspace(min(mu_i, mu_j) - 40, max(mu_i, mu_j) + 40, 200001)
        numeric = renyi_numeric(GaussianDensity(mu_i, s_i), GaussianDensity(mu_j, s_j), q, grid)
        assert abs(closed - numeric) < 1e-6
        assert abs(closed - oracle_renyi(mu_i, s_i, mu_j, s_j, q)) < 1e-6


def test_renyi_numeric_identical_is_zero():
    g = GaussianDensity(0.3, 0.8)
    assert abs(renyi_numeric(g, g, 2.0)) < 1e-12
    m = MixtureDensity(np.array([0.3, 0.7]), [0.0, 1.0], [1.0, 0.5])
    assert abs(renyi_numeric(m, m, 0.5)) < 1e-12


def test_renyi_numeric_grid_refinement():
    p, r = GaussianDensity(0, 1), GaussianDensity(0.5, 1.1)
    coarse = renyi_numeric(p, r, 2.0, np.linspace(-20, 20, 2001))
    fine = renyi_numeric(p, r, 2.0, np.linspace(-20, 20, 40001))
    assert abs(coarse - fine) < 1e-8


def test_renyi_numeric_plain_callables():
    p = lambda x: np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)  # noqa: E731
    r = lambda x: np.exp(-0.5 * (x - 1) ** 2) / np.sqrt(2 * np.pi)  # noqa: E731
    val = renyi_numeric(p, r, 0.5, np.linspace(-30, 30, 60001))
    assert val == pytest.approx(0.25, abs=1e-8)


def test_renyi_numeric_mass_deficit():
    with pytest.raises(ArithmeticError, match="mass"):
        renyi_numeric(GaussianDensity(0, 1), GaussianDensity(0, 1), 2.0, np.linspace(-1, 1, 101))


def test_renyi_numeric_divergent_integral_is_inf():
    # q*s_j^2 - (q-1)*s_i^2 < 0: integrand grows in the tails
    val = renyi_numeric(GaussianDensity(0, 2.0), GaussianDensity(0, 1.0), 4.0, np.linspace(-60, 60, 20001))
    assert val > 5 or math.isinf(val)


# -- beta -----------------------------------------------------------------


def test_beta_values():
    for q in (0.5, 2.0, 4.0):
        assert beta_divergence(0.0, q) == 1.0
    assert beta_divergence(1.0, 2.0) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert beta_divergence(1.0, 2.0) == pytest.approx(1.41421, abs=1e-5)
    # 2 ** (-ln 1.5) at q = 0.5
    assert beta_divergence(math.log(1.5), 0.5) == pytest.approx(2 ** (-math.log(1.5)), abs=1e-12)
    assert beta_divergence(math.log(1.5), 0.5) == pytest.approx(0.75500, abs=1e-5)
    with pytest.raises(DivergenceDomainError):
        beta_divergence(1.0, 0.0)


@given(st.floats(0, 10), st.floats(0, 10), st.sampled_from([1.5, 2.0, 4.0]))
def test_beta_monotone_in_rd_for_q_above_one(a, b, q):
    lo, hi = sorted((a, b))
    assert beta_divergence(lo, q) <= beta_divergence(hi, q)


# -- epsilon bound ----------------------------------------------------------


def test_epsilon_bound_elementwise_oracle():
    rng = np.random.default_rng(0)
    tracks = [GaussianTrack(rng.normal(size=8), rng.uniform(0.8, 1.2, 8)) for _ in range(3)]
    q = 0.5
    best, arg = -1.0, None
    for i, j in itertools.permutations(range(3), 2):
        for t in range(8):
            rd = renyi_gaussian_paper(tracks[i].mu[t], tracks[i].sigma[t], tracks[j].mu[t], tracks[j].sigma[t], q)
            b = 2 ** ((q - 1) / q * rd)
            if b > best:
                best, arg = b, (i, j, t)
    val, where = epsilon_bound(tracks, q)
    assert val == pytest.approx(best, abs=1e-12)
    assert where == arg


def test_epsilon_bound_identical_tracks_at_q2_is_domain_error():
    tr = GaussianTrack(np.zeros(4), np.ones(4))
    with pytest.raises(DivergenceDomainError, match=r"pair \(0, 1\) at t=0"):
        epsilon_bound([tr, tr], 2.0)
    # the textbook form is finite and gives beta = 1 there
    assert epsilon_bound([tr, tr], 2.0, form="standard") == (1.0, (0, 1, 0))


def test_epsilon_bound_locates_spike():
    mu = np.zeros(10)
    mu[5] = 3.0
    a, b = GaussianTrack(mu, np.ones(10)), GaussianTrack(np.zeros(10), np.ones(10))
    val, (i, j, t) = epsilon_bound([a, b], 2.0, form="standard")
    assert t == 5 and (i, j) == (0, 1)
    assert val == pytest.approx(2 ** (0.5 * 9.0), rel=1e-12)  # RD = q*9/2 = 9


def test_epsilon_bound_single_step_and_errors():
    a, b = GaussianTrack([0.0], [1.0]), GaussianTrack([1.0], [1.0])
    val, where = epsilon_bound([a, b], 0.5)
    assert where[2] == 0 and val > 0
    with pytest.raises(ValueError):
        epsilon_bound([a], 0.5)
    with pytest.raises(ValueError):
        epsilon_bound([a, GaussianTrack([0, 0], [1, 1])], 0.5)


def test_track_validation():
    with pytest.raises(ValueError):
        GaussianTrack([0, 1], [1.0])
    with pytest.raises(ValueError):
        GaussianTrack([0.0], [0.0])
    with pytest.raises(ValueError):
        GaussianTrack([np.nan], [1.0])


# -- mixtures ---------------------------------------------------------------


def test_simplex_grid():
    g = simplex_grid(3, 11)
    assert len(g) == 66
    assert np.allclose(g.sum(axis=1), 1)
    assert tuple(g[0]) == (1.0, 0.0, 0.0)


def test_mixture_spec_validation():
    tr = GaussianTrack([0.0], [1.0])
    with pytest.raises(ValueError):
        MixtureSpec([0.5, 0.6], (tr, tr))
    with pytest.raises(ValueError):
        MixtureSpec([1.0], (tr, tr))


def test_closest_mixture_vertex():
    s0 = GaussianTrack(np.zeros(4), np.ones(4))
    s1 = GaussianTrack(np.full(4, 2.0), np.ones(4))
    mix = closest_mixture(s0, [s0, s1], 2.0)
    assert tuple(mix.weights) == (1.0, 0.0)


def test_closest_mixture_single_source():
    s0 = GaussianTrack(np.zeros(3), np.ones(3))
    assert tuple(closest_mixture(GaussianTrack(np.ones(3), np.ones(3)), [s0], 2.0).weights) == (1.0,)


def test_closest_mixture_symmetric_midpoint():
    # symmetric sources around a symmetric target: optimum by symmetry is (0.5, 0.5)
    s0 = GaussianTrack(np.full(3, -0.5), np.ones(3))
    s1 = GaussianTrack(np.full(3, 0.5), np.ones(3))
    tgt = GaussianTrack(np.zeros(3), np.full(3, 1.05))
    mix = closest_mixture(tgt, [s0, s1], 2.0)
    assert np.allclose(mix.weights, [0.5, 0.5])


def test_closest_mixture_errors():
    s = GaussianTrack(np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        closest_mixture(s, [], 2.0)
    with pytest.raises(ValueError):
        closest_mixture(s, [s] * 5, 2.0)
    with pytest.raises(ValueError):
        closest_mixture(s, [s, s], 2.0, grid_resolution=5)


def test_convex_hull_beta_bounded_by_sources():
    rng = np.random.default_rng(11)
    q = 2.0
    mus = rng.uniform(-1, 1, 3)
    sig = rng.uniform(0.9, 1.2, 3)  # pairwise ratio < sqrt(2)
    src_max = max(
        beta_divergence(renyi_gaussian_standard(mus[i], sig[i], mus[j], sig[j], q), q)
        for i, j in itertools.permutations(range(3), 2)
    )
    grid = np.linspace(-30, 30, 30001)
    for _ in range(100):
        w1, w2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        d1, d2 = MixtureDensity(w1, list(mus), list(sig)), MixtureDensity(w2, list(mus), list(sig))
        assert beta_divergence(renyi_numeric(d1, d2, q, grid), q) <= src_max + 1e-6


# -- ensemble estimators ------------------------------------------------------


def brute(preds, y):
    m, n = preds.shape
    pairs = list(itertools.combinations(range(m), 2))
    d = sum(preds[a, i] != preds[b, i] for a, b in pairs for i in range(n)) / (len(pairs) * n)
    e = sum((preds[a, i] != y[i]) and (preds[b, i] != y[i]) for a, b in pairs for i in range(n)) / (len(pairs) * n)
    return d, e


def test_estimators_identical_members():
    p = np.tile(np.array([0, 1, 2, 1]), (3, 1))
    y = np.array([0, 1, 1, 0])
    assert expected_disagreement(p) == 0.0
    assert expected_joint_error(p, labels=y) == 0.5
    assert gibbs_risk(p, labels=y) == 0.5


def test_estimators_always_disagree():
    p = np.array([[0, 0, 0], [1, 1, 1]])
    assert expected_disagreement(p) == 1.0
    assert expected_joint_error(p, labels=np.array([0, 1, 2])) == pytest.approx(1 / 3)


def test_estimators_brute_force():
    rng = np.random.default_rng(3)
    p = rng.integers(0, 3, (3, 4))
    y = rng.integers(0, 3, 4)
    d, e = brute(p, y)
    assert expected_disagreement(p) == pytest.approx(d, abs=1e-15)
    assert expected_joint_error(p, labels=y) == pytest.approx(e, abs=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_estimators_member_permutation_and_gibbs_bound(seed):
    rng = np.random.default_rng(seed)
    m, n, k = rng.integers(2, 6), rng.integers(1, 12), rng.integers(2, 5)
    p = rng.integers(0, k, (m, n))
    y = rng.integers(0, k, n)
    perm = rng.permutation(m)
    d, e = expected_disagreement(p), expected_joint_error(p, labels=y)
    assert expected_disagreement(p[perm]) == pytest.approx(d, abs=1e-15)
    assert expected_joint_error(p[perm], labels=y) == pytest.approx(e, abs=1e-15)
    bd, be = brute(p, y)
    assert d == pytest.approx(bd, abs=1e-12) and e == pytest.approx(be, abs=1e-12)
    # pairwise: I[h!=y] + I[h'!=y] <= I[h!=h'] + 2 I[h!=y] I[h'!=y]
    assert gibbs_risk(p, labels=y) <= 0.5 * d + e + 1e-12


def test_ensemble_callable_members():
    ens = Ensemble([lambda x: np.zeros(len(x)), lambda x: (np.asarray(x) > 0).astype(int)])
    x = np.array([-1.0, 1.0, 2.0, -3.0])
    assert expected_disagreement(ens, x) == 0.5
    with pytest.raises(ValueError):
        Ensemble([lambda x: x])


def test_estimator_errors():
    with pytest.raises(ValueError):
        expected_disagreement(np.zeros((1, 3), int))
    with pytest.raises(ValueError):
        expected_disagreement(np.zeros((2, 0), int))
    with pytest.raises(ValueError):
        expected_joint_error(np.zeros((2, 3), int), labels=np.zeros(2, int))


# -- bound ------------------------------------------------------------------


def test_risk_bound_rhs_values():
    assert risk_bound_rhs(0.0, 0.0, 1.0, 2.0) == 0.0
    assert risk_bound_rhs(0.2, 0.09, 1.0, 2.0) == pytest.approx(0.1 + 0.3)
    with pytest.warns(RuntimeWarning):
        assert math.isinf(risk_bound_rhs(0.2, 0.0, 1.0, 0.5))
    with pytest.raises(ValueError):
        risk_bound_rhs(1.2, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        risk_bound_rhs(0.1, 0.1, -1.0, 2.0)


def test_bound_report_and_csv(tmp_path):
    rep = bound_report(0.2, 0.09, 1.0, 2.0, 0.35)
    assert isinstance(rep, BoundReport)
    assert rep.holds and not rep.infinite
    assert not bound_report(0.2, 0.09, 1.0, 2.0, 0.45).holds
    path = tmp_path / "bound.csv"
    write_bound_csv(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "d_hat,e_hat,epsilon,q,rhs,empirical_risk,holds"
    assert lines[1].endswith(",true")
