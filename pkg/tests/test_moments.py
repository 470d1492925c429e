import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_unit
from swipt_alloc.channel import downlink_from_uplink, sample_calibration
from swipt_alloc.moments import (
    MomentTable,
    avg_sinr,
    avg_sinr_all,
    chebyshev_margin,
    cumulant,
    directional_mean,
    directional_var,
    interference,
    moment_table,
    spread_term,
)

ONE = np.array([1.0 + 0j])


def _instance(seed, m=6):
    rng = np.random.default_rng(seed)
    u = 0.3 * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return random_unit(rng, m), u


def test_scalar_cases():
    assert directional_mean(ONE, ONE, 0.01) == pytest.approx(1.01, rel=1e-15)
    assert directional_var(ONE, ONE, 0.01) == pytest.approx(0.0201, rel=1e-14)
    assert cumulant(3, ONE, ONE, 0.01) == pytest.approx(6.02e-4, rel=1e-13)


def test_no_calibration_error():
    nu, u = _instance(1)
    assert directional_mean(nu, u, 0.0) == pytest.approx(abs(np.vdot(nu, u)) ** 2, rel=1e-14)
    assert directional_var(nu, u, 0.0) == 0.0
    mt = moment_table(np.stack([nu, random_unit(np.random.default_rng(2), 6)]), np.stack([u, 2 * u]), 0.0)
    assert np.all(mt.var == 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_cumulant_identities(seed):
    nu, u = _instance(seed)
    assert cumulant(1, nu, u, 0.01) == pytest.approx(directional_mean(nu, u, 0.01), rel=1e-12)
    assert cumulant(2, nu, u, 0.01) == pytest.approx(directional_var(nu, u, 0.01), rel=1e-12)
    with pytest.raises(ValueError):
        cumulant(0, nu, u, 0.01)


def test_moment_table_matches_pairwise_forms():
    rng = np.random.default_rng(5)
    nus = np.stack([random_unit(rng, 5) for _ in range(4)])
    u_all = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    mt = moment_table(nus, u_all, 0.02)
    for j in range(4):
        for n in range(4):
            assert mt.mu[j, n] == pytest.approx(directional_mean(nus[j], u_all[n], 0.02), rel=1e-12)
            assert mt.var[j, n] == pytest.approx(directional_var(nus[j], u_all[n], 0.02), rel=1e-12)
    assert mt.n_users == 4


def test_mean_and_variance_match_simulation():
    nu, u = _instance(8)
    n = 400_000
    h = downlink_from_uplink(u, sample_calibration(0.01, n, 6, seed=9))
    g = np.abs(h @ nu.conj()) ** 2
    mean, var = directional_mean(nu, u, 0.01), directional_var(nu, u, 0.01)
    assert abs(g.mean() - mean) <= 3 * g.std() / np.sqrt(n)
    se_var = np.std((g - g.mean()) ** 2) / np.sqrt(n)
    assert abs(g.var() - var) <= 3 * se_var


def test_third_cumulant_matches_simulation():
    n = 10_000_000
    c = sample_calibration(0.01, n, 1, seed=21)[:, 0]
    g = np.abs(1.0 + c) ** 2
    z = (g - g.mean()) ** 3
    assert abs(z.mean() - cumulant(3, ONE, ONE, 0.01)) <= 5 * z.std() / np.sqrt(n)


@given(st.integers(0, 10_000), st.floats(0.05, 20.0), st.floats(0.0, 0.1))
def test_scale_covariance(seed, scale, s2):
    nu, u = _instance(seed, m=4)
    assert directional_mean(nu, scale * u, s2) == pytest.approx(scale**2 * directional_mean(nu, u, s2), rel=1e-10)
    assert directional_var(nu, scale * u, s2) == pytest.approx(scale**4 * directional_var(nu, u, s2), rel=1e-10, abs=1e-300)


def test_margin_reductions():
    mu, var, p = np.array([0.2, 0.05]), np.zeros(2), np.array([0.1, 0.3])
    theta_hat, rho = 0.01, 0.4
    phi = chebyshev_margin(p, rho, 0.9, theta_hat, mu, var)
    assert phi == pytest.approx(theta_hat / (1 - rho) - mu @ p)
    var = np.array([1e-3, 2e-4])
    assert chebyshev_margin(p, rho, 0.0, theta_hat, mu, var) == pytest.approx(theta_hat / (1 - rho) - mu @ p)
    with pytest.raises(ValueError):
        chebyshev_margin(p, rho, 1.0, theta_hat, mu, var)
    with pytest.raises(ValueError):
        chebyshev_margin(p, 1.0, 0.5, theta_hat, mu, var)
    with pytest.raises(ValueError):
        spread_term(p, 1.0, var, mode="bogus")


@given(st.integers(0, 10_000), st.floats(0.0, 0.98), st.floats(0.0, 0.98))
def test_margin_monotone_in_alpha(seed, a1, a2):
    nu, u = _instance(seed)
    mt = moment_table(nu[None], u[None], 0.01)
    lo, hi = sorted((a1, a2))
    args = (0.01, mt.mu[:, 0], mt.var[:, 0])
    assert chebyshev_margin([1.0], 0.3, lo, *args) <= chebyshev_margin([1.0], 0.3, hi, *args) + 1e-15


@given(st.integers(0, 10_000), st.floats(0.0, 0.9), st.floats(0.0, 5.0))
def test_margin_nonincreasing_in_power_when_mean_dominates(seed, alpha, extra):
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.1, 1.0, 3)
    abar = 1 / (1 - alpha) - 1
    var = (rng.uniform(0.0, 1.0, 3) * mu) ** 2 / max(abar, 1e-12)  # sqrt(abar var) <= mu
    p = rng.uniform(0.0, 1.0, 3)
    bumped = p.copy()
    bumped[seed % 3] += extra
    assert chebyshev_margin(bumped, 0.5, alpha, 0.01, mu, var) <= chebyshev_margin(p, 0.5, alpha, 0.01, mu, var) + 1e-12


@given(st.integers(0, 10_000))
def test_sqrt_sum_spread_is_tighter(seed):
    rng = np.random.default_rng(seed)
    var, p = rng.uniform(0, 1, 5), rng.uniform(0, 1, 5)
    assert spread_term(p, 9.0, var, "sqrt_sum") <= spread_term(p, 9.0, var, "sum_sqrt") + 1e-12


def test_avg_sinr_single_user_inversion():
    mt = MomentTable(mu=np.array([[1.0]]), var=np.array([[0.0]]))
    gamma, s0, s1, rho = 1.7, 1e-12, 1e-8, 0.3
    p = np.array([gamma * (s0 + s1 / rho)])
    assert avg_sinr(0, p, rho, mt, s0, s1) == pytest.approx(gamma, rel=1e-14)
    with pytest.raises(ValueError):
        avg_sinr(0, p, 0.0, mt, s0, s1)


def test_avg_sinr_without_split_loss():
    mt = MomentTable(mu=np.array([[2.0, 0.1], [0.3, 1.0]]), var=np.zeros((2, 2)))
    p = np.array([0.5, 2.0])
    assert interference(0, p, mt) == pytest.approx(0.6)
    assert avg_sinr(0, p, 1.0, mt, 1e-3, 0.0) == pytest.approx(2.0 * 0.5 / (0.6 + 1e-3))


def test_avg_sinr_all_matches_per_user():
    rng = np.random.default_rng(0)
    mt = MomentTable(mu=rng.uniform(0.01, 1, (4, 4)), var=np.zeros((4, 4)))
    p, rho = rng.uniform(0, 1, 4), rng.uniform(0.1, 0.9, 4)
    expected = [avg_sinr(n, p, rho[n], mt, 1e-3, 1e-2) for n in range(4)]
    np.testing.assert_allclose(avg_sinr_all(p, rho, mt, 1e-3, 1e-2), expected, rtol=1e-14)
