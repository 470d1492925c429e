import numpy as np
import pytest

from conftest import random_unit, realization
from swipt_alloc.beamform import (
    BeamformingError,
    fix_phase,
    leakage_matrix,
    second_moment_matrix,
    second_moments,
    slr_direction,
    slr_directions,
    slr_value,
    zf_directions,
)
from swipt_alloc.channel import downlink_from_uplink, sample_calibration


def test_second_moment_examples():
    u = np.array([1.0 + 1j, 0.5, -2j])
    np.testing.assert_allclose(second_moment_matrix(u, 0.0), np.outer(u, u.conj()))
    assert np.linalg.matrix_rank(second_moment_matrix(u, 0.0)) == 1
    e1 = np.array([1.0, 0, 0])
    np.testing.assert_allclose(second_moment_matrix(e1, 0.01), np.diag([1.01, 0, 0]))


def test_second_moment_matches_simulation():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    n = 1_000_000
    h = downlink_from_uplink(u, sample_calibration(0.01, n, 4, seed=4))
    emp = h.T @ h.conj() / n
    a = second_moment_matrix(u, 0.01)
    assert np.linalg.norm(emp - a) <= 0.01 * np.linalg.norm(a)


def test_second_moments_are_hermitian_psd(baseline):
    ch, _, _ = realization(baseline, 0)
    for a in second_moments(ch.u, baseline.sigma_cal_sq):
        np.testing.assert_allclose(a, a.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(a).min() >= -1e-10


def test_diagonal_generalized_problem():
    nu, lam = slr_direction(np.diag([2.0, 1.0]), np.eye(2))
    np.testing.assert_allclose(nu, [1.0, 0.0], atol=1e-12)
    assert lam == pytest.approx(2.0)


def test_orthogonal_users_get_matched_filters():
    u1 = np.array([1.0, 1j, 0, 0]) / np.sqrt(2)
    u2 = np.array([0, 0, 1.0, -1.0]) / np.sqrt(2)
    nus = slr_directions(second_moments(np.stack([u1, u2]), 0.0))
    assert abs(np.vdot(nus[0], u1)) == pytest.approx(1.0, abs=1e-9)
    assert abs(np.vdot(nus[1], u2)) == pytest.approx(1.0, abs=1e-9)


def test_single_user_uses_principal_direction():
    u = np.array([0.3, 0.4j, -0.5])
    a = second_moment_matrix(u, 0.01)
    nu = slr_directions(a[None])[0]
    assert np.vdot(nu, a @ nu).real == pytest.approx(np.linalg.eigvalsh(a).max(), rel=1e-12)


@pytest.mark.parametrize("r", range(3))
def test_slr_optimality_and_residual(baseline, r):
    ch, nus, _ = realization(baseline, r)
    a_mats = second_moments(ch.u, baseline.sigma_cal_sq)
    rng = np.random.default_rng(r)
    for k in range(baseline.n_users):
        a_self, a_leak = a_mats[k], leakage_matrix(a_mats, k)
        nu, lam = slr_direction(a_self, a_leak)
        np.testing.assert_allclose(nu, nus[k])
        assert np.linalg.norm(nu) == pytest.approx(1.0, abs=1e-12)
        resid = np.linalg.norm(a_self @ nu - lam * a_leak @ nu)
        assert resid <= 1e-8 * np.linalg.norm(a_self, 2)
        best = slr_value(nu, a_self, a_leak)
        assert best == pytest.approx(lam, rel=1e-9)
        others = [slr_value(random_unit(rng, 6), a_self, a_leak) for _ in range(1000)]
        assert max(others) <= best


def test_directions_invariant_to_uniform_scaling(baseline):
    ch, nus, _ = realization(baseline, 4)
    a_mats = second_moments(ch.u, baseline.sigma_cal_sq)
    np.testing.assert_allclose(slr_directions(7.5 * a_mats), nus, atol=1e-9)


def test_phase_convention():
    v = fix_phase(np.array([0.0, -1j, 1.0]) / np.sqrt(2))
    assert v[0] == 0 and v[1].imag == 0 and v[1].real > 0


def test_slr_value_properties():
    a_self, a_leak = np.diag([3.0, 1.0]), np.diag([2.0, 5.0])
    e1 = np.array([1.0, 0.0])
    assert slr_value(e1, a_self, a_leak) == pytest.approx(1.5)
    assert slr_value(e1, 4 * a_self, a_leak) == pytest.approx(6.0)
    with pytest.raises(ZeroDivisionError):
        slr_value(e1, a_self, np.diag([0.0, 1.0]))


def test_zf_nulls_other_users(baseline):
    ch, _, _ = realization(baseline, 1)
    nus = zf_directions(ch.u)
    cross = np.abs(np.conj(nus) @ ch.u.T) ** 2
    direct = np.diag(cross).copy()
    np.fill_diagonal(cross, 0.0)
    assert np.sqrt(cross.max()) <= 1e-10
    assert cross.max() <= 1e-18 * direct.min()
    np.testing.assert_allclose(np.linalg.norm(nus, axis=1), 1.0)


def test_zf_orthogonal_channels_is_matched_filter():
    u = np.array([[2.0, 0, 0], [0, 0, 1j]])
    nus = zf_directions(u)
    matched = u / np.linalg.norm(u, axis=1, keepdims=True)
    np.testing.assert_allclose(np.abs(nus @ matched.conj().T), np.eye(2), atol=1e-12)


def test_zf_errors():
    with pytest.raises(BeamformingError):
        zf_directions(np.ones((3, 2)))
    with pytest.raises(BeamformingError, match="rank"):
        zf_directions(np.array([[1.0, 0, 0], [2.0, 0, 0]]))
