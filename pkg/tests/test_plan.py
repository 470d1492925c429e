import numpy as np
import pytest
from hypothesis import given, strategies as st

from swipt_alloc.plan import (
    PlanConvergenceError,
    QpProblem,
    assemble_qp,
    dual_objective,
    dual_value,
    kkt_residual,
    mu_step,
    plan_objectives,
    primal_objective,
    recover_alpha,
    solve_plan,
    split_signs,
)

Q1 = np.array([0.9, 0.9, 0.9, 0.8, 0.8, 0.7])
B1 = np.array([0.1, 0.1, 0.1, 0.2, 0.2, 0.3])
# equality-constrained KKT point for R = 0.3: alpha = (f - mu) / 0.6 with sum(alpha) = 5
ALPHA_R03 = (np.array([0.61, 0.61, 0.61, 0.62, 0.62, 0.63]) - 0.7 / 6) / 0.6
REFERENCE_PLAN = np.array([0.8, 0.8, 0.8, 0.85, 0.85, 0.9])


def _project(y, total, tol=1e-15):
    """Euclidean projection onto {0 <= a <= 1, sum a = total} by bisection on the shift."""
    lo, hi = np.min(y) - 1.0, np.max(y)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.clip(y - mid, 0, 1).sum() > total:
            lo = mid
        else:
            hi = mid
    return np.clip(y - 0.5 * (lo + hi), 0, 1)


def projected_gradient(q, b, r, iters=10_000):
    """Independent oracle: projected gradient on the primal with step 1/(4R)."""
    f = (1 - r) * b + 2 * r * q
    a = _project(np.full_like(q, q.mean()), q.sum())
    for _ in range(iters):
        nxt = _project(a - (2 * r * a - f) / (4 * r), q.sum())
        if np.max(np.abs(nxt - a)) < 1e-15:
            return nxt
        a = nxt
    return a


def _scalar_qp(b_hat, f_hat):
    z = np.zeros(1)
    return QpProblem(f=z, r_weight=0.5, q=z, b_mat=np.zeros((1, 1)), s=z,
                     b_hat=np.array([[b_hat]]), f_hat=np.array([f_hat]))


def test_assemble_baseline():
    qp = assemble_qp(Q1, B1, 0.3)
    np.testing.assert_allclose(qp.f, [0.61, 0.61, 0.61, 0.62, 0.62, 0.63], rtol=1e-14)
    assert qp.dims == 6
    assert qp.b_mat.shape == (6, 13)
    assert qp.s.shape == qp.f_hat.shape == (13,)
    np.testing.assert_allclose(qp.b_hat, qp.b_hat.T)
    assert np.linalg.eigvalsh(qp.b_hat).min() > -1e-12
    np.testing.assert_allclose(assemble_qp(Q1, B1, 1 - 1e-12).f, 2 * Q1, rtol=1e-9)
    with pytest.raises(ValueError):
        assemble_qp(Q1, B1, 1.0)
    with pytest.raises(ValueError):
        assemble_qp(Q1, B1[:3], 0.3)


def test_dual_qp_is_the_negated_dual_function():
    qp = assemble_qp(Q1, B1, 0.3)
    rng = np.random.default_rng(0)
    d1, d2 = rng.uniform(0, 2, 13), rng.uniform(0, 2, 13)
    lhs = dual_objective(d1, qp) - dual_objective(d2, qp)
    rhs = -(dual_value(d1, qp) - dual_value(d2, qp))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_split_signs():
    pos, neg = split_signs(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    np.testing.assert_array_equal(pos, [[2, 0], [0, 2]])
    np.testing.assert_array_equal(neg, [[0, 1], [1, 0]])
    pos, neg = split_signs(np.ones((3, 3)))
    assert not neg.any()


@given(st.integers(0, 10_000))
def test_split_signs_reconstruct(seed):
    m = np.random.default_rng(seed).standard_normal((5, 5))
    pos, neg = split_signs(m)
    np.testing.assert_array_equal(pos - neg, m)
    assert (pos >= 0).all() and (neg >= 0).all() and not (pos * neg).any()


def test_mu_step_scalar_examples():
    np.testing.assert_allclose(mu_step(np.array([5.0]), _scalar_qp(2.0, 1.0)), [1.0])
    np.testing.assert_allclose(mu_step(np.array([1.0]), _scalar_qp(2.0, -1.0)), [0.0])


def test_mu_step_zero_positive_part():
    out = mu_step(np.array([1.0]), _scalar_qp(-2.0, -1.0))
    assert out[0] == 0.0
    out = mu_step(np.array([1.0]), _scalar_qp(-2.0, 1.0))
    assert out[0] == 1.0


def test_baseline_plan():
    pv = solve_plan(Q1, B1, 0.3)
    np.testing.assert_allclose(pv.alpha, ALPHA_R03, atol=1e-8)
    assert pv.alpha.sum() == pytest.approx(Q1.sum(), abs=1e-6)
    # the reference vector is only a loose sanity band
    assert np.max(np.abs(pv.alpha - REFERENCE_PLAN)) <= 0.05


def test_fixed_point_is_stationary_on_support():
    qp = assemble_qp(Q1, B1, 0.3)
    pv = solve_plan(Q1, B1, 0.3)
    grad = 0.5 * qp.b_hat @ pv.d - qp.f_hat
    support = pv.d > 1e-6
    assert np.max(np.abs(grad[support])) < 1e-8
    assert kkt_residual(pv.d, qp) <= 1e-9


def test_dual_objective_monotone_per_step():
    qp = assemble_qp(Q1, B1, 0.1)
    signs = split_signs(qp.b_hat)
    d = np.ones(13)
    prev = dual_objective(d, qp)
    for _ in range(3000):
        d = mu_step(d, qp, signs)
        cur = dual_objective(d, qp)
        assert cur <= prev + 1e-13 * max(1.0, abs(prev))
        prev = cur


def test_duality_gap_closes():
    for r in (0.05, 0.3, 0.8):
        qp = assemble_qp(Q1, B1, r)
        pv = solve_plan(Q1, B1, r)
        assert abs(primal_objective(pv.alpha, qp) - dual_value(pv.d, qp)) < 1e-6
        np.testing.assert_allclose(np.clip(recover_alpha(pv.d, qp), 0, 1), pv.alpha)


@pytest.mark.parametrize("seed", range(25))
def test_matches_projected_gradient_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    q, b, r = rng.uniform(0, 1, n), rng.uniform(0.05, 1, n), float(rng.uniform(0.05, 0.95))
    np.testing.assert_allclose(solve_plan(q, b, r).alpha, projected_gradient(q, b, r), atol=1e-6)


def test_tradeoff_monotone_in_r():
    grid = np.round(np.arange(0.1, 1.0, 0.1), 10)
    objs = [plan_objectives(solve_plan(Q1, B1, r).alpha, Q1, B1) for r in grid]
    ws, dev = zip(*objs)
    assert all(a >= b - 1e-9 for a, b in zip(ws, ws[1:]))
    assert all(a >= b - 1e-9 for a, b in zip(dev, dev[1:]))


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=7), st.floats(0.05, 0.95), st.floats(0.05, 2.0))
def test_uniform_priority_keeps_existing_plan(q, r, b):
    q = np.array(q)
    np.testing.assert_allclose(solve_plan(q, np.full_like(q, b), r).alpha, q, rtol=0, atol=1e-12)


def test_heavy_variance_weight_keeps_existing_plan():
    np.testing.assert_allclose(solve_plan(Q1, B1, 0.9999).alpha, Q1, atol=1e-3)


def test_plan_objectives():
    assert plan_objectives(Q1, Q1, B1) == pytest.approx((0.80, 0.0))
    assert plan_objectives(REFERENCE_PLAN, Q1, B1)[0] == pytest.approx(0.85)


def test_non_convergence_is_reported():
    with pytest.raises(PlanConvergenceError) as info:
        solve_plan(Q1, B1, 0.3, max_iter=3)
    assert info.value.iterations == 3
    assert info.value.residual > 0


def test_degenerate_bounds_converge_quickly():
    q = np.array([0.0, 1.0, 0.5, 0.0])
    pv = solve_plan(q, np.full(4, 0.4), 0.3)
    np.testing.assert_allclose(pv.alpha, q, atol=1e-9)
    assert pv.iterations <= 10_000
