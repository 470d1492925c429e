"""Upper-layer serving-plan design.

Maximizes ``(1-R) sum b_i alpha_i - R sum (alpha_i - q_i)^2`` subject to
``sum alpha = sum q`` and ``0 <= alpha <= 1``. The problem is solved through
its Lagrangian dual, a nonnegative QP in ``d = [mu; delta_1; delta_2]``,
using multiplicative updates that keep ``d`` nonnegative and never increase
the dual objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PlanConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"plan solver did not converge after {iterations} iterations (step {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class QpProblem:
    f: np.ndarray
    r_weight: float
    q: np.ndarray
    b_mat: np.ndarray
    s: np.ndarray
    b_hat: np.ndarray
    f_hat: np.ndarray

    @property
    def dims(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class PlanVector:
    alpha: np.ndarray
    d: np.ndarray
    iterations: int
    step: float


def assemble_qp(q, b, r_weight: float) -> QpProblem:
    """Build the dual QP ``min 1/4 d^T B_hat d - f_hat^T d, d >= 0``.

    ``b`` holds priorities already expanded to one entry per user.
    ``f_hat = s - B^T f / (2R)``: the factor 2 comes from expanding
    ``|f + B d|^2 / (4R)``.
    """
    if not 0.0 < r_weight < 1.0:
        raise ValueError("R must lie in (0, 1)")
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=float)
    if q.shape != b.shape:
        raise ValueError("q and b must have the same length")
    n = q.shape[0]
    f = (1.0 - r_weight) * b + 2.0 * r_weight * q
    eye = np.eye(n)
    b_mat = np.hstack([-np.ones((n, 1)), -eye, eye])
    s = np.concatenate([[-q.sum()], -np.ones(n), np.zeros(n)])
    b_hat = b_mat.T @ b_mat / r_weight
    f_hat = s - b_mat.T @ f / (2.0 * r_weight)
    return QpProblem(f=f, r_weight=r_weight, q=q, b_mat=b_mat, s=s, b_hat=b_hat, f_hat=f_hat)


def split_signs(b_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise split ``b_hat = b_pos - b_neg`` into nonnegative parts."""
    b_hat = np.asarray(b_hat, dtype=float)
    return np.where(b_hat > 0, b_hat, 0.0), np.where(b_hat < 0, -b_hat, 0.0)


def dual_objective(d: np.ndarray, qp: QpProblem) -> float:
    return float(0.25 * d @ qp.b_hat @ d - qp.f_hat @ d)


def mu_step(d: np.ndarray, qp: QpProblem, signs=None) -> np.ndarray:
    """One multiplicative update of every dual coordinate."""
    b_pos, b_neg = signs if signs is not None else split_signs(qp.b_hat)
    d = np.asarray(d, dtype=float)
    pos = b_pos @ d
    neg = b_neg @ d
    fh = qp.f_hat
    out = d.copy()
    ok = pos > 0
    out[ok] = d[ok] * (fh[ok] + np.sqrt(fh[ok] ** 2 + pos[ok] * neg[ok])) / pos[ok]
    # empty positive part: the coordinate can only move to zero when the gradient pushes it there
    out[~ok & (fh <= 0)] = 0.0
    return out


def recover_alpha(d: np.ndarray, qp: QpProblem) -> np.ndarray:
    return (qp.f + qp.b_mat @ d) / (2.0 * qp.r_weight)


def primal_objective(alpha: np.ndarray, qp: QpProblem) -> float:
    """Minimization form ``-f^T a + R a^T a + R q^T q`` of the weighted-sum objective."""
    return float(-qp.f @ alpha + qp.r_weight * alpha @ alpha + qp.r_weight * qp.q @ qp.q)


def dual_value(d: np.ndarray, qp: QpProblem) -> float:
    """Lagrange dual function at ``d``; equals :func:`primal_objective` at the optimum."""
    z = qp.f + qp.b_mat @ d
    return float(qp.s @ d - z @ z / (4.0 * qp.r_weight) + qp.r_weight * qp.q @ qp.q)


def kkt_residual(d: np.ndarray, qp: QpProblem) -> float:
    """Largest violation of ``min(d_i, grad_i) = 0`` for the nonnegative dual QP."""
    grad = 0.5 * qp.b_hat @ d - qp.f_hat
    return float(np.max(np.abs(np.minimum(d, grad))))


POLISH_TOLS = (1e-6, 1e-9, 1e-12, 0.0, None)


def polish(d: np.ndarray, qp: QpProblem, bound_tol: float | None = 1e-6) -> np.ndarray | None:
    """Exact dual point for the active set suggested by ``d``, or None if it is not optimal-looking.

    Entries of the recovered plan within ``bound_tol`` of 0 or 1 are fixed
    there; the rest solve the equality-constrained stationarity system.
    ``bound_tol=None`` treats every entry as free.
    Multiplicative updates approach a bound whose multiplier is also zero
    only sublinearly, and this step removes that tail.
    """
    r = qp.r_weight
    alpha = recover_alpha(d, qp)
    if bound_tol is None:
        lower = upper = np.zeros(alpha.shape, dtype=bool)
    else:
        lower = alpha <= bound_tol
        upper = alpha >= 1.0 - bound_tol
    free = ~(lower | upper)
    if free.any():
        mu = (qp.f[free].sum() - 2.0 * r * (qp.q.sum() - upper.sum())) / free.sum()
    else:
        mu = d[0]
    delta1 = np.where(upper, qp.f - mu - 2.0 * r, 0.0)
    delta2 = np.where(lower, mu - qp.f, 0.0)
    d_new = np.concatenate([[mu], delta1, delta2])
    if d_new.min() < 0.0:
        return None
    return d_new


def solve_plan(q, b, r_weight: float, tol: float = 1e-9, max_iter: int = 1_000_000, d0=None,
               polish_every: int = 1000) -> PlanVector:
    """Redesign the plan by iterating :func:`mu_step` from ``d0`` (all ones by default).

    Stops once both the update step and the KKT residual are below ``tol``;
    the step alone stalls on long plateaus when bounds are active. Every
    ``polish_every`` iterations an active-set :func:`polish` is tried for each
    tolerance in ``POLISH_TOLS`` and the first with KKT residual within
    ``tol`` is accepted. A converged run ends with the same polish whenever it
    lowers the KKT residual.
    """
    qp = assemble_qp(q, b, r_weight)
    signs = split_signs(qp.b_hat)
    d = np.ones(2 * qp.dims + 1) if d0 is None else np.asarray(d0, dtype=float)
    step = np.inf
    for it in range(1, max_iter + 1):
        d_new = mu_step(d, qp, signs)
        step = float(np.max(np.abs(d_new - d)))
        d = d_new
        if step <= tol and kkt_residual(d, qp) <= tol:
            break
        if polish_every and it % polish_every == 0:
            cands = (polish(d, qp, bt) for bt in POLISH_TOLS)
            cand = next((c for c in cands if c is not None and kkt_residual(c, qp) <= tol), None)
            if cand is not None:
                d = cand
                break
    else:
        raise PlanConvergenceError(max_iter, max(step, kkt_residual(d, qp)))
    # finish on the exact active-set point when it is at least as accurate
    best = kkt_residual(d, qp)
    for bt in POLISH_TOLS:
        cand = polish(d, qp, bt)
        if cand is not None and kkt_residual(cand, qp) <= best:
            d, best = cand, kkt_residual(cand, qp)
    alpha = np.clip(recover_alpha(d, qp), 0.0, 1.0)
    return PlanVector(alpha=alpha, d=d, iterations=it, step=step)


def plan_objectives(alpha, q, b) -> tuple[float, float]:
    """(weighted sum of thresholds, squared deviation from the existing plan)."""
    alpha = np.asarray(alpha, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.dot(b, alpha)), float(np.sum((alpha - q) ** 2))
