"""Beam powers and power-splitting factors for fixed beam directions.

Two solvers share one model. With every SINR constraint tight, powers solve
``(I - L Y) p = Delta (s0 + s1 / rho)`` where ``Y[n, j] = mu[j, n] / mu[n, n]``
couples the users. :func:`solve_suboptimal` restricts all users to one split
factor and finds it in closed form; :func:`solve_optimal` lets every user
pick its own split and solves the resulting convex program with a
log-barrier interior-point method.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .energy import eh_threshold_inverse
from .moments import MomentTable, avg_sinr_all, chebyshev_margin, moment_table
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    """No allocation meets the SINR and harvested-energy targets."""


class SolverError(RuntimeError):
    """The interior-point solver failed to converge."""


@dataclass(frozen=True)
class CouplingMatrices:
    l_mat: np.ndarray
    upsilon: np.ndarray
    delta: np.ndarray
    a_vec: np.ndarray
    spectral_radius: float

    @property
    def feasible(self) -> bool:
        return self.spectral_radius < 1.0


@dataclass(frozen=True)
class Lemma4Coefficients:
    mu_vec: np.ndarray
    ups_vec: np.ndarray
    alpha_bar: float
    kappa: float
    gain: float
    """``(mu_vec - ups_vec) . a``: harvest-relevant gain of the tight power vector."""


@dataclass(frozen=True)
class FeasibilityReport:
    spectral_radius: float
    coupling_ok: bool
    mean_dominates: np.ndarray
    gain_positive: np.ndarray

    @property
    def feasible(self) -> bool:
        return self.coupling_ok and bool(np.all(self.gain_positive))


@dataclass
class Allocation:
    p: np.ndarray
    rho: np.ndarray
    predicted_sinr: np.ndarray
    chebyshev_margin: np.ndarray
    scheme: str
    feasible: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.p))

    @property
    def total_power_dbm(self) -> float:
        return watts_to_dbm(self.total_power)


def watts_to_dbm(p):
    return 10.0 * np.log10(np.asarray(p) * 1e3)


def coupling_from_moments(mt: MomentTable, gamma) -> CouplingMatrices:
    gamma = np.asarray(gamma, dtype=float)
    self_gain = np.diag(mt.mu).copy()
    if np.any(self_gain <= 0):
        raise InfeasibleError("a beam direction is orthogonal to its own user's channel")
    ups = mt.mu.T / self_gain[:, None]
    np.fill_diagonal(ups, 0.0)
    l_mat = np.diag(gamma)
    delta = np.diag(gamma / self_gain)
    k = gamma.shape[0]
    radius = float(np.max(np.abs(np.linalg.eigvals(l_mat @ ups)))) if k > 1 else 0.0
    if radius < 1.0:
        a_vec = np.linalg.solve(np.eye(k) - l_mat @ ups, np.diag(delta))
    else:
        a_vec = np.full(k, np.inf)
    return CouplingMatrices(l_mat=l_mat, upsilon=ups, delta=delta, a_vec=a_vec, spectral_radius=radius)


def build_coupling(nus, u_all, gamma, sigma_cal_sq: float) -> CouplingMatrices:
    return coupling_from_moments(moment_table(nus, u_all, sigma_cal_sq), gamma)


def powers_for_rho(cm: CouplingMatrices, rho, sigma0_sq: float, sigma1_sq: float) -> np.ndarray:
    """Powers that make every relaxed average SINR exactly equal its target."""
    if not cm.feasible:
        raise InfeasibleError(f"SINR targets infeasible: spectral radius {cm.spectral_radius:.4f} >= 1")
    k = cm.l_mat.shape[0]
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (k,))
    rhs = np.diag(cm.delta) * (sigma0_sq + sigma1_sq / rho)
    return np.linalg.solve(np.eye(k) - cm.l_mat @ cm.upsilon, rhs)


def lemma4_coeffs(cm: CouplingMatrices, mt: MomentTable, alpha_star: float, theta_hat: float,
                  n: int, sigma0_sq: float, sigma1_sq: float) -> Lemma4Coefficients:
    if not 0.0 <= alpha_star < 1.0:
        raise ValueError("alpha_star must lie in [0, 1)")
    alpha_bar = 1.0 / (1.0 - alpha_star) - 1.0
    mu_vec = mt.mu[:, n].copy()
    ups_vec = np.sqrt(alpha_bar * mt.var[:, n])
    gain = float((mu_vec - ups_vec) @ cm.a_vec)
    kappa = gain * (sigma0_sq - sigma1_sq) - theta_hat
    return Lemma4Coefficients(mu_vec=mu_vec, ups_vec=ups_vec, alpha_bar=alpha_bar, kappa=kappa, gain=gain)


def feasibility(cm: CouplingMatrices, coeffs: list[Lemma4Coefficients]) -> FeasibilityReport:
    """Coupling condition plus the mean-versus-spread conditions of every user.

    ``mean_dominates`` is the elementwise test ``mu_vec >= ups_vec``;
    ``gain_positive`` is the aggregate ``(mu_vec - ups_vec) . a > 0`` that the
    closed-form split actually needs.
    """
    return FeasibilityReport(
        spectral_radius=cm.spectral_radius,
        coupling_ok=cm.feasible,
        mean_dominates=np.array([bool(np.all(c.mu_vec >= c.ups_vec)) for c in coeffs]),
        gain_positive=np.array([c.gain > 0 for c in coeffs]),
    )


def split_quadratic(c: Lemma4Coefficients, rho, sigma0_sq: float, sigma1_sq: float):
    """Left side of the per-user quadratic constraint on the shared split (<= 0 when met)."""
    return c.gain * sigma0_sq * rho**2 - c.kappa * rho - c.gain * sigma1_sq


def split_root(c: Lemma4Coefficients, sigma0_sq: float, sigma1_sq: float) -> float:
    """Positive root of :func:`split_quadratic`.

    Written as ``2C / (sqrt(kappa^2 + 4AC) - kappa)``, which equals
    ``(kappa + sqrt(kappa^2 + 4AC)) / (2A)`` but avoids cancellation when
    ``kappa < 0`` and stays finite as ``sigma0_sq -> 0``.
    """
    a = c.gain * sigma0_sq
    cc = c.gain * sigma1_sq
    disc = np.sqrt(c.kappa**2 + 4.0 * a * cc)
    if c.kappa <= 0:
        return float(2.0 * cc / (disc - c.kappa))
    return float((c.kappa + disc) / (2.0 * a))


def _targets(cfg: ScenarioConfig, theta_hat):
    if theta_hat is None:
        theta_hat = [eh_threshold_inverse(t, cfg.eh_circuit) for t in cfg.eh_target]
    return cfg.sinr_target, np.broadcast_to(np.asarray(theta_hat, dtype=float), (cfg.n_users,))


def _as_alpha(plan) -> np.ndarray:
    alpha = np.asarray(getattr(plan, "alpha", plan), dtype=float)
    if np.any(alpha >= 1.0) or np.any(alpha < 0.0):
        raise InfeasibleError("a coverage target of 1 cannot be certified by a finite margin")
    return alpha


def _margins(p, rho, alpha, theta_hat, mt, mode="sum_sqrt"):
    return np.array([
        chebyshev_margin(p, rho[n], alpha[n], theta_hat[n], mt.mu[:, n], mt.var[:, n], mode)
        for n in range(len(p))
    ])


def solve_suboptimal(cfg: ScenarioConfig, mt: MomentTable, plan, theta_hat=None) -> Allocation:
    """Closed-form allocation with one split factor shared by all users.

    Every user's harvest constraint caps the shared split from above; the
    largest admissible split is the smallest per-user root, and powers follow
    from the tight SINR equations.
    """
    gamma, theta_hat = _targets(cfg, theta_hat)
    alpha = _as_alpha(plan)
    s0, s1 = cfg.sigma0_sq, cfg.sigma1_sq
    cm = coupling_from_moments(mt, gamma)
    if not cm.feasible:
        raise InfeasibleError(f"SINR targets infeasible: spectral radius {cm.spectral_radius:.4f} >= 1")
    coeffs = [lemma4_coeffs(cm, mt, alpha[n], theta_hat[n], n, s0, s1) for n in range(cfg.n_users)]
    report = feasibility(cm, coeffs)
    if not report.feasible:
        bad = np.flatnonzero(~report.gain_positive).tolist()
        raise InfeasibleError(f"harvest constraints cannot be met for users {bad}")
    if not report.mean_dominates.all():
        log.debug("elementwise mean >= spread fails for users %s", np.flatnonzero(~report.mean_dominates).tolist())
    roots = np.array([split_root(c, s0, s1) for c in coeffs])
    binding = int(np.argmin(roots))
    rho_star = float(roots[binding])
    if not 0.0 < rho_star < 1.0:
        raise InfeasibleError(f"shared split {rho_star:.4g} outside (0, 1)")
    p = powers_for_rho(cm, rho_star, s0, s1)
    rho = np.full(cfg.n_users, rho_star)
    return Allocation(
        p=p,
        rho=rho,
        predicted_sinr=avg_sinr_all(p, rho, mt, s0, s1),
        chebyshev_margin=_margins(p, rho, alpha, theta_hat, mt),
        scheme="suboptimal",
        diagnostics={
            "binding_user": binding,
            "roots": roots,
            "binding_quadratic": float(split_quadratic(coeffs[binding], rho_star, s0, s1)),
            "spectral_radius": cm.spectral_radius,
            "mean_dominates": report.mean_dominates,
            "coeffs": coeffs,
        },
    )


def _barrier_terms(z, scale, mt, gamma, theta_hat, spread_w, alpha_bar, s0, s1, mode):
    """Constraint values, gradients and curvature in scaled variables.

    Variables are ``p = P * z[:k]`` and ``x = X * z[k:]`` with ``x = 1 / rho``.
    Returns ``(g, jac, hess_list)`` where ``g < 0`` means strictly feasible and
    ``hess_list`` holds ``(index, H_i)`` for the nonlinear constraints.
    """
    k = gamma.shape[0]
    p = scale[:k] * z[:k]
    x = scale[k:] * z[k:]
    mu = mt.mu
    own = np.diag(mu)
    g = np.empty(4 * k)
    jac = np.zeros((4 * k, 2 * k))
    hess = []
    # relaxed SINR: s0 + s1 x_n + I_n - mu_nn p_n / gamma_n <= 0
    g[:k] = s0 + s1 * x + mu.T @ p - own * p - own * p / gamma
    jp = mu.T.copy()
    np.fill_diagonal(jp, -own / gamma)
    jac[:k, :k] = jp
    jac[np.arange(k), k + np.arange(k)] = s1
    # harvest certificate: theta_hat x/(x-1) - mean . p + spread <= 0
    for n in range(k):
        xm1 = x[n] - 1.0
        hn = np.zeros((2 * k, 2 * k))
        if mode == "sum_sqrt":
            w = mu[:, n] - spread_w[:, n]
            val = -w @ p
            jac[k + n, :k] = -w
        else:
            v = mt.var[:, n]
            norm = np.sqrt(alpha_bar[n] * (v @ p**2))
            val = -mu[:, n] @ p + norm
            if norm > 0:
                vp = alpha_bar[n] * v * p
                jac[k + n, :k] = -mu[:, n] + vp / norm
                hn[:k, :k] = np.diag(alpha_bar[n] * v) / norm - np.outer(vp, vp) / norm**3
            else:
                jac[k + n, :k] = -mu[:, n]
        g[k + n] = val + theta_hat[n] * x[n] / xm1
        jac[k + n, k + n] = -theta_hat[n] / xm1**2
        hn[k + n, k + n] = 2.0 * theta_hat[n] / xm1**3
        hess.append((k + n, hn))
    g[2 * k:3 * k] = -p
    jac[2 * k + np.arange(k), np.arange(k)] = -1.0
    g[3 * k:] = 1.0 - x
    jac[3 * k + np.arange(k), k + np.arange(k)] = -1.0
    # chain rule into scaled coordinates
    jac = jac * scale[None, :]
    hess = [(i, h * np.outer(scale, scale)) for i, h in hess]
    return g, jac, hess


def _barrier_solve(z0, scale, obj, args, gap_tol=1e-9, newton_tol=1e-9, mu_factor=10.0, max_newton=200):
    """Minimize ``obj . z`` over the strictly feasible set by following the central path."""
    m = 4 * (z0.shape[0] // 2)
    z = z0.copy()
    t = 1.0
    newton_total = 0

    def merit(zz, tt):
        g, _, _ = _barrier_terms(zz, scale, *args)
        if np.any(g >= 0) or not np.all(np.isfinite(g)):
            return np.inf
        return tt * obj @ zz - np.sum(np.log(-g))

    while True:
        for _ in range(max_newton):
            g, jac, hess = _barrier_terms(z, scale, *args)
            inv = 1.0 / (-g)
            grad = t * obj + jac.T @ inv
            h = (jac * inv[:, None] ** 2).T @ jac
            for i, hi in hess:
                h += hi * inv[i]
            # symmetric diagonal scaling tames the t^2 spread between active and inactive curvature
            dsq = np.sqrt(np.diag(h))
            try:
                step = -np.linalg.solve(h / np.outer(dsq, dsq), grad / dsq) / dsq
            except np.linalg.LinAlgError as exc:
                raise SolverError("singular Newton system") from exc
            dec = float(-grad @ step)
            newton_total += 1
            if dec / 2.0 <= newton_tol:
                break
            f0 = merit(z, t)
            s = 1.0
            while (f1 := merit(z + s * step, t)) > f0 - 0.25 * s * dec:
                s *= 0.5
                if s < 1e-14:
                    break
            if s < 1e-14:
                break
            z = z + s * step
            if f0 - f1 <= 1e-14 * max(1.0, abs(f0)):
                # progress below floating-point resolution of the merit
                break
        else:
            raise SolverError(f"centering did not converge at t={t:.3g}")
        if m / t < gap_tol:
            return z, {"newton_steps": newton_total, "duality_gap": m / t, "t": t}
        t *= mu_factor


def solve_optimal(cfg: ScenarioConfig, mt: MomentTable, plan, theta_hat=None, mode: str = "sum_sqrt",
                  start: Allocation | None = None) -> Allocation:
    """Minimum total power with a split factor per user (relaxed SINR >= target).

    Starts from the shared-split solution, inflated slightly into the strict
    interior. After convergence each split is lowered to the value that makes
    the user's SINR exactly meet its target, which only loosens its
    harvest constraint; the returned allocation therefore has every SINR
    constraint tight.
    """
    gamma, theta_hat = _targets(cfg, theta_hat)
    alpha = _as_alpha(plan)
    s0, s1 = cfg.sigma0_sq, cfg.sigma1_sq
    k = cfg.n_users
    if start is None:
        start = solve_suboptimal(cfg, mt, alpha, theta_hat)
    if k == 1:
        # one user: a per-user split is the shared split, already solved exactly
        return Allocation(p=start.p.copy(), rho=start.rho.copy(), predicted_sinr=start.predicted_sinr.copy(),
                          chebyshev_margin=start.chebyshev_margin.copy(), scheme="optimal",
                          diagnostics={"newton_steps": 0, "duality_gap": 0.0, "start_power": start.total_power})
    alpha_bar = 1.0 / (1.0 - alpha) - 1.0
    spread_w = np.sqrt(alpha_bar[None, :] * mt.var)
    scale = np.concatenate([start.p, 1.0 / start.rho])
    z0 = np.concatenate([np.full(k, 1.0 + 1e-3), np.ones(k)])
    args = (mt, gamma, theta_hat, spread_w, alpha_bar, s0, s1, mode)
    g0, _, _ = _barrier_terms(z0, scale, *args)
    if np.any(g0 >= 0):
        raise InfeasibleError("no strictly feasible starting point")
    obj = np.concatenate([start.p, np.zeros(k)]) / start.total_power
    z, info = _barrier_solve(z0, scale, obj, args)
    p = scale[:k] * z[:k]
    x_solver = scale[k:] * z[k:]
    own = np.diag(mt.mu)
    interf = mt.mu.T @ p - own * p
    x_tight = (own * p / gamma - interf - s0) / s1
    rho = 1.0 / np.maximum(x_tight, x_solver)
    margins = _margins(p, rho, alpha, theta_hat, mt, mode)
    info.update({"rho_solver": 1.0 / x_solver, "start_power": start.total_power})
    return Allocation(
        p=p,
        rho=rho,
        predicted_sinr=avg_sinr_all(p, rho, mt, s0, s1),
        chebyshev_margin=margins,
        scheme="optimal",
        diagnostics=info,
    )
