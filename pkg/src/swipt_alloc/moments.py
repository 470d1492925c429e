"""Statistics of directional channel gains under calibration errors.

For a unit direction ``nu`` and uplink channel ``u`` the downlink is
``h = (I + C) u ~ CN(u, s2 * D)`` with ``D = diag(|u_i|^2)``, so the gain
``|nu^H h|^2 = h^H V h`` (``V = nu nu^H``) is a Hermitian quadratic form in a
complex Gaussian vector and its cumulants are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np


def _proj(nu: np.ndarray) -> np.ndarray:
    nu = np.asarray(nu)
    return np.outer(nu, np.conj(nu))


def cumulant(k: int, nu, u, sigma_cal_sq: float) -> float:
    """k-th cumulant of ``|nu^H h|^2``.

    ``(k-1)! * [tr((V S)^k) + k u^H V (S V)^(k-1) u]`` with ``S = s2 * D``.
    """
    if k < 1:
        raise ValueError("cumulant order must be >= 1")
    u = np.asarray(u)
    v = _proj(nu)
    s = sigma_cal_sq * np.diag(np.abs(u) ** 2)
    vs = v @ s
    sv = s @ v
    trace_term = np.trace(np.linalg.matrix_power(vs, k)).real
    mean_term = (np.conj(u) @ v @ np.linalg.matrix_power(sv, k - 1) @ u).real
    return float(factorial(k - 1) * (trace_term + k * mean_term))


def directional_mean(nu, u, sigma_cal_sq: float) -> float:
    """``E|nu^H h|^2 = s2 * sum_i |nu_i|^2 |u_i|^2 + |nu^H u|^2``."""
    nu = np.asarray(nu)
    u = np.asarray(u)
    spread = np.sum(np.abs(nu) ** 2 * np.abs(u) ** 2)
    return float(sigma_cal_sq * spread + np.abs(np.vdot(nu, u)) ** 2)


def directional_var(nu, u, sigma_cal_sq: float) -> float:
    """``var|nu^H h|^2 = tr((V S)^2) + 2 s2 u^H V D V u``, evaluated in matrix form."""
    u = np.asarray(u)
    v = _proj(nu)
    d = np.diag(np.abs(u) ** 2)
    vs = sigma_cal_sq * v @ d
    return float(np.trace(vs @ vs).real + 2.0 * sigma_cal_sq * (np.conj(u) @ v @ d @ v @ u).real)


@dataclass(frozen=True)
class MomentTable:
    """``mu[j, n]`` / ``var[j, n]``: mean / variance of beam ``j``'s gain at user ``n``."""

    mu: np.ndarray
    var: np.ndarray

    @property
    def n_users(self) -> int:
        return self.mu.shape[0]


def moment_table(nus: np.ndarray, u_all: np.ndarray, sigma_cal_sq: float) -> MomentTable:
    """Vectorized closed-form means and variances for every (beam, user) pair.

    With ``V = nu nu^H`` rank one, ``tr((V S)^2) = (s2 * sum |nu|^2 |u|^2)^2`` and
    ``u^H V D V u = |nu^H u|^2 * sum |nu|^2 |u|^2``.
    """
    nus = np.asarray(nus)
    u_all = np.asarray(u_all)
    spread = (np.abs(nus) ** 2) @ (np.abs(u_all) ** 2).T
    coherent = np.abs(np.conj(nus) @ u_all.T) ** 2
    mu = sigma_cal_sq * spread + coherent
    var = (sigma_cal_sq * spread) ** 2 + 2.0 * sigma_cal_sq * coherent * spread
    return MomentTable(mu=mu, var=var)


def chebyshev_margin(p, rho, alpha_star, theta_hat, mu_col, var_col, mode="sum_sqrt") -> float:
    """One-sided Chebyshev certificate for the harvested-energy chance constraint.

    Returns ``sum_j sqrt(abar * var_j) p_j - sum_j mu_j p_j - theta_hat / (rho - 1)``
    with ``abar = 1/(1 - alpha_star) - 1``; a value ``<= 0`` certifies
    ``Pr(E >= theta) >= alpha_star``. ``mode="sqrt_sum"`` swaps the spread
    term for ``sqrt(abar * sum_j var_j p_j^2)`` (tighter, but ignores the
    correlation between the terms).
    """
    if not 0.0 <= alpha_star < 1.0:
        raise ValueError("alpha_star must lie in [0, 1)")
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    p = np.asarray(p, dtype=float)
    abar = 1.0 / (1.0 - alpha_star) - 1.0
    spread = spread_term(p, abar, var_col, mode)
    return float(spread - np.dot(mu_col, p) - theta_hat / (rho - 1.0))


def spread_term(p, abar, var_col, mode="sum_sqrt"):
    var_col = np.asarray(var_col, dtype=float)
    if mode == "sum_sqrt":
        return float(np.dot(np.sqrt(abar * var_col), p))
    if mode == "sqrt_sum":
        return float(np.sqrt(abar * np.dot(var_col, np.asarray(p) ** 2)))
    raise ValueError(f"unknown margin mode {mode!r}")


def interference(n: int, p, mt: MomentTable) -> float:
    p = np.asarray(p, dtype=float)
    col = mt.mu[:, n]
    return float(np.dot(col, p) - col[n] * p[n])


def avg_sinr(n: int, p, rho_n: float, mt: MomentTable, sigma0_sq: float, sigma1_sq: float) -> float:
    """Relaxed average SINR ``rho mu_nn p_n / (rho (I_n + s0) + s1)``."""
    if not 0.0 < rho_n <= 1.0:
        raise ValueError("rho_n must lie in (0, 1]")
    p = np.asarray(p, dtype=float)
    i_n = interference(n, p, mt)
    return float(rho_n * mt.mu[n, n] * p[n] / (rho_n * (i_n + sigma0_sq) + sigma1_sq))


def avg_sinr_all(p, rho, mt: MomentTable, sigma0_sq: float, sigma1_sq: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), p.shape)
    own = np.diag(mt.mu) * p
    i_all = mt.mu.T @ p - own
    return rho * own / (rho * (i_all + sigma0_sq) + sigma1_sq)
