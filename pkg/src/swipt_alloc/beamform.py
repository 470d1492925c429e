"""Beam directions: calibration-aware signal-to-leakage maximization and a zero-forcing baseline."""

from __future__ import annotations

import numpy as np
import scipy.linalg


class BeamformingError(ValueError):
    pass


def second_moment_matrix(u, sigma_cal_sq: float) -> np.ndarray:
    """``E[h h^H] = u u^H + s2 * diag(|u|^2)`` for ``h = (I + C) u``."""
    u = np.asarray(u)
    return np.outer(u, np.conj(u)) + sigma_cal_sq * np.diag(np.abs(u) ** 2)


def second_moments(u_all, sigma_cal_sq: float) -> np.ndarray:
    return np.stack([second_moment_matrix(u, sigma_cal_sq) for u in np.asarray(u_all)])


def fix_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate ``v`` so its first non-negligible entry is real and positive."""
    idx = np.flatnonzero(np.abs(v) > tol * np.max(np.abs(v)))[0]
    return v * (np.abs(v[idx]) / v[idx])


def leakage_matrix(a_mats: np.ndarray, k: int) -> np.ndarray:
    return a_mats.sum(axis=0) - a_mats[k]


def slr_direction(a_self: np.ndarray, a_leak: np.ndarray, regularize: bool = True) -> tuple[np.ndarray, float]:
    """Principal generalized eigenvector of ``(a_self, a_leak)`` and its eigenvalue."""
    m = a_self.shape[0]
    if regularize:
        eps = 1e-12 * np.trace(a_leak).real / m
        a_leak = a_leak + eps * np.eye(m)
    try:
        vals, vecs = scipy.linalg.eigh(a_self, a_leak, subset_by_index=[m - 1, m - 1])
    except np.linalg.LinAlgError as exc:
        raise BeamformingError("leakage matrix is singular") from exc
    v = vecs[:, 0]
    return fix_phase(v / np.linalg.norm(v)), float(vals[0])


def slr_directions(a_mats: np.ndarray, regularize: bool = True) -> np.ndarray:
    """Unit-norm SLR-optimal direction for every user, one row per user."""
    a_mats = np.asarray(a_mats)
    if a_mats.shape[0] == 1:
        # nobody to leak into: the matched (principal-eigenvector) direction
        vals, vecs = np.linalg.eigh(a_mats[0])
        return fix_phase(vecs[:, -1])[None, :]
    return np.stack([slr_direction(a_mats[k], leakage_matrix(a_mats, k), regularize)[0] for k in range(a_mats.shape[0])])


def slr_value(nu, a_self, a_leak) -> float:
    nu = np.asarray(nu)
    num = np.real(np.conj(nu) @ a_self @ nu)
    den = np.real(np.conj(nu) @ a_leak @ nu)
    if den <= 0:
        raise ZeroDivisionError("zero leakage along nu")
    return float(num / den)


def zf_directions(u_all, rcond: float = 1e-10) -> np.ndarray:
    """Normalized columns of ``U (U^H U)^{-1}``, so ``nu_n^H u_k = 0`` for ``k != n``."""
    u_mat = np.asarray(u_all).T
    m, k = u_mat.shape
    if k > m:
        raise BeamformingError(f"zero forcing needs at least as many antennas ({m}) as users ({k})")
    sv = np.linalg.svd(u_mat, compute_uv=False)
    if sv[-1] <= rcond * sv[0]:
        raise BeamformingError("channel matrix is rank deficient")
    w = u_mat @ np.linalg.inv(u_mat.conj().T @ u_mat)
    w = w / np.linalg.norm(w, axis=0)
    return np.stack([fix_phase(w[:, j]) for j in range(k)])
