"""Energy-harvesting models and the Monte Carlo coverage oracle.

Effective gains use the conjugated pairing ``|nu^H h|^2`` throughout, which is
what makes the Hermitian-form moment expressions in :mod:`moments` exact.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .channel import _rng, downlink_from_uplink, sample_calibration
from .scenario import EhCircuitParams


class UnreachableTarget(ValueError):
    """The requested harvested power cannot be produced by the circuit."""


def beam_gains(h: np.ndarray, nus: np.ndarray) -> np.ndarray:
    """``|nu_j^H h|^2`` for every beam ``j``; ``h`` may carry leading sample axes."""
    return np.abs(np.asarray(h) @ np.conj(np.asarray(nus)).T) ** 2


def input_energy(h: np.ndarray, p: np.ndarray, nus: np.ndarray, rho: float) -> np.ndarray:
    """RF power reaching the harvester: ``(1 - rho) * sum_j p_j |nu_j^H h|^2`` (noise ignored)."""
    return (1.0 - rho) * beam_gains(h, nus) @ np.asarray(p, dtype=float)


def eh_nonlinear(e_in, circuit: EhCircuitParams):
    """Normalized logistic harvester: zero at zero input, saturates at ``circuit.m_eh``."""
    m, a, b = circuit.m_eh, circuit.a, circuit.b
    e_in = np.asarray(e_in, dtype=float)
    out = m * (expit(a * (e_in - b)) - expit(-a * b)) / expit(a * b)
    return out if out.ndim else float(out)


def eh_linear(e_in, xi: float):
    if not 0.0 <= xi <= 1.0:
        raise ValueError("efficiency must lie in [0, 1]")
    out = xi * np.asarray(e_in, dtype=float)
    return out if out.ndim else float(out)


def eh_threshold_inverse(theta: float, circuit: EhCircuitParams) -> float:
    """Input power whose non-linear harvest equals ``theta``.

    Evaluated in log-sum-exp form so that large ``a*b`` cannot overflow; a
    bracketing root search takes over if the round trip ever drifts.
    """
    m, a, b = circuit.m_eh, circuit.a, circuit.b
    if theta <= 0:
        raise UnreachableTarget("target must be > 0")
    if theta >= m:
        raise UnreachableTarget("target at/above saturation")
    # b - ln(e^{ab}(M - theta) / (e^{ab} theta + M)) / a, rearranged
    theta_hat = (np.logaddexp(a * b + np.log(theta), np.log(m)) - np.log(m - theta)) / a
    if np.isfinite(theta_hat) and abs(eh_nonlinear(theta_hat, circuit) - theta) <= 1e-9 * theta:
        return float(theta_hat)
    hi = max(b, theta_hat, 1.0 / a)
    while eh_nonlinear(hi, circuit) < theta:
        hi *= 2.0
    return float(brentq(lambda e: eh_nonlinear(e, circuit) - theta, 0.0, hi, xtol=1e-15, rtol=4e-16))


def harvested_samples(u_n, sigma_cal_sq, p, nus, rho, circuit, samples, seed=None, chunk=200_000):
    """Harvested power of one user over ``samples`` calibration-error draws."""
    rng = _rng(seed)
    u_n = np.asarray(u_n)
    out = np.empty(samples)
    for start in range(0, samples, chunk):
        k = min(chunk, samples - start)
        c = sample_calibration(sigma_cal_sq, k, u_n.shape[0], rng)
        h = downlink_from_uplink(u_n, c)
        out[start:start + k] = eh_nonlinear(input_energy(h, p, nus, rho), circuit)
    return out


def mc_coverage(u_n, sigma_cal_sq, p, nus, rho, theta, circuit, samples, seed=None) -> float:
    """Fraction of calibration draws for which the harvested power reaches ``theta``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    e = harvested_samples(u_n, sigma_cal_sq, p, nus, rho, circuit, samples, seed)
    return float(np.mean(e >= theta))


def coverage_std_error(prob: float, samples: int) -> float:
    return float(np.sqrt(max(prob * (1.0 - prob), 0.0) / samples))
