"""Uplink channel generation, calibration errors and reciprocity-corrupted downlinks.

Seeding scheme: every random stream is drawn from
``np.random.default_rng(SeedSequence([root_seed, realization, stream]))`` with
the stream ids below, so realizations are independent of one another and of
the order (or process) in which they are computed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig

STREAM_CHANNEL = 0
STREAM_CALIBRATION = 1
STREAM_MOBILITY = 2
STREAM_NOISE = 3
STREAM_TUNING = 4

D_REF = 1.0


def stream_rng(root_seed: int, realization: int = 0, stream: int = STREAM_CHANNEL) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), int(realization), int(stream)]))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def crandn(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass(frozen=True)
class UplinkChannelSet:
    """Uplink channels of all users, one row per user in flat group-major order."""

    u: np.ndarray
    group: np.ndarray
    azimuth: np.ndarray | None = None

    @property
    def d_mag(self) -> np.ndarray:
        return np.abs(self.u) ** 2

    @property
    def n_users(self) -> int:
        return self.u.shape[0]

    @property
    def m_antennas(self) -> int:
        return self.u.shape[1]

    def user(self, g: int, n: int) -> np.ndarray:
        """Channel of user ``n`` of group ``g`` (0-based)."""
        return self.u[np.flatnonzero(self.group == g)[n]]

    def __eq__(self, other):
        if not isinstance(other, UplinkChannelSet):
            return NotImplemented
        return np.array_equal(self.u, other.u) and np.array_equal(self.group, other.group)


def pathloss(distance: float, exponent: float, d_ref: float = D_REF) -> float:
    """Distance-dependent power gain ``(d_ref / d) ** exponent``."""
    if distance < d_ref:
        raise ValueError(f"distance {distance} m is below the reference distance {d_ref} m")
    return (d_ref / distance) ** exponent


def ula_steering(m: int, azimuth: float) -> np.ndarray:
    """Half-wavelength uniform linear array response, unit-modulus entries."""
    return np.exp(1j * np.pi * np.arange(m) * np.sin(azimuth))


def rician_weights(k: float) -> tuple[float, float]:
    """(LOS, NLOS) amplitude weights for Rician factor ``k`` (linear, may be inf)."""
    if np.isinf(k):
        return 1.0, 0.0
    return float(np.sqrt(k / (k + 1.0))), float(np.sqrt(1.0 / (k + 1.0)))


def sample_uplink(cfg: ScenarioConfig, seed=None, rician_k: float | None = None) -> UplinkChannelSet:
    """Draw one Rician uplink channel set with users on their group circles.

    ``seed`` may be an int or a Generator; by default the config's root seed is
    used. ``rician_k`` overrides the config's factor (linear).
    """
    rng = _rng(cfg.seed if seed is None else seed)
    k = cfg.rician_k if rician_k is None else rician_k
    w_los, w_nlos = rician_weights(k)
    m = cfg.m_antennas
    n = cfg.n_users
    azimuth = rng.uniform(0.0, 2.0 * np.pi, size=n)
    nlos = crandn(rng, (n, m))
    gains = np.array([pathloss(d, cfg.pathloss_exp) for d in cfg.distances])
    los = np.stack([ula_steering(m, az) for az in azimuth])
    u = np.sqrt(gains)[:, None] * (w_los * los + w_nlos * nlos)
    return UplinkChannelSet(u=u, group=cfg.group_of_user, azimuth=azimuth)


def sample_calibration(sigma_cal_sq: float, users: int, m: int, seed=None) -> np.ndarray:
    """Diagonals of the calibration-error matrices, shape ``(users, m)``, i.i.d. CN(0, sigma_cal_sq)."""
    if sigma_cal_sq < 0:
        raise ValueError("sigma_cal_sq must be >= 0")
    if sigma_cal_sq == 0:
        return np.zeros((users, m), dtype=complex)
    return crandn(_rng(seed), (users, m), sigma_cal_sq)


def downlink_from_uplink(u: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Downlink channel ``(I + diag(c)) u``; broadcasts over leading sample axes of ``c``."""
    u = np.asarray(u)
    c = np.asarray(c)
    if u.shape[-1] != c.shape[-1]:
        raise ValueError(f"dimension mismatch: u has {u.shape[-1]} antennas, c has {c.shape[-1]}")
    return (1.0 + c) * u


def sample_correlated(h: np.ndarray, corr: float, seed=None, variance=None) -> np.ndarray:
    """Gauss-Markov drift ``corr * h + sqrt(1 - corr^2) * w``.

    ``w`` is CN(0, variance) per entry. ``variance`` defaults to the mean
    per-entry power of each row of ``h`` (one row per user), so every drifted
    channel keeps its own average power and therefore its pathloss.
    """
    if not 0.0 <= corr <= 1.0:
        raise ValueError("corr must lie in [0, 1]")
    h = np.asarray(h)
    if corr == 1.0:
        return h.copy()
    if variance is None:
        variance = np.mean(np.abs(h) ** 2, axis=-1, keepdims=True)
    w = crandn(_rng(seed), h.shape, variance)
    return corr * h + np.sqrt(1.0 - corr**2) * w


CHANNEL_DUMP_FIELDS = ("group", "user", "antenna", "re", "im")


def dump_channels(ch: UplinkChannelSet) -> str:
    """CSV text with one row per (user, antenna); group/user/antenna are 1-based."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHANNEL_DUMP_FIELDS)
    counters: dict[int, int] = {}
    for row, g in zip(ch.u, ch.group):
        counters[g] = counters.get(g, 0) + 1
        for a, val in enumerate(row):
            w.writerow([g + 1, counters[g], a + 1, repr(float(val.real)), repr(float(val.imag))])
    return buf.getvalue()


def load_channels(text: str) -> UplinkChannelSet:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty channel dump")
    if tuple(rows[0].keys()) != CHANNEL_DUMP_FIELDS:
        raise ValueError(f"channel dump columns must be {CHANNEL_DUMP_FIELDS}")
    keys = sorted({(int(r["group"]), int(r["user"])) for r in rows})
    m = max(int(r["antenna"]) for r in rows)
    index = {k: i for i, k in enumerate(keys)}
    u = np.zeros((len(keys), m), dtype=complex)
    seen = np.zeros((len(keys), m), dtype=bool)
    for r in rows:
        i = index[(int(r["group"]), int(r["user"]))]
        a = int(r["antenna"]) - 1
        u[i, a] = complex(float(r["re"]), float(r["im"]))
        seen[i, a] = True
    if not seen.all():
        raise ValueError("channel dump is missing entries")
    group = np.array([g - 1 for g, _ in keys])
    return UplinkChannelSet(u=u, group=group)
