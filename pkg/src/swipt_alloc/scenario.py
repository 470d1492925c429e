"""Experiment configuration: types, defaults, loading and validation.

Config documents are YAML (JSON is accepted too, being a YAML subset) with the
flat key schema below. Every key is optional; missing keys fall back to the
canonical six-user, three-group scenario returned by :func:`default_table1`.

======================  ======================================  =============
key                     meaning                                 default
======================  ======================================  =============
antennas                BS antennas M                           6
groups[].n              users in the group                      3 / 2 / 1
groups[].distance_m     group radius in metres                  1.5/3.5/5.5
groups[].priority       group priority b_g                      0.1/0.2/0.3
groups[].q              existing plan, scalar or per-user list  0.9/0.8/0.7
noise.sigma0_sq_w       antenna noise power (W)                 1e-12
noise.sigma1_sq_w       decoder noise power (W)                 1e-8
cal.sigma_sq            calibration-error variance              0.01
channel.rician_k_db     Rician factor (dB, power ratio)         2.0
channel.pathloss_exp    pathloss exponent                       2.6
eh.m_w                  saturation power (W)                    0.024
eh.a                    logistic slope                          150
eh.b                    logistic turn-on (W)                    0.014
eh.xi                   linear-model efficiency (baseline)      0.5
targets.gamma_db        SINR target(s), dB                      2.0
targets.theta_w         harvested-power target(s), W            0.005
plan.r                  plan trade-off weight R in (0, 1)       0.3
mc.samples              calibration draws per realization       100000
mc.realizations         channel realizations                    1000
mc.seed                 root seed                               0
======================  ======================================  =============
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import yaml


class ConfigError(ValueError):
    """Raised when a config document is malformed or violates an invariant."""


@dataclass(frozen=True)
class EhCircuitParams:
    """Logistic energy-harvester constants: saturation ``m_eh`` (W), slope ``a``, turn-on ``b`` (W)."""

    m_eh: float = 0.024
    a: float = 150.0
    b: float = 0.014

    def __post_init__(self):
        for name in ("m_eh", "a", "b"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"eh.{name} must be > 0")


@dataclass(frozen=True)
class GroupSpec:
    n_users: int
    distance: float
    priority: float
    existing_plan: tuple[float, ...]

    def __post_init__(self):
        if self.n_users < 1:
            raise ConfigError("group n_users must be >= 1")
        if not self.priority > 0:
            raise ConfigError("group priority must be > 0")
        if len(self.existing_plan) != self.n_users:
            raise ConfigError("group q must have one entry per user")
        if any(not 0.0 <= q <= 1.0 for q in self.existing_plan):
            raise ConfigError("group q entries must lie in [0, 1]")
        if not self.distance >= 1.0:
            raise ConfigError("group distance_m must be >= 1 m (reference distance)")


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one experiment.

    Per-user quantities (``sinr_target_db``, ``eh_target``) are stored
    group-major, matching the flat user order used everywhere else.
    """

    m_antennas: int
    groups: tuple[GroupSpec, ...]
    sinr_target_db: tuple[float, ...]
    eh_target: tuple[float, ...]
    sigma0_sq: float = 1e-12
    sigma1_sq: float = 1e-8
    sigma_cal_sq: float = 0.01
    rician_k_db: float = 2.0
    pathloss_exp: float = 2.6
    plan_weight: float = 0.3
    eh_circuit: EhCircuitParams = field(default_factory=EhCircuitParams)
    eh_efficiency_linear: float = 0.5
    mc_samples: int = 100_000
    realizations: int = 1000
    seed: int = 0

    def __post_init__(self):
        _validate(self)

    @property
    def n_users(self) -> int:
        return sum(g.n_users for g in self.groups)

    @property
    def sinr_target(self) -> np.ndarray:
        """Linear SINR targets per user."""
        return 10.0 ** (np.asarray(self.sinr_target_db) / 10.0)

    @property
    def rician_k(self) -> float:
        return 10.0 ** (self.rician_k_db / 10.0)

    @property
    def group_of_user(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.groups)), [g.n_users for g in self.groups])

    @property
    def existing_plan(self) -> np.ndarray:
        return np.concatenate([g.existing_plan for g in self.groups])

    @property
    def priorities(self) -> np.ndarray:
        """Group priorities expanded to one entry per user."""
        return np.repeat([g.priority for g in self.groups], [g.n_users for g in self.groups])

    @property
    def distances(self) -> np.ndarray:
        return np.repeat([g.distance for g in self.groups], [g.n_users for g in self.groups])

    def with_profile(self, profile: str) -> "ScenarioConfig":
        """Return a copy with Monte Carlo sizes set by ``profile`` ('ci' or 'paper')."""
        if profile == "ci":
            return replace(self, realizations=50, mc_samples=10_000)
        if profile == "paper":
            return replace(self, realizations=1000, mc_samples=100_000)
        raise ConfigError(f"unknown profile {profile!r}")


def _validate(cfg: ScenarioConfig) -> None:
    if not cfg.groups:
        raise ConfigError("at least one group required")
    if cfg.m_antennas < 1:
        raise ConfigError("antennas must be >= 1")
    n = cfg.n_users
    if len(cfg.sinr_target_db) != n:
        raise ConfigError("targets.gamma_db must be a scalar or have one entry per user")
    if len(cfg.eh_target) != n:
        raise ConfigError("targets.theta_w must be a scalar or have one entry per user")
    if not 0.0 < cfg.plan_weight < 1.0:
        raise ConfigError("plan_weight out of (0,1)")
    for name in ("sigma0_sq", "sigma1_sq"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be > 0")
    # zero calibration error is the ideal-reciprocity limit
    if not cfg.sigma_cal_sq >= 0:
        raise ConfigError("sigma_cal_sq must be >= 0")
    if any(not math.isfinite(g) for g in cfg.sinr_target_db):
        raise ConfigError("targets.gamma_db must be finite")
    if any(not t > 0 for t in cfg.eh_target):
        raise ConfigError("targets.theta_w must be > 0")
    if any(t >= cfg.eh_circuit.m_eh for t in cfg.eh_target):
        raise ConfigError("targets.theta_w must be below the saturation level eh.m_w")
    if not 0.0 <= cfg.eh_efficiency_linear <= 1.0:
        raise ConfigError("eh.xi must lie in [0, 1]")
    if not cfg.pathloss_exp > 0:
        raise ConfigError("channel.pathloss_exp must be > 0")
    if cfg.mc_samples < 1 or cfg.realizations < 1:
        raise ConfigError("mc.samples and mc.realizations must be >= 1")
    if cfg.m_antennas < n:
        warnings.warn(
            f"{cfg.m_antennas} antennas < {n} users: zero-forcing baseline will be infeasible",
            stacklevel=3,
        )


def default_table1() -> ScenarioConfig:
    """The canonical scenario: 6 antennas, users in groups of 3/2/1 at 1.5/3.5/5.5 m."""
    groups = (
        GroupSpec(3, 1.5, 0.1, (0.9, 0.9, 0.9)),
        GroupSpec(2, 3.5, 0.2, (0.8, 0.8)),
        GroupSpec(1, 5.5, 0.3, (0.7,)),
    )
    return ScenarioConfig(
        m_antennas=6,
        groups=groups,
        sinr_target_db=(2.0,) * 6,
        eh_target=(0.005,) * 6,
    )


def _per_user(value: Any, n: int, key: str) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        vals = tuple(float(v) for v in value)
        if len(vals) != n:
            raise ConfigError(f"{key} must be a scalar or have one entry per user")
        return vals
    return (float(value),) * n


def _get(doc: dict, path: str, default: Any) -> Any:
    node: Any = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def config_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    base = default_table1()
    try:
        if "groups" in doc:
            raw = doc["groups"]
            if not isinstance(raw, list):
                raise ConfigError("groups must be a list")
            if not raw:
                raise ConfigError("at least one group required")
            groups = []
            for i, g in enumerate(raw):
                n = int(g["n"])
                groups.append(
                    GroupSpec(
                        n_users=n,
                        distance=float(g["distance_m"]),
                        priority=float(g["priority"]),
                        existing_plan=_per_user(g["q"], n, f"groups[{i}].q"),
                    )
                )
            groups = tuple(groups)
        else:
            groups = base.groups
        n_users = sum(g.n_users for g in groups)
        circuit = EhCircuitParams(
            m_eh=float(_get(doc, "eh.m_w", base.eh_circuit.m_eh)),
            a=float(_get(doc, "eh.a", base.eh_circuit.a)),
            b=float(_get(doc, "eh.b", base.eh_circuit.b)),
        )
        return ScenarioConfig(
            m_antennas=int(_get(doc, "antennas", base.m_antennas)),
            groups=groups,
            sinr_target_db=_per_user(_get(doc, "targets.gamma_db", 2.0), n_users, "targets.gamma_db"),
            eh_target=_per_user(_get(doc, "targets.theta_w", 0.005), n_users, "targets.theta_w"),
            sigma0_sq=float(_get(doc, "noise.sigma0_sq_w", base.sigma0_sq)),
            sigma1_sq=float(_get(doc, "noise.sigma1_sq_w", base.sigma1_sq)),
            sigma_cal_sq=float(_get(doc, "cal.sigma_sq", base.sigma_cal_sq)),
            rician_k_db=float(_get(doc, "channel.rician_k_db", base.rician_k_db)),
            pathloss_exp=float(_get(doc, "channel.pathloss_exp", base.pathloss_exp)),
            plan_weight=float(_get(doc, "plan.r", base.plan_weight)),
            eh_circuit=circuit,
            eh_efficiency_linear=float(_get(doc, "eh.xi", base.eh_efficiency_linear)),
            mc_samples=int(_get(doc, "mc.samples", base.mc_samples)),
            realizations=int(_get(doc, "mc.realizations", base.realizations)),
            seed=int(_get(doc, "mc.seed", base.seed)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from exc


def load_config(text: str) -> ScenarioConfig:
    """Parse a YAML/JSON config document into a validated :class:`ScenarioConfig`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    if doc is None:
        doc = {}
    return config_from_dict(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "antennas": cfg.m_antennas,
        "groups": [
            {"n": g.n_users, "distance_m": g.distance, "priority": g.priority, "q": list(g.existing_plan)}
            for g in cfg.groups
        ],
        "noise": {"sigma0_sq_w": cfg.sigma0_sq, "sigma1_sq_w": cfg.sigma1_sq},
        "cal": {"sigma_sq": cfg.sigma_cal_sq},
        "channel": {"rician_k_db": cfg.rician_k_db, "pathloss_exp": cfg.pathloss_exp},
        "eh": {
            "m_w": cfg.eh_circuit.m_eh,
            "a": cfg.eh_circuit.a,
            "b": cfg.eh_circuit.b,
            "xi": cfg.eh_efficiency_linear,
        },
        "targets": {"gamma_db": list(cfg.sinr_target_db), "theta_w": list(cfg.eh_target)},
        "plan": {"r": cfg.plan_weight},
        "mc": {"samples": cfg.mc_samples, "realizations": cfg.realizations, "seed": cfg.seed},
    }


def serialize(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_config_file(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


def user_labels(cfg: ScenarioConfig) -> list[tuple[int, int]]:
    """(group, user-in-group) pairs, 1-based, in flat user order."""
    return [(g + 1, n + 1) for g, spec in enumerate(cfg.groups) for n in range(spec.n_users)]
