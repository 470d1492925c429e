"""Experiment orchestration: one-realization pipeline, arm comparison, mobility study, writers.

Every realization ``r`` draws from independent streams derived from
``(seed, r)``: the channel, the calibration errors used for Monte Carlo
validation, the mobility drift and the draws used to tune the MC-tuned arm.
All arms of a comparison therefore see identical channels and identical
validation draws, and a worker pool can process realizations in any order
without changing a single output byte.

Row schemas
-----------
``PIPELINE_COLUMNS`` (``simulate`` and ``compare``): one row per
(realization, arm, user). ``MOBILITY_COLUMNS``: one row per
(realization, correlation, moving user). Infeasible allocations keep their
rows with ``feasible = 0`` and NaN numeric fields.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .beamform import BeamformingError, second_moments, slr_directions, zf_directions
from .channel import (
    STREAM_CALIBRATION,
    STREAM_CHANNEL,
    STREAM_MOBILITY,
    STREAM_TUNING,
    UplinkChannelSet,
    dump_channels,
    sample_calibration,
    sample_correlated,
    sample_uplink,
    stream_rng,
)
from .energy import beam_gains, coverage_std_error, eh_nonlinear, eh_threshold_inverse
from .moments import MomentTable, avg_sinr_all, moment_table
from .plan import PlanVector, solve_plan
from .power import Allocation, InfeasibleError, solve_optimal, solve_suboptimal
from .scenario import ScenarioConfig, user_labels

ARMS = ("proposed", "proposed_suboptimal", "zf_baseline", "linear_eh_arm", "mean_only_approx")

PIPELINE_COLUMNS = (
    "realization", "arm", "channel_hash", "group", "user", "feasible",
    "p_w", "rho", "sinr_db", "sinr_mc_db", "coverage", "coverage_se", "eh_w",
    "total_power_w", "total_power_dbm",
)
MOBILITY_COLUMNS = ("realization", "corr", "group", "user", "sinr_db", "sinr_loss_db", "coverage")

_INT_COLUMNS = {"realization", "group", "user", "feasible"}
_STR_COLUMNS = {"arm", "channel_hash"}


@dataclass(frozen=True)
class McEvaluation:
    """Per-user Monte Carlo validation over calibration-error draws."""

    users: np.ndarray
    coverage: np.ndarray
    coverage_se: np.ndarray
    eh_mean: np.ndarray
    sinr_ratio: np.ndarray
    sinr_ratio_se: np.ndarray
    samples: int


@dataclass
class PipelineResult:
    realization: int
    arm: str
    channels: UplinkChannelSet
    plan: PlanVector
    nus: np.ndarray | None = None
    moments: MomentTable | None = None
    allocation: Allocation | None = None
    evaluation: McEvaluation | None = None
    error: str | None = None

    @property
    def feasible(self) -> bool:
        return self.allocation is not None


@dataclass
class ExperimentResult:
    columns: tuple[str, ...]
    rows: list[dict]
    summary: dict = field(default_factory=dict)


def channel_hash(ch: UplinkChannelSet) -> str:
    return hashlib.sha256(dump_channels(ch).encode()).hexdigest()[:16]


def _gain_draws(u_all, nus, sigma_cal_sq, n, rng):
    """``g[s, i, j] = |nu_j^H h_i|^2`` for ``n`` independent calibration draws."""
    k, m = u_all.shape
    c = sample_calibration(sigma_cal_sq, n * k, m, rng).reshape(n, k, m)
    return beam_gains((1.0 + c) * u_all[None], nus)


def mc_evaluate(u_all, nus, p, rho, cfg: ScenarioConfig, samples: int, rng, users=None,
                chunk: int = 20_000) -> McEvaluation:
    """Coverage of the non-linear harvester and the ratio-of-means SINR, by simulation.

    The SINR estimate is ``E[rho p_n g_nn] / E[rho (I_n + s0) + s1]`` with a
    delta-method standard error.
    """
    u_all = np.asarray(u_all)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    users = np.arange(u_all.shape[0]) if users is None else np.asarray(users)
    theta = np.asarray(cfg.eh_target)[users]
    r = rho[users]
    nu_ = users.shape[0]
    hits = np.zeros(nu_)
    eh_sum = np.zeros(nu_)
    sums = np.zeros((5, nu_))  # a, b, a^2, b^2, ab
    for start in range(0, samples, chunk):
        n = min(chunk, samples - start)
        power = _gain_draws(u_all[users], nus, cfg.sigma_cal_sq, n, rng) * p
        total = power.sum(axis=-1)
        own = power[:, np.arange(nu_), users]
        eh = eh_nonlinear((1.0 - r) * total, cfg.eh_circuit)
        hits += np.sum(eh >= theta, axis=0)
        eh_sum += eh.sum(axis=0)
        a = r * own
        b = r * (total - own + cfg.sigma0_sq) + cfg.sigma1_sq
        sums += np.stack([a.sum(0), b.sum(0), (a * a).sum(0), (b * b).sum(0), (a * b).sum(0)])
    mean_a, mean_b, maa, mbb, mab = sums / samples
    ratio = mean_a / mean_b
    var_a, var_b, cov = maa - mean_a**2, mbb - mean_b**2, mab - mean_a * mean_b
    lin = np.maximum(var_a - 2.0 * ratio * cov + ratio**2 * var_b, 0.0)
    cov_p = hits / samples
    return McEvaluation(
        users=users,
        coverage=cov_p,
        coverage_se=np.array([coverage_std_error(c, samples) for c in cov_p]),
        eh_mean=eh_sum / samples,
        sinr_ratio=ratio,
        sinr_ratio_se=np.sqrt(lin / samples) / mean_b,
        samples=samples,
    )


def design_plan(cfg: ScenarioConfig) -> PlanVector:
    return solve_plan(cfg.existing_plan, cfg.priorities, cfg.plan_weight)


def _theta_hat(cfg: ScenarioConfig) -> np.ndarray:
    return np.array([eh_threshold_inverse(t, cfg.eh_circuit) for t in cfg.eh_target])


def mc_tuned_allocation(cfg, mt, nus, u_all, alpha, theta_hat, samples, rng, chunk=20_000) -> Allocation:
    """Mean-only design, then one uniform power scale-up chosen from simulated draws.

    The scale is the smallest factor that lifts every user's empirical
    ``(1 - alpha_n)``-quantile of received RF power onto its input target.
    Scaling all powers up never lowers an average SINR, so the SINR targets
    stay met.
    """
    k = u_all.shape[0]
    base = solve_optimal(cfg, mt, np.zeros(k), theta_hat)
    received = np.concatenate([
        _gain_draws(u_all, nus, cfg.sigma_cal_sq, min(chunk, samples - s), rng)[:, np.arange(k), :] @ base.p
        for s in range(0, samples, chunk)
    ])
    quant = np.array([np.quantile(received[:, n], 1.0 - alpha[n]) for n in range(k)])
    scale = max(1.0, float(np.max(theta_hat / ((1.0 - base.rho) * quant))))
    p = base.p * scale
    return Allocation(
        p=p,
        rho=base.rho,
        predicted_sinr=avg_sinr_all(p, base.rho, mt, cfg.sigma0_sq, cfg.sigma1_sq),
        chebyshev_margin=np.full(k, np.nan),
        scheme="mean_only_approx",
        diagnostics={"scale": scale, "mean_only_power": base.total_power},
    )


def allocate_arm(arm: str, cfg: ScenarioConfig, u_all, alpha, theta_hat=None, tune_rng=None, samples=None):
    """Directions, moment table and allocation for one arm on one channel set."""
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}; choose from {ARMS}")
    u_all = np.asarray(u_all)
    theta_hat = _theta_hat(cfg) if theta_hat is None else np.asarray(theta_hat, dtype=float)
    s2 = cfg.sigma_cal_sq
    nus = zf_directions(u_all) if arm == "zf_baseline" else slr_directions(second_moments(u_all, s2))
    mt = moment_table(nus, u_all, s2)
    if arm == "proposed_suboptimal":
        alloc = solve_suboptimal(cfg, mt, alpha, theta_hat)
    elif arm == "linear_eh_arm":
        if cfg.eh_efficiency_linear <= 0:
            raise InfeasibleError("linear harvester with zero efficiency")
        alloc = solve_optimal(cfg, mt, alpha, np.asarray(cfg.eh_target) / cfg.eh_efficiency_linear)
    elif arm == "mean_only_approx":
        n = cfg.mc_samples if samples is None else samples
        alloc = mc_tuned_allocation(cfg, mt, nus, u_all, alpha, theta_hat, max(n, 1), tune_rng)
    else:
        alloc = solve_optimal(cfg, mt, alpha, theta_hat)
    alloc.scheme = arm
    return nus, mt, alloc


def _seed(cfg, seed):
    return cfg.seed if seed is None else int(seed)


def _run_arm(cfg, seed, realization, arm, samples, plan, ch) -> PipelineResult:
    res = PipelineResult(realization=realization, arm=arm, channels=ch, plan=plan)
    try:
        tune = stream_rng(seed, realization, STREAM_TUNING)
        res.nus, res.moments, res.allocation = allocate_arm(arm, cfg, ch.u, plan.alpha, tune_rng=tune, samples=samples)
    except (InfeasibleError, BeamformingError) as exc:
        res.error = str(exc)
        return res
    if samples > 0:
        rng = stream_rng(seed, realization, STREAM_CALIBRATION)
        a = res.allocation
        res.evaluation = mc_evaluate(ch.u, res.nus, a.p, a.rho, cfg, samples, rng)
    return res


def run_pipeline(cfg: ScenarioConfig, seed=None, realization: int = 0, arm: str = "proposed",
                 samples: int | None = None, plan: PlanVector | None = None) -> PipelineResult:
    """Plan, beam directions and allocation for one channel realization, validated by simulation.

    Raises :class:`InfeasibleError` naming the realization when no allocation exists.
    """
    seed = _seed(cfg, seed)
    samples = cfg.mc_samples if samples is None else samples
    plan = design_plan(cfg) if plan is None else plan
    ch = sample_uplink(cfg, stream_rng(seed, realization, STREAM_CHANNEL))
    res = _run_arm(cfg, seed, realization, arm, samples, plan, ch)
    if res.error is not None:
        raise InfeasibleError(f"realization {realization}: {res.error}")
    return res


def _nan_if_none(x):
    return float("nan") if x is None else float(x)


def pipeline_rows(res: PipelineResult, cfg: ScenarioConfig, digest: str | None = None) -> list[dict]:
    digest = channel_hash(res.channels) if digest is None else digest
    a, ev = res.allocation, res.evaluation
    rows = []
    for i, (g, n) in enumerate(user_labels(cfg)):
        row = {"realization": res.realization, "arm": res.arm, "channel_hash": digest, "group": g, "user": n,
               "feasible": int(a is not None)}
        if a is None:
            row.update({c: float("nan") for c in PIPELINE_COLUMNS[6:]})
        else:
            row.update({
                "p_w": float(a.p[i]),
                "rho": float(a.rho[i]),
                "sinr_db": float(10.0 * np.log10(a.predicted_sinr[i])),
                "sinr_mc_db": float(10.0 * np.log10(ev.sinr_ratio[i])) if ev else float("nan"),
                "coverage": float(ev.coverage[i]) if ev else float("nan"),
                "coverage_se": float(ev.coverage_se[i]) if ev else float("nan"),
                "eh_w": float(ev.eh_mean[i]) if ev else float("nan"),
                "total_power_w": a.total_power,
                "total_power_dbm": float(a.total_power_dbm),
            })
        rows.append(row)
    return rows


def _comparison_realization(r, cfg, seed, arms, samples, plan) -> list[dict]:
    ch = sample_uplink(cfg, stream_rng(seed, r, STREAM_CHANNEL))
    digest = channel_hash(ch)
    rows = []
    for arm in arms:
        rows.extend(pipeline_rows(_run_arm(cfg, seed, r, arm, samples, plan, ch), cfg, digest))
    return rows


def _map(fn, items, workers):
    """Ordered map, optionally over a process pool; the output order never depends on scheduling."""
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(i) for i in items]


def _mean(values):
    values = [v for v in values if not math.isnan(v)]
    return math.fsum(values) / len(values) if values else float("nan")


def _se(values):
    values = [v for v in values if not math.isnan(v)]
    if len(values) < 2:
        return float("nan")
    m = math.fsum(values) / len(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1) / len(values))


def summarize_pipeline(rows: list[dict]) -> dict:
    """Per-arm aggregates and paired power gaps against the proposed arm, from rows alone."""
    per_real: dict[str, dict[int, dict]] = {}
    for row in rows:
        rec = per_real.setdefault(row["arm"], {}).setdefault(row["realization"], {"users": {}})
        rec["feasible"] = row["feasible"]
        rec["dbm"] = row["total_power_dbm"]
        rec["w"] = row["total_power_w"]
        rec["users"][f"g{row['group']}u{row['user']}"] = row["coverage"]
    summary: dict = {"arms": {}}
    for arm, reals in per_real.items():
        ok = [rec for rec in reals.values() if rec["feasible"]]
        labels = list(next(iter(reals.values()))["users"])
        per_user = {lab: _mean([rec["users"][lab] for rec in ok]) for lab in labels}
        summary["arms"][arm] = {
            "realizations": len(reals),
            "feasible": len(ok),
            "infeasible": len(reals) - len(ok),
            "mean_total_power_dbm": _mean([rec["dbm"] for rec in ok]),
            "se_total_power_dbm": _se([rec["dbm"] for rec in ok]),
            "mean_total_power_w": _mean([rec["w"] for rec in ok]),
            "mean_coverage": per_user,
        }
    if "proposed" in per_real:
        base = per_real["proposed"]
        gaps = {}
        for arm, reals in per_real.items():
            if arm == "proposed":
                continue
            diffs = [reals[r]["dbm"] - base[r]["dbm"] for r in reals
                     if r in base and reals[r]["feasible"] and base[r]["feasible"]]
            gaps[arm] = {"paired": len(diffs), "mean_gap_db": _mean(diffs), "se_gap_db": _se(diffs),
                         "fraction_above": _mean([float(d >= 0) for d in diffs])}
        summary["gap_vs_proposed"] = gaps
    return summary


def run_comparison(cfg: ScenarioConfig, arms=ARMS, realizations: int | None = None, seed=None,
                   samples: int | None = None, workers: int = 1) -> ExperimentResult:
    """Run every arm on the same channel realizations; infeasible arms are recorded, not fatal."""
    arms = tuple(arms)
    for arm in arms:
        if arm not in ARMS:
            raise ValueError(f"unknown arm {arm!r}; choose from {ARMS}")
    realizations = cfg.realizations if realizations is None else realizations
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    seed = _seed(cfg, seed)
    samples = cfg.mc_samples if samples is None else samples
    fn = partial(_comparison_realization, cfg=cfg, seed=seed, arms=arms, samples=samples, plan=design_plan(cfg))
    rows = [row for chunk in _map(fn, list(range(realizations)), workers) for row in chunk]
    return ExperimentResult(columns=PIPELINE_COLUMNS, rows=rows, summary=summarize_pipeline(rows))


def moving_users(cfg: ScenarioConfig) -> np.ndarray:
    """Index of the first user of every group."""
    starts = np.cumsum([0] + [g.n_users for g in cfg.groups[:-1]])
    return starts.astype(int)


def _mobility_realization(r, cfg, seed, corr_grid, samples, plan, arm) -> list[dict]:
    ch = sample_uplink(cfg, stream_rng(seed, r, STREAM_CHANNEL))
    res = _run_arm(cfg, seed, r, arm, 0, plan, ch)
    movers = moving_users(cfg)
    labels = user_labels(cfg)
    gamma_db = np.asarray(cfg.sinr_target_db)
    rows = []
    for corr in corr_grid:
        if res.allocation is None:
            sinr_db = loss = cover = np.full(movers.shape[0], np.nan)
        else:
            a = res.allocation
            u_true = ch.u.copy()
            drift = sample_correlated(ch.u[movers], corr, stream_rng(seed, r, STREAM_MOBILITY))
            u_true[movers] = drift
            mt_true = moment_table(res.nus, u_true, cfg.sigma_cal_sq)
            sinr = avg_sinr_all(a.p, a.rho, mt_true, cfg.sigma0_sq, cfg.sigma1_sq)[movers]
            sinr_db = 10.0 * np.log10(sinr)
            loss = gamma_db[movers] - sinr_db
            if samples > 0:
                ev = mc_evaluate(u_true, res.nus, a.p, a.rho, cfg, samples,
                                 stream_rng(seed, r, STREAM_CALIBRATION), users=movers)
                cover = ev.coverage
            else:
                cover = np.full(movers.shape[0], np.nan)
        for i, idx in enumerate(movers):
            g, n = labels[idx]
            rows.append({"realization": r, "corr": float(corr), "group": g, "user": n,
                         "sinr_db": float(sinr_db[i]), "sinr_loss_db": float(loss[i]), "coverage": float(cover[i])})
    return rows


def summarize_mobility(rows: list[dict]) -> dict:
    curves: dict[str, dict] = {}
    for row in rows:
        key = f"g{row['group']}u{row['user']}"
        cell = curves.setdefault(key, {}).setdefault(repr(row["corr"]), {"loss": [], "coverage": []})
        cell["loss"].append(row["sinr_loss_db"])
        cell["coverage"].append(row["coverage"])
    out = {}
    for key, by_corr in curves.items():
        out[key] = {
            c: {"mean_sinr_loss_db": _mean(v["loss"]), "se_sinr_loss_db": _se(v["loss"]),
                "mean_coverage": _mean(v["coverage"]), "n": sum(not math.isnan(x) for x in v["loss"])}
            for c, v in by_corr.items()
        }
    return {"moving_users": out}


def run_mobility(cfg: ScenarioConfig, corr_grid, realizations: int | None = None, seed=None,
                 samples: int | None = None, arm: str = "proposed", workers: int = 1) -> ExperimentResult:
    """Allocate on the estimated channels, evaluate on drifted channels of the moving users.

    The same drift draw is reused for every correlation value of a
    realization, so the loss curves differ only through ``corr``.
    """
    corr_grid = [float(c) for c in corr_grid]
    if any(not 0.0 <= c <= 1.0 for c in corr_grid):
        raise ValueError("correlation coefficients must lie in [0, 1]")
    realizations = cfg.realizations if realizations is None else realizations
    seed = _seed(cfg, seed)
    samples = cfg.mc_samples if samples is None else samples
    fn = partial(_mobility_realization, cfg=cfg, seed=seed, corr_grid=corr_grid, samples=samples,
                 plan=design_plan(cfg), arm=arm)
    rows = [row for chunk in _map(fn, list(range(realizations)), workers) for row in chunk]
    return ExperimentResult(columns=MOBILITY_COLUMNS, rows=rows, summary=summarize_mobility(rows))


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) or math.isinf(value) else float(value)
    return value


def render(result: ExperimentResult, fmt: str) -> str:
    """CSV (rows only) or JSON (columns, rows and summary) text with fixed column order."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([_fmt(row[c]) for c in result.columns])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "columns": list(result.columns),
            "rows": [{c: _jsonable(row[c]) for c in result.columns} for row in result.rows],
            "summary": _jsonable(result.summary),
        }
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit(result: ExperimentResult, fmt: str, path=None) -> str:
    text = render(result, fmt)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _parse_value(col: str, raw):
    if col in _STR_COLUMNS:
        return raw
    if col in _INT_COLUMNS:
        return int(raw)
    if raw is None:
        return float("nan")
    return float(raw)


def parse(text: str, fmt: str) -> tuple[tuple[str, ...], list[dict]]:
    """Inverse of :func:`render` for the rows: ``(columns, rows)``."""
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        return header, [{c: _parse_value(c, v) for c, v in zip(header, line)} for line in reader]
    if fmt == "json":
        doc = json.loads(text)
        cols = tuple(doc["columns"])
        return cols, [{c: _parse_value(c, row[c]) for c in cols} for row in doc["rows"]]
    raise ValueError(f"unknown format {fmt!r}")
