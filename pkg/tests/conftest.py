import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from swipt_alloc.beamform import second_moments, slr_directions
from swipt_alloc.channel import STREAM_CHANNEL, sample_uplink, stream_rng
from swipt_alloc.moments import moment_table
from swipt_alloc.plan import solve_plan
from swipt_alloc.scenario import config_from_dict, default_table1

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def baseline():
    return default_table1()


@pytest.fixture
def three_user_cfg():
    groups = [{"n": 1, "distance_m": d, "priority": b, "q": q}
              for d, b, q in [(1.5, 0.1, 0.9), (3.5, 0.2, 0.8), (5.5, 0.3, 0.7)]]
    return config_from_dict({"antennas": 4, "groups": groups})


def realization(cfg, r, seed=0):
    """Channels, SLR directions and moment table of one realization."""
    ch = sample_uplink(cfg, stream_rng(seed, r, STREAM_CHANNEL))
    nus = slr_directions(second_moments(ch.u, cfg.sigma_cal_sq))
    return ch, nus, moment_table(nus, ch.u, cfg.sigma_cal_sq)


def baseline_plan(cfg):
    return solve_plan(cfg.existing_plan, cfg.priorities, cfg.plan_weight).alpha


def random_unit(rng, m):
    v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return v / np.linalg.norm(v)


ACCEPTANCE_LINES: dict[int, str] = {}


def report(number: int, title: str, ok: bool, detail: str) -> None:
    """Record and print the verdict line of one acceptance criterion."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
