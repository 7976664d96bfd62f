"""Shared fixtures: canonical configs and cached synthetic draws.

The Monte Carlo studies are expensive, so the acceptance criteria share
one session-scoped 200-replication run covering all six regimes plus
the naive baselines.
"""

from __future__ import annotations

import numpy as np
import pytest

import proxate as px


@pytest.fixture(scope="session")
def confounded_cfg() -> px.DGPConfig:
    return px.confounded_config()


@pytest.fixture(scope="session")
def unconfounded_cfg() -> px.DGPConfig:
    return px.unconfounded_config()


@pytest.fixture(scope="session")
def small_data(confounded_cfg):
    data, oracle = px.generate(confounded_cfg, 2000, 0.5, seed=7)
    return data, oracle


@pytest.fixture(scope="session")
def medium_data(confounded_cfg):
    data, oracle = px.generate(confounded_cfg, 2 * 10**5, 0.5, seed=11)
    return data, oracle


@pytest.fixture(scope="session")
def mc200(confounded_cfg) -> px.MCReport:
    """One 200-replication study at n = 4e4 shared by several criteria."""
    return px.run_monte_carlo(
        confounded_cfg,
        n=40_000,
        pi=0.5,
        estimators=("OB-OR", "OB-IPW", "SB", "MR", "SI"),
        regimes=("all_correct", "case1", "case2", "case3", "case4", "all_wrong"),
        replications=200,
        base_seed=5000,
    )


def mc_se(stats) -> float:
    """Monte Carlo standard error of a replication mean."""
    return stats.sd / np.sqrt(stats.n_replications)
