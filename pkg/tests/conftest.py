import numpy as np
import pytest

from crpower import Scenario, SensingConfig, scenario_from_config

PAPER_CONFIG = {
    "g1_db": 0, "g2_db": 0, "gamma_db": 0, "h_db": 0, "n0_db": 0,
    "pp": 0.5, "q0": 0.7, "p_avg_db": 10, "i_avg": 0.5,
    "frame_t": 0.1, "fs": 1e6, "m": 4,
}

# grid biased toward small sensing times, where the two energy laws overlap
# and the level structure actually matters; shared by every strategy
TAU_GRID = (0.0, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3, 2.5e-3, 5e-3, 1e-2, 2e-2, 5e-2)


@pytest.fixture(scope="session")
def paper_scenario() -> Scenario:
    return scenario_from_config(dict(PAPER_CONFIG))


@pytest.fixture(scope="session")
def tau_cfg() -> SensingConfig:
    return SensingConfig(TAU_GRID)


@pytest.fixture(scope="session")
def fast_scenario() -> Scenario:
    """Same physics at a coarser sampling rate, for cheap solver tests."""
    cfg = dict(PAPER_CONFIG)
    cfg["fs"] = 2e4
    return scenario_from_config(cfg)


def random_scenario(rng: np.random.Generator, m: int | None = None) -> Scenario:
    """Random but well-posed instance with a busy-idle gain separation."""
    logu = lambda lo, hi: float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    return Scenario(
        g1=logu(0.2, 5.0),
        g2=logu(0.1, 3.0),
        gamma_=logu(0.2, 5.0),
        h=logu(0.2, 5.0),
        n0=logu(0.5, 2.0),
        pp=logu(0.2, 3.0),
        q0=float(rng.uniform(0.1, 0.9)),
        p_avg=logu(0.5, 50.0),
        i_avg=logu(0.05, 5.0),
        frame_t=0.1,
        fs=float(rng.integers(2_000, 40_000)),
        m=int(m if m is not None else rng.integers(2, 5)),
    )
