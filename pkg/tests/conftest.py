"""Shared Monte Carlo fixtures; session-scoped because they dominate runtime."""

import pytest

from scatchain.haar import fit_measure_scaling, measure_estimate, pmax_distribution

# Sample counts per d chosen so the rarest set still collects O(10^2) hits.
BALLISTIC_SCHEDULE = ((1, 100_000), (2, 1_000_000), (3, 3_000_000), (4, 10_000_000))
TOTLOC_DS = (1, 2, 4, 8, 16)
MEASURE_SEED = 7
PMAX_SEED = 11
PMAX_SAMPLES = 100_000


@pytest.fixture(scope="session")
def ballistic_measures():
    return tuple(
        measure_estimate(d, "ballistic", n, seed=MEASURE_SEED) for d, n in BALLISTIC_SCHEDULE
    )


@pytest.fixture(scope="session")
def ballistic_fit(ballistic_measures):
    return fit_measure_scaling(ballistic_measures, "ballistic")


@pytest.fixture(scope="session")
def totloc_measures():
    return tuple(
        measure_estimate(d, "totally_localised", 100_000, seed=MEASURE_SEED) for d in TOTLOC_DS
    )


@pytest.fixture(scope="session")
def totloc_fit(totloc_measures):
    return fit_measure_scaling(totloc_measures, "totally_localised")


@pytest.fixture(scope="session")
def pmax_stats():
    return {d: pmax_distribution(d, PMAX_SAMPLES, seed=PMAX_SEED) for d in (2, 4, 8, 16)}
