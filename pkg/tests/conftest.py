import math

import numpy as np
import pytest

from loopsoup_lab.core.geometry import unit_disk
from loopsoup_lab.core.loopmeasure import AlphaTable, Estimate


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte Carlo tests marked slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo test with a large replica budget")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


SE = 1e-3


def log_alpha(delta: float) -> float:
    """Synthetic mass law α_δ(z) = (1/5) ln(2/δ)."""
    return 0.2 * math.log(2.0 / delta)


def synthetic_table(domain, points, deltas=()) -> AlphaTable:
    """
    AlphaTable filled from closed forms instead of Monte Carlo:
    α_δ(z) = (1/5) ln(2/δ), α(z,w) = (1/5) ln(2/|z−w|), α_δ(z|w) = α_δ(z) − α(z,w),
    ᾱ_δ(z) slightly below α_δ(z). Every cutoff a builder would store is present.
    """
    points = np.asarray([complex(p) for p in points])
    table = AlphaTable(domain=domain.describe(), points=points, metadata={"synthetic": True})
    d_z = np.atleast_1d(domain.boundary_distance(points))
    for i, z in enumerate(points):
        cuts = {float(d) for d in deltas} | {float(d_z[i])}
        for j, w in enumerate(points):
            if i != j:
                cuts.add(float(min(abs(z - w), d_z[i])))
        for d in cuts:
            table.set("alpha", z, Estimate(log_alpha(d), SE, 200), delta=d)
        for d in deltas:
            table.set("alpha_ball", z, Estimate(log_alpha(d) - 0.01, SE, 200), delta=d)
            table.set("alpha_ball", z, Estimate(log_alpha(d / 2) - 0.01, SE, 200), delta=d / 2)
        for j, w in enumerate(points):
            if i == j:
                continue
            sep = abs(z - w)
            if j > i:
                table.set("alpha_pair", z, Estimate(log_alpha(sep), SE, 200), w=w)
            for d in {float(d) for d in deltas if d <= sep} | {float(min(sep, d_z[i]))}:
                table.set("alpha_cond", z, Estimate(log_alpha(d) - log_alpha(sep), SE, 200), w=w, delta=d)
    return table


@pytest.fixture
def disk():
    return unit_disk()


@pytest.fixture
def table_factory(disk):
    def make(points, deltas=(), domain=None):
        return synthetic_table(domain or disk, points, deltas)
    return make
