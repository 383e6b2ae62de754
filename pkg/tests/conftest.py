import math

import numpy as np
import pytest

from randgreen.drivers import DriverSpec, Family
from randgreen.projective import RationalMap

LOG2 = math.log(2.0)


def power_map(d: int = 2, c: complex = 0.0) -> RationalMap:
    """z -> z^d + c on P^1."""
    comps = [{(d, 0): 1.0, (0, d): c}, {(0, d): 1.0}]
    return RationalMap.from_components(comps)


def diagonal_map(k: int = 2, d: int = 2) -> RationalMap:
    comps = []
    for i in range(k + 1):
        e = [0] * (k + 1)
        e[i] = d
        comps.append({tuple(e): 1.0})
    return RationalMap.from_components(comps)


def random_map(rng, k: int, d: int) -> RationalMap:
    from randgreen.projective import exponents
    m = len(exponents(k + 1, d))
    C = rng.standard_normal((k + 1, m)) + 1j * rng.standard_normal((k + 1, m))
    return RationalMap(k, d, C)


def z2_cycle(d: int = 2) -> DriverSpec:
    return DriverSpec.cycle_of(Family("power", 1, d), [[0.0]])


def iid_driver(radius: float = 0.1, k: int = 1, d: int = 2) -> DriverSpec:
    return DriverSpec.iid(Family("power", k, d), 0.0, radius)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
