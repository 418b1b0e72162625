import math

import numpy as np
import pytest

from parlab.reproduce import THEOREMS, bump, reproduce_height, stokes_source_integral

STOKES_INT_H2 = 0.04980288268782384  # int f sinh(r) dr dtheta, mpmath


def test_bump_support():
    t = np.array([-1.0, -0.5, 0.0, 0.5, 1.0, 2.0])
    b = bump(t)
    assert b[0] == b[4] == b[5] == 0.0
    assert b[2] == pytest.approx(math.exp(-1.0))
    assert b[1] == b[3]


def test_source_integral_oracle():
    assert stokes_source_integral(np.sinh) == pytest.approx(STOKES_INT_H2, rel=1e-10)


@pytest.mark.parametrize("name", sorted(THEOREMS))
def test_reproductions_pass(name):
    rep = THEOREMS[name]({})
    assert rep.passed, rep.failure
    assert rep.tables and all(t.count("\n") >= 2 for t in rep.tables.values())
    assert rep.to_dict()["theorem"] == name


def test_height_failure_is_reported():
    rep = reproduce_height({"rhos": (0.5, 1.2), "h": 0.05})
    assert not rep.passed and "rho=1.2" in rep.failure
