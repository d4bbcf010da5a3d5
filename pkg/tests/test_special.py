import math

import pytest
from hypothesis import given, strategies as st

from nestcoal.special import lambert_w_m1

# scipy.special.lambertw(y, -1).real, frozen
ORACLE = {
    -1 / (2 * math.sqrt(math.e)): -1.7564312086261695,
    -0.36: -1.2227701339785066,
    -0.3: -1.7813370234216275,
    -0.1: -3.577152063957297,
    -1e-3: -9.11800647040274,
    -1e-8: -21.488183944009798,
}


@pytest.mark.parametrize("y,w", sorted(ORACLE.items()))
def test_matches_scipy(y, w):
    assert lambert_w_m1(y) == pytest.approx(w, rel=1e-12)


def test_branch_point_and_domain():
    assert lambert_w_m1(-math.exp(-1)) == pytest.approx(-1.0, abs=1e-7)
    for bad in (-0.5, 0.0, 0.1):
        with pytest.raises(ValueError):
            lambert_w_m1(bad)


@given(st.floats(min_value=-math.exp(-1) + 1e-9, max_value=-1e-300))
def test_inverse_relation(y):
    w = lambert_w_m1(y)
    assert w <= -1.0
    assert w * math.exp(w) == pytest.approx(y, rel=1e-9, abs=1e-300)
