import numpy as np
import pytest

from nestcoal.nested import NestedConfig, simulate_nested
from nestcoal.trajectory import Decimation, Trajectory, format_float, sample_counts_at


def test_parse_policies():
    assert Decimation.parse("all-events").kind == "all-events"
    assert Decimation.parse("geometric:1.5").ratio == 1.5
    assert Decimation.parse("geometric").ratio == 1.02
    assert Decimation.parse("every-kth:10").k == 10
    for bad in ("nope", "every-kth", "geometric:0.5", "every-kth:0"):
        with pytest.raises(ValueError):
            Decimation.parse(bad)


def test_step_lookup():
    tr = Trajectory([0.0, 1.0, 2.0], [3, 2, 1], [9, 5, 1])
    assert tr.N_at(0.5) == 9
    assert tr.N_at(1.0) == 5
    assert list(tr.N_at([0.0, 1.5, 2.0])) == [9, 5, 1]
    assert sample_counts_at(tr, [1.99]) == [(2, 5)]
    with pytest.raises(ValueError):
        tr.N_at(3.0)


def test_validate_rejects_bad_rows():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [1, 1], [1, 1]).validate()
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [1, 2], [3, 3]).validate()
    with pytest.raises(ValueError):
        Trajectory([], [], [])


def test_csv_round_trip(tmp_path):
    tr = simulate_nested(NestedConfig(6, 9, 1.1, seed=5))
    path = tmp_path / "t.csv"
    text = tr.to_csv(path)
    assert text.startswith("t,S,N\n")
    back = Trajectory.from_csv(path)
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.N, tr.N)


def test_format_float_round_trip():
    for x in (0.1, 1 / 3, 1e-300, 12345.678):
        assert float(format_float(x)) == x
    assert format_float(float("inf")) == "inf"
