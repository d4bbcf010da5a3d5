import numpy as np
import pytest

from nestcoal.rng import RngStream, as_generator, open_uniform


def test_same_stream_same_draws():
    a = RngStream(7, 3).generator().random(5)
    b = RngStream(7, 3).generator().random(5)
    assert np.array_equal(a, b)


def test_streams_differ():
    a = RngStream(7, 0).generator().random(5)
    b = RngStream(7, 1).generator().random(5)
    c = RngStream(8, 0).generator().random(5)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_child_and_as_generator():
    s = RngStream(11)
    assert s.child(4) == RngStream(11, 4)
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert as_generator(5).random() == RngStream(5).generator().random()
    with pytest.raises(TypeError):
        as_generator("x")
    with pytest.raises(ValueError):
        RngStream(1, -1)


def test_open_uniform_positive():
    u = open_uniform(RngStream(0).generator(), 10_000)
    assert u.min() > 0 and u.max() < 1
    assert 0 < open_uniform(RngStream(0).generator()) < 1
