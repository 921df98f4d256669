import numpy as np

from loopsoup_lab.rng import child_seed, stream, streams


def test_streams_are_keyed_by_seed_replica_and_tag():
    a = stream(1, 0, "soup").random(4)
    np.testing.assert_array_equal(a, stream(1, 0, "soup").random(4))
    assert not np.array_equal(a, stream(1, 1, "soup").random(4))
    assert not np.array_equal(a, stream(1, 0, "skellam").random(4))
    assert not np.array_equal(a, stream(2, 0, "soup").random(4))


def test_replica_streams_do_not_depend_on_order():
    forward = [g.random() for g in streams(5, 3, "table")]
    assert forward[2] == stream(5, 2, "table").random()


def test_child_seed_is_deterministic():
    assert child_seed(stream(0, 0, "alpha_table")) == child_seed(stream(0, 0, "alpha_table"))
    assert 0 <= child_seed(stream(0, 0, "x")) < 2**63
