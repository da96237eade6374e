import numpy as np

from fedsim.seeding import seeded_rng


def test_same_keys_same_stream():
    a = seeded_rng(1, 2, 3).random(10)
    b = seeded_rng(1, 2, 3).random(10)
    assert np.array_equal(a, b)


def test_different_keys_different_streams():
    a = seeded_rng(1, 2, 3).random(10)
    assert not np.array_equal(a, seeded_rng(1, 2, 4).random(10))
    assert not np.array_equal(a, seeded_rng(3, 2, 1).random(10))
    assert not np.array_equal(a, seeded_rng(1, 2).random(10))


def test_negative_and_large_keys_accepted():
    a = seeded_rng(-1, 2**80).random(3)
    b = seeded_rng(-1, 2**80).random(3)
    assert np.array_equal(a, b)
