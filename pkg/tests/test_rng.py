"""The random stream must match its documented algorithm and be reproducible."""

import numpy as np

from dbvae.rng import RngStream

from oracles import splitmix64_reference


class TestAgainstReference:
    """The vectorized stream must equal a pure-Python SplitMix64 transcript."""

    def test_raw_words(self):
        stream = RngStream(12345)
        words = stream._next_words(16)
        assert [int(w) for w in words] == splitmix64_reference(12345, 16)

    def test_uniform_uses_top_53_bits(self):
        stream = RngStream(7)
        got = stream.uniform((4,))
        expected = [(w >> 11) * 2.0 ** -53 for w in splitmix64_reference(7, 4)]
        np.testing.assert_array_equal(got, expected)

    def test_normal_is_box_muller(self):
        stream = RngStream(99)
        got = stream.normal((2,))
        w = splitmix64_reference(99, 4)
        u1 = [((x >> 11) + 1) * 2.0 ** -53 for x in w[:2]]
        u2 = [(x >> 11) * 2.0 ** -53 for x in w[2:]]
        expected = [np.sqrt(-2 * np.log(a)) * np.cos(2 * np.pi * b)
                    for a, b in zip(u1, u2)]
        np.testing.assert_allclose(got, expected, rtol=0, atol=0)


class TestDeterminism:
    def test_same_seed_same_sequence(self):
        a, b = RngStream(4242), RngStream(4242)
        np.testing.assert_array_equal(a.uniform((100,)), b.uniform((100,)))
        np.testing.assert_array_equal(a.normal((100,)), b.normal((100,)))
        np.testing.assert_array_equal(a.permutation(50), b.permutation(50))

    def test_different_seeds_differ(self):
        assert not np.array_equal(RngStream(1).uniform((32,)), RngStream(2).uniform((32,)))

    def test_counter_advances(self):
        stream = RngStream(5)
        first = stream.uniform((8,))
        second = stream.uniform((8,))
        assert not np.array_equal(first, second)
        assert stream.counter == 16

    def test_split_is_position_independent(self):
        parent = RngStream(11)
        child_before = parent.split(3)
        parent.uniform((100,))
        child_after = parent.split(3)
        np.testing.assert_array_equal(child_before.uniform((8,)), child_after.uniform((8,)))

    def test_split_keys_give_distinct_streams(self):
        parent = RngStream(11)
        a = parent.split(1).uniform((16,))
        b = parent.split(2).uniform((16,))
        assert not np.array_equal(a, b)


class TestDistributions:
    def test_uniform_range_and_mean(self):
        u = RngStream(2024).uniform((200_000,), low=-2.0, high=3.0)
        assert u.min() >= -2.0 and u.max() < 3.0
        assert abs(u.mean() - 0.5) < 0.02

    def test_normal_moments(self):
        z = RngStream(77).normal((200_000,))
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01

    def test_integers_cover_range_uniformly(self):
        draws = RngStream(13).integers(7, size=(70_000,))
        assert draws.min() == 0 and draws.max() == 6
        freq = np.bincount(draws, minlength=7) / len(draws)
        np.testing.assert_allclose(freq, 1 / 7, atol=0.01)

    def test_permutation_is_a_permutation(self):
        perm = RngStream(9).permutation(1000)
        assert sorted(perm.tolist()) == list(range(1000))

    def test_scalar_draws(self):
        stream = RngStream(3)
        x = stream.uniform((), 0.0, 1.0)
        assert np.ndim(x) == 0 and 0.0 <= float(x) < 1.0
        assert isinstance(stream.integers(10), int)
