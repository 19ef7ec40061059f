import numpy as np
import pytest

from resilient_ne.adversary import (
    ConstantSignal,
    DropLink,
    GaussianNoise,
    Honest,
    Jam,
    ManInTheMiddle,
    MessageBatch,
    SelfishDeceiver,
    Silent,
    UniformRandom,
    adversary_update,
    apply_channel_attacks,
    corrupt_outgoing,
    substream,
)
from resilient_ne.errors import NoTruthfulNeighbors, UnknownEdge
from resilient_ne.game import Custom, GameSpec, QuadraticAffine
from resilient_ne.protocol import gradient_update


def test_policy_outputs():
    honest = np.array([1.0, -2.0, 3.0])
    rng = substream(0, 1)
    np.testing.assert_array_equal(corrupt_outgoing(GaussianNoise(0.0), honest, rng), honest)
    np.testing.assert_array_equal(corrupt_outgoing(ConstantSignal(np.zeros(3)), honest, rng),
                                  np.zeros(3))
    assert corrupt_outgoing(Silent(), honest, rng) is None
    np.testing.assert_array_equal(corrupt_outgoing(Honest(), honest, rng), honest)
    u = corrupt_outgoing(UniformRandom(-0.5, 0.25), honest, rng, count=1000)
    assert u.shape == (1000, 3) and u.min() >= -0.5 and u.max() <= 0.25
    game = GameSpec(3, (1, 1, 1), QuadraticAffine(np.eye(3), np.zeros(3)))
    lie = corrupt_outgoing(SelfishDeceiver(4.0), honest, rng, game=game, sender=1)
    np.testing.assert_array_equal(lie, [1.0, 2.0, 3.0])
    lie = corrupt_outgoing(SelfishDeceiver(4.0, target=2), honest, rng, game=game, sender=1)
    np.testing.assert_array_equal(lie, [1.0, -2.0, 7.0])


def test_policy_validation():
    with pytest.raises(ValueError):
        GaussianNoise(-1.0)
    with pytest.raises(ValueError):
        UniformRandom(1.0, 0.0)


def test_gaussian_noise_is_centered():
    draws = 100_000
    honest = np.array([3.0, -1.0])
    sent = corrupt_outgoing(GaussianNoise(1.0), honest, substream(42, 7), count=draws)
    mean = (sent - honest).mean(axis=0)
    assert np.all(np.abs(mean) <= 3.0 / np.sqrt(draws))


def test_substreams_are_reproducible_and_distinct():
    a = substream(5, 1, 10, 3).standard_normal(4)
    assert np.array_equal(a, substream(5, 1, 10, 3).standard_normal(4))
    assert not np.array_equal(a, substream(5, 1, 11, 3).standard_normal(4))
    assert not np.array_equal(a, substream(6, 1, 10, 3).standard_normal(4))


def test_zero_cost_adversary_only_averages():
    game = GameSpec(3, (1, 1, 1), Custom(lambda i, x: 0.0, lambda i, x: np.zeros(1)))
    out = adversary_update(0, np.array([5.0, 0.0, 0.0]),
                           {1: np.array([1.0, 2.0, 4.0]), 2: np.array([3.0, 6.0, 0.0])},
                           [True, False, False], np.array([5.0, 0.0, 0.0]), game, 0.3)
    np.testing.assert_allclose(out, [5.0, 4.0, 2.0])


def test_single_truthful_neighbour_is_copied():
    game = GameSpec(2, (1, 1), QuadraticAffine(np.eye(2), np.zeros(2)))
    msg = np.array([0.7, -0.2])
    out = adversary_update(0, np.zeros(2), {1: msg}, [True, False], np.array([0.0, 9.0]),
                           game, 0.1)
    assert out[1] == msg[1]


def test_adversary_step_matches_protocol_step(rng):
    n = 4
    G = rng.standard_normal((n, n))
    G = G @ G.T + np.eye(n)
    game = GameSpec(2, (2, 2), QuadraticAffine(G, rng.standard_normal(n)))
    msgs = {1: rng.standard_normal(n), 3: rng.standard_normal(n)}
    mask = np.array([True, True, False, False])
    truth = rng.standard_normal(n)
    out = adversary_update(0, np.zeros(n), msgs, mask, truth, game, 0.2)
    v = np.where(mask, truth, (msgs[1] + msgs[3]) / 2)
    assert np.array_equal(out, gradient_update(0, v, game, 0.2))


def test_empty_truthful_inbox_raises():
    game = GameSpec(1, (1,), QuadraticAffine(np.eye(1), np.zeros(1)))
    with pytest.raises(NoTruthfulNeighbors):
        adversary_update(0, np.zeros(1), {}, [True], np.zeros(1), game, 0.1)


def batch():
    edges = frozenset({(0, 1), (0, 2), (1, 2)})
    entries = {e: np.array([float(e[1]), 1.0]) for e in edges}
    return MessageBatch(3, entries, edges)


def test_channel_attacks():
    b = batch()
    out = apply_channel_attacks(b, [], seed=1)
    assert out.entries.keys() == b.entries.keys()
    out = apply_channel_attacks(b, [DropLink((0, 1), 1.0)], seed=1)
    assert (0, 1) not in out.entries and (0, 2) in out.entries
    out = apply_channel_attacks(b, [ManInTheMiddle((1, 2))], seed=1)
    np.testing.assert_array_equal(out.entries[(1, 2)], -b.entries[(1, 2)])
    affine = ManInTheMiddle((1, 2), scale=[[0.0, 1.0], [1.0, 0.0]], shift=[1.0, 0.0])
    np.testing.assert_array_equal(apply_channel_attacks(b, [affine], 0).entries[(1, 2)],
                                  [2.0, 2.0])
    jammed = apply_channel_attacks(b, [Jam(((0, 2), (1, 2)), 0.5)], seed=9)
    again = apply_channel_attacks(b, [Jam(((0, 2), (1, 2)), 0.5)], seed=9)
    assert not np.array_equal(jammed.entries[(0, 2)], b.entries[(0, 2)])
    np.testing.assert_array_equal(jammed.entries[(1, 2)], again.entries[(1, 2)])
    # the input batch is never modified
    np.testing.assert_array_equal(b.entries[(0, 2)], [2.0, 1.0])
    with pytest.raises(UnknownEdge):
        apply_channel_attacks(b, [DropLink((2, 0), 1.0)], seed=1)
    with pytest.raises(ValueError):
        DropLink((0, 1), 1.5)


def test_drop_probability_is_respected():
    dropped = sum((0, 1) not in apply_channel_attacks(MessageBatch(k, batch().entries,
                                                                   batch().edges),
                                                      [DropLink((0, 1), 0.3)], seed=4).entries
                  for k in range(4000))
    assert abs(dropped / 4000 - 0.3) < 0.03
