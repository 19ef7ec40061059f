import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_ne.errors import AssumptionViolation, DimensionMismatch, NonFiniteInput
from resilient_ne.game import GameSpec, QuadraticAffine, solve_ne_oracle
from resilient_ne.protocol import (
    FilterConfig,
    batch_filtered_average,
    batch_prune_and_average,
    gradient_update,
    pack_outgoing,
    prune_and_average,
    reconstruct_weight_row,
    trim_component,
    truthful_equivalent_row,
)


def reference_trim(own, received, D):
    """Sort-and-trim written from scratch: sort by (value, sender), cut the extremes."""
    ranked = sorted(received, key=lambda p: (p[1], p[0]))
    below = [p for p in ranked if p[1] < own]
    above = [p for p in ranked if p[1] > own]
    # largest first among values above, lowest sender first among equal values
    above_desc = sorted(above, key=lambda p: (-p[1], p[0]))
    drop = {s for s, _ in below[:D]} | {s for s, _ in above_desc[:D]}
    return sorted(s for s, _ in received if s not in drop)


def scalar_inbox(values):
    return {j + 1: np.array([v]) for j, v in enumerate(values)}


def test_trim_example():
    v, retained = prune_and_average(0, np.array([5.0]), scalar_inbox([1, 2, 3, 6, 9]),
                                    [False], [0.0], FilterConfig(D=1))
    assert v[0] == 4.0
    assert retained[0] == (2, 3, 4)


def test_constant_inputs_pass_through():
    for D in range(3):
        v, _ = prune_and_average(0, np.array([2.5]), scalar_inbox([2.5] * 5), [False], [0.0],
                                 FilterConfig(D=D))
        assert v[0] == 2.5


def test_observed_component_uses_true_action():
    v, retained = prune_and_average(0, np.array([1.0, 1.0]),
                                    {1: np.array([9.0, 9.0]), 2: np.array([7.0, 7.0]),
                                     3: np.array([8.0, 8.0])},
                                    [True, False], [-3.0, 0.0], FilterConfig(D=1))
    assert v[0] == -3.0 and retained[0] is None
    assert v[1] == pytest.approx((7.0 + 8.0 + 1.0) / 3)


def test_zero_trim_is_plain_average():
    v, _ = prune_and_average(0, np.array([1.0]), scalar_inbox([2, 3, 10]), [False], [0.0],
                             FilterConfig(D=0))
    assert v[0] == pytest.approx(4.0)


def test_short_inbox_and_bad_shapes():
    with pytest.raises(AssumptionViolation):
        prune_and_average(0, np.zeros(1), scalar_inbox([1, 2]), [False], [0.0], FilterConfig(D=1))
    with pytest.raises(DimensionMismatch):
        prune_and_average(0, np.zeros(1), {1: np.zeros(2)}, [False], [0.0], FilterConfig(D=0))
    with pytest.raises(ValueError):
        FilterConfig(D=-1)
    with pytest.raises(ValueError):
        FilterConfig(eta=0.0)


def test_tie_break_drops_lowest_sender_first():
    assert trim_component(0.0, [(4, 1.0), (2, 1.0), (7, 1.0)], 1) == [4, 7]
    assert trim_component(0.0, [(4, -1.0), (2, -1.0)], 1) == [4]


def test_gradient_step_examples():
    game = GameSpec(1, (1,), QuadraticAffine([[1.0]], [-3.0]))
    assert gradient_update(0, np.array([0.0]), game, 0.5)[0] == 1.5
    assert gradient_update(0, np.array([3.0]), game, 0.5)[0] == 3.0
    two = GameSpec(2, (1, 1), QuadraticAffine([[2.0, 1.0], [1.0, 2.0]], [-1.0, -1.0]))
    x = solve_ne_oracle(two)
    for i in range(2):
        np.testing.assert_allclose(gradient_update(i, x, two, 0.3), x, atol=1e-15)
    with pytest.raises(NonFiniteInput):
        gradient_update(0, np.array([np.nan]), game, 0.5)


def test_gradient_step_touches_only_own_block(rng):
    n = 6
    G = rng.standard_normal((n, n))
    G = G @ G.T + n * np.eye(n)
    game = GameSpec(3, (2, 1, 3), QuadraticAffine(G, rng.standard_normal(n)))
    v = rng.standard_normal(n)
    for i in range(3):
        out = gradient_update(i, v, game, 0.1)
        mask = np.ones(n, bool)
        mask[game.block(i)] = False
        assert np.array_equal(out[mask], v[mask])


def test_pack_outgoing_copies():
    b = np.array([1.0, 2.0])
    assert pack_outgoing(b, []) == {}
    out = pack_outgoing(b, {5, 2})
    assert sorted(out) == [2, 5]
    for msg in out.values():
        assert np.array_equal(msg, b) and msg is not b


def test_weight_row_examples():
    row = reconstruct_weight_row(0, [(2, 3, 4)], [False], np.array([0]), 6)
    np.testing.assert_allclose(row[0], [0.25, 0, 0.25, 0.25, 0.25, 0])
    selector = reconstruct_weight_row(1, [None, None], [True, True], np.array([0, 2]), 3)
    np.testing.assert_array_equal(selector, [[1, 0, 0], [0, 0, 1]])


# -- randomized properties -------------------------------------------------------

@st.composite
def filter_case(draw):
    D = draw(st.integers(0, 3))
    size = draw(st.integers(2 * D + 1, 2 * D + 6))
    num_bad = draw(st.integers(0, D))
    # small integer grid makes ties frequent
    val = st.integers(-4, 4).map(float)
    own = draw(val)
    good = draw(st.lists(val, min_size=size - num_bad, max_size=size - num_bad))
    bad = draw(st.lists(st.floats(-1e3, 1e3), min_size=num_bad, max_size=num_bad))
    order = draw(st.permutations(range(1, size + 1)))
    return D, own, good, bad, list(order)


@settings(max_examples=400, deadline=None)
@given(filter_case())
def test_filter_properties(case):
    D, own, good, bad, order = case
    senders = order
    values = good + bad
    inbox = {s: np.array([v]) for s, v in zip(senders, values)}
    genuine = set(senders[:len(good)])
    v, retained = prune_and_average(0, np.array([own]), inbox, [False], [0.0], FilterConfig(D=D))
    hull = [own] + good
    assert min(hull) - 1e-12 <= v[0] <= max(hull) + 1e-12
    assert len(retained[0]) + 1 >= len(inbox) + 1 - 2 * D
    assert sorted(retained[0]) == reference_trim(own, [(s, inbox[s][0]) for s in inbox], D)
    eta = 1.0 / (len(inbox) + 1)
    row = reconstruct_weight_row(0, retained, [False], np.array([0]), max(senders) + 1)
    assert abs(row.sum() - 1) <= 1e-12
    assert np.all((row == 0) | (row >= eta - 1e-15))
    eq = truthful_equivalent_row(0, row, np.array([own]), inbox, genuine, [False])
    assert abs(eq.sum() - 1) <= 1e-12 and eq.min() >= 0
    assert set(np.flatnonzero(eq[0])) <= genuine | {0}
    truth = np.zeros(eq.shape[1])
    truth[0] = own
    for s in genuine:
        truth[s] = inbox[s][0]
    assert eq[0] @ truth == pytest.approx(v[0], abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(filter_case(), st.randoms(use_true_random=False))
def test_filter_is_permutation_invariant(case, rnd):
    D, own, good, bad, order = case
    items = list(zip(order, good + bad))
    shuffled = items[:]
    rnd.shuffle(shuffled)
    a = prune_and_average(0, np.array([own]), {s: np.array([v]) for s, v in items}, [False],
                          [0.0], FilterConfig(D=D))
    b = prune_and_average(0, np.array([own]), {s: np.array([v]) for s, v in shuffled}, [False],
                          [0.0], FilterConfig(D=D))
    assert a[0][0] == b[0][0] and a[1] == b[1]


def test_batch_filters_agree_with_scalar_filter(rng):
    for _ in range(300):
        N, K, n = rng.integers(1, 6), rng.integers(0, 8), rng.integers(1, 4)
        D = int(rng.integers(0, 3))
        X = rng.integers(-3, 4, (N, n)).astype(float)
        Y = rng.integers(-3, 4, (N, K, n)).astype(float)
        valid = rng.random((N, K)) < 0.8
        V, kept = batch_prune_and_average(X, Y, valid, D)
        np.testing.assert_allclose(batch_filtered_average(X, Y, valid, D), V, rtol=0, atol=1e-13)
        for i in range(N):
            slots = np.flatnonzero(valid[i])
            if len(slots) < 2 * D + 1:
                continue
            inbox = {int(s): Y[i, s] for s in slots}
            v, retained = prune_and_average(i, X[i], inbox, np.zeros(n, bool), np.zeros(n),
                                            FilterConfig(D=D))
            np.testing.assert_allclose(V[i], v, rtol=0, atol=1e-13)
            for c in range(n):
                assert tuple(np.flatnonzero(kept[i, :, c])) == retained[c]


def test_trim_matches_reference_on_exhaustive_small_inboxes():
    values = [-1.0, 0.0, 1.0]
    for size in range(0, 5):
        for combo in itertools.product(values, repeat=size):
            received = list(enumerate(combo))
            for D in range(3):
                assert sorted(trim_component(0.0, received, D)) == reference_trim(0.0, received, D)
