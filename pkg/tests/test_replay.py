import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from uavrelay.replay import PrioritizedReplayBuffer, SumTree, Transition, UniformReplayBuffer


def _t(i):
    return Transition(
        image=np.full((1, 2, 2), float(i)), aux=np.array([i, 0.0]), action=np.zeros(3),
        reward=float(i), next_image=np.zeros((1, 2, 2)), next_aux=np.zeros(2), done=False,
    )


def _filled(priorities, alpha=1.0, seed=0):
    buf = PrioritizedReplayBuffer(len(priorities), alpha=alpha, eps=1e-3, seed=seed)
    for i in range(len(priorities)):
        buf.push(_t(i))
    buf.update_priorities(np.arange(len(priorities)), np.asarray(priorities) - 1e-3)
    return buf


def _frequencies(buf, draws, batch=None):
    batch = batch or len(buf)
    counts = np.zeros(len(buf), dtype=int)
    for _ in range(draws // batch):
        _, _, idx = buf.sample(batch, beta=0.4)
        counts += np.bincount(idx % buf.capacity, minlength=len(buf))
    return counts


def test_push_initial_priority_and_eviction():
    buf = PrioritizedReplayBuffer(2)
    buf.push(_t(0))
    assert len(buf) == 1 and buf.priorities[0] == 1.0
    buf.push(_t(1))
    buf.push(_t(2))
    assert len(buf) == 2
    assert buf.stored_serials() == [1, 2]
    stored = sorted(buf._store.arrays["reward"])
    assert stored == [1.0, 2.0]


def test_new_push_receives_current_max():
    buf = PrioritizedReplayBuffer(8)
    for i in range(3):
        buf.push(_t(i))
    buf.update_priorities([1], [5.0 - 1e-3])
    buf.push(_t(3))
    assert buf.priorities[3] == pytest.approx(5.0)


def test_evicted_max_does_not_leak():
    buf = PrioritizedReplayBuffer(2)
    buf.push(_t(0))
    buf.update_priorities([0], [9.0])
    buf.push(_t(1))
    buf.update_priorities([1], [1.0])
    buf.push(_t(2))  # evicts serial 0, the only holder of the max
    assert buf.priorities.max() == pytest.approx(1.0 + 1e-3)


def test_fifo_order_through_many_evictions():
    buf = UniformReplayBuffer(5)
    for i in range(23):
        buf.push(_t(i))
    assert buf.stored_serials() == list(range(18, 23))
    _, _, idx = buf.sample(5)
    assert set(idx) <= set(range(18, 23))


def test_equal_priorities_are_uniform():
    buf = _filled(np.ones(20))
    counts = _frequencies(buf, 100_000)
    assert chisquare(counts).pvalue > 0.01


def test_skewed_priorities_frequency():
    buf = _filled([3.0, 1.0, 1.0, 1.0])
    counts = _frequencies(buf, 100_000)
    assert abs(counts[0] / counts.sum() - 0.5) <= 0.01


@pytest.mark.parametrize("seed", range(4))
def test_random_priorities_match_distribution(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 65))
    pri = rng.uniform(0.05, 3.0, size=n)
    buf = _filled(pri, alpha=0.6, seed=seed)
    expected = pri**0.6 / np.sum(pri**0.6)
    assert np.allclose(buf.probabilities(), expected)
    counts = _frequencies(buf, 100_000)
    assert chisquare(counts, expected * counts.sum()).pvalue > 0.01


def test_importance_weights():
    buf = _filled([3.0, 1.0, 1.0, 1.0])
    _, w, _ = buf.sample(4, beta=0.0)
    assert np.all(w == 1.0)
    batch, w, idx = buf.sample(4, beta=1.0)
    p = buf.probabilities()[idx % 4]
    expected = (4 * p) ** -1.0
    assert np.allclose(w, expected / expected.max())
    assert w.max() == 1.0
    assert np.array_equal(batch.reward, idx.astype(float))


def test_priority_floor_and_tree_arithmetic():
    buf = _filled([1.0, 1.0, 1.0])
    buf.update_priorities([2], [0.0])
    assert buf.priorities[2] == 1e-3
    tree = SumTree(4)
    for i in range(4):
        tree.update(i, 1.0)
    tree.update(2, 10.0)
    assert tree.total == 13.0


def test_stale_indices_are_counted():
    buf = PrioritizedReplayBuffer(3)
    for i in range(3):
        buf.push(_t(i))
    _, _, idx = buf.sample(3)
    for i in range(3, 5):
        buf.push(_t(i))
    buf.update_priorities(idx, np.ones(3))
    assert buf.stale_updates == sum(int(s) < 2 for s in idx)


def test_errors():
    buf = PrioritizedReplayBuffer(4)
    buf.push(_t(0))
    with pytest.raises(ValueError):
        buf.sample(2)
    with pytest.raises(ValueError):
        UniformReplayBuffer(4).sample(1)
    with pytest.raises(ValueError):
        buf.update_priorities([0], [np.nan])
    with pytest.raises(ValueError):
        PrioritizedReplayBuffer(0)
    with pytest.raises(ValueError):
        PrioritizedReplayBuffer(4, eps=0.0)
    bad = _t(1)
    bad.reward = np.inf
    with pytest.raises(ValueError):
        buf.push(bad)


def test_sampling_is_deterministic():
    a, b = _filled(np.arange(1.0, 9.0), seed=5), _filled(np.arange(1.0, 9.0), seed=5)
    for _ in range(5):
        assert np.array_equal(a.sample(4)[2], b.sample(4)[2])


def test_sum_tree_matches_flat_oracle_over_random_ops():
    rng = np.random.default_rng(0)
    cap = 37
    buf = PrioritizedReplayBuffer(cap, alpha=0.6, seed=1)
    for op in range(10_000):
        r = rng.random()
        if r < 0.4 or len(buf) < 8:
            buf.push(_t(op))
        elif r < 0.7:
            buf.sample(8, beta=rng.random())
        else:
            serials = rng.choice(buf.stored_serials(), size=4)
            buf.update_priorities(serials, rng.exponential(2.0, size=4))
        leaves = buf.priorities[: len(buf)] ** 0.6
        assert abs(buf.tree.total - leaves.sum()) <= 1e-9 * leaves.sum()
        assert np.all(buf.priorities[: len(buf)] >= 1e-3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 12), st.floats(0.0, 1e6)), min_size=1, max_size=200))
def test_sum_tree_property(ops):
    tree = SumTree(13)
    flat = np.zeros(13)
    for i, v in ops:
        tree.update(i, v)
        flat[i] = v
    assert abs(tree.total - flat.sum()) <= 1e-9 * max(flat.sum(), 1.0)
    if flat.sum() > 0:
        for mass in np.linspace(0, flat.sum(), 7, endpoint=False):
            i = tree.find(mass)
            assert flat[i] > 0
