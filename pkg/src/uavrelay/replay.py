"""Transition storage: uniform and proportional prioritized replay."""

from dataclasses import dataclass

import numpy as np

from .validation import check_int


@dataclass
class Transition:
    """One step, or a stacked batch of steps when the arrays carry a leading axis."""

    image: np.ndarray
    aux: np.ndarray
    action: np.ndarray
    reward: float
    next_image: np.ndarray
    next_aux: np.ndarray
    done: bool


class SumTree:
    """Binary tree of partial sums over ``capacity`` non-negative leaves."""

    def __init__(self, capacity):
        self.capacity = check_int(capacity, "capacity", minimum=1)
        size = 1
        while size < self.capacity:
            size *= 2
        self._size = size
        self._tree = np.zeros(2 * size)

    @property
    def total(self):
        return float(self._tree[1])

    def leaves(self):
        return self._tree[self._size : self._size + self.capacity].copy()

    def __getitem__(self, idx):
        return float(self._tree[self._size + idx])

    def update(self, idx, value):
        if not 0 <= idx < self.capacity:
            raise IndexError(idx)
        if not (value >= 0 and np.isfinite(value)):
            raise ValueError(f"priority must be finite and >= 0, got {value!r}")
        pos = self._size + idx
        self._tree[pos] = value
        pos //= 2
        while pos >= 1:
            self._tree[pos] = self._tree[2 * pos] + self._tree[2 * pos + 1]
            pos //= 2

    def find(self, mass):
        """Leaf index ``i`` with ``prefix(i) <= mass < prefix(i + 1)`` (clamped to non-empty leaves)."""
        pos = 1
        while pos < self._size:
            left = self._tree[2 * pos]
            if mass < left:
                pos = 2 * pos
            else:
                mass -= left
                pos = 2 * pos + 1
        idx = pos - self._size
        # rounding can walk past the last positive leaf
        while idx > 0 and (idx >= self.capacity or self._tree[self._size + idx] == 0.0):
            idx -= 1
        return idx


class _Storage:
    def __init__(self, capacity):
        self.capacity = check_int(capacity, "capacity", minimum=1)
        self.arrays = None
        self.n_pushed = 0

    def __len__(self):
        return min(self.n_pushed, self.capacity)

    def put(self, t):
        fields = {
            "image": np.asarray(t.image, dtype=np.float64),
            "aux": np.asarray(t.aux, dtype=np.float64),
            "action": np.asarray(t.action, dtype=np.float64),
            "reward": np.float64(t.reward),
            "next_image": np.asarray(t.next_image, dtype=np.float64),
            "next_aux": np.asarray(t.next_aux, dtype=np.float64),
            "done": np.float64(bool(t.done)),
        }
        if not np.isfinite(fields["reward"]):
            raise ValueError("transition reward must be finite")
        if self.arrays is None:
            self.arrays = {k: np.zeros((self.capacity,) + np.shape(v)) for k, v in fields.items()}
        slot = self.n_pushed % self.capacity
        for k, v in fields.items():
            self.arrays[k][slot] = v
        self.n_pushed += 1
        return slot

    def gather(self, slots):
        a = self.arrays
        return Transition(
            a["image"][slots], a["aux"][slots], a["action"][slots], a["reward"][slots],
            a["next_image"][slots], a["next_aux"][slots], a["done"][slots],
        )

    def slot_of(self, serial):
        """Storage slot for an insertion serial, or None if it has been evicted."""
        if serial < self.n_pushed - self.capacity or serial >= self.n_pushed or serial < 0:
            return None
        return serial % self.capacity

    def oldest_first(self):
        start = max(0, self.n_pushed - self.capacity)
        return list(range(start, self.n_pushed))


class UniformReplayBuffer:
    """FIFO ring buffer sampled uniformly; importance weights are all ones.

    ``sample`` returns ``(batch, weights, indices)`` where indices are
    insertion serial numbers, matching ``PrioritizedReplayBuffer``.
    """

    def __init__(self, capacity=100_000, seed=0):
        self._store = _Storage(capacity)
        self.rng = np.random.default_rng(seed)

    @property
    def capacity(self):
        return self._store.capacity

    def __len__(self):
        return len(self._store)

    def push(self, t):
        self._store.put(t)

    def sample(self, batch, beta=0.0):
        batch = check_int(batch, "batch", minimum=1)
        if len(self) < batch:
            raise ValueError(f"buffer holds {len(self)} transitions, need {batch}")
        serials = self.rng.integers(self._store.n_pushed - len(self), self._store.n_pushed, size=batch)
        slots = serials % self.capacity
        return self._store.gather(slots), np.ones(batch), serials

    def update_priorities(self, indices, td_errors):
        pass

    def stored_serials(self):
        return self._store.oldest_first()


class PrioritizedReplayBuffer:
    """Proportional prioritized replay.

    Leaf ``i`` of the sum tree holds ``p_i ** alpha``; raw priorities are
    ``|td_error| + eps``. New transitions get the largest raw priority
    currently stored (1.0 for an empty buffer).
    """

    def __init__(self, capacity=100_000, alpha=0.6, eps=1e-3, seed=0):
        self._store = _Storage(capacity)
        self.alpha = float(alpha)
        self.eps = float(eps)
        if self.alpha < 0 or not self.eps > 0:
            raise ValueError("alpha must be >= 0 and eps > 0")
        self.tree = SumTree(self._store.capacity)
        self.priorities = np.zeros(self._store.capacity)
        self.stale_updates = 0
        self.rng = np.random.default_rng(seed)

    @property
    def capacity(self):
        return self._store.capacity

    def __len__(self):
        return len(self._store)

    def _set(self, slot, priority):
        self.priorities[slot] = priority
        self.tree.update(slot, priority**self.alpha)

    @property
    def max_priority(self):
        n = len(self)
        return float(self.priorities[:n].max()) if n else 1.0

    def push(self, t):
        slot = self._store.put(t)
        # the evicted transition's priority must not leak into the max
        self.priorities[slot] = 0.0
        p = self.max_priority if len(self) > 1 else 1.0
        self._set(slot, p if p > 0 else 1.0)

    def probabilities(self):
        """Sampling probability of every stored slot (slot order)."""
        leaves = self.tree.leaves()
        return leaves / leaves.sum()

    def sample(self, batch, beta=0.4):
        """Stratified draw of ``batch`` transitions.

        Returns ``(batch, is_weights, indices)``; weights are
        ``(N * P(i)) ** -beta`` divided by their batch maximum.
        """
        batch = check_int(batch, "batch", minimum=1)
        n = len(self)
        if n < batch:
            raise ValueError(f"buffer holds {n} transitions, need {batch}")
        total = self.tree.total
        seg = total / batch
        masses = (np.arange(batch) + self.rng.random(batch)) * seg
        slots = np.array([self.tree.find(min(m, np.nextafter(total, 0.0))) for m in masses])
        probs = np.array([self.tree[s] for s in slots]) / total
        weights = (n * probs) ** (-beta)
        weights /= weights.max()
        # translate slots to insertion serials so evictions can be detected later
        newest = self._store.n_pushed - 1
        serials = newest - ((newest - slots) % self.capacity)
        return self._store.gather(slots), weights, serials

    def update_priorities(self, indices, td_errors):
        td_errors = np.asarray(td_errors, dtype=np.float64).ravel()
        for serial, err in zip(np.asarray(indices).ravel(), td_errors):
            slot = self._store.slot_of(int(serial))
            if slot is None:
                self.stale_updates += 1
                continue
            if not np.isfinite(err):
                raise ValueError("td_error must be finite")
            p = abs(float(err)) + self.eps
            self._set(slot, p)

    def stored_serials(self):
        return self._store.oldest_first()
