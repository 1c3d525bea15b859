# src/services/training.py
"""Pieces shared by the MF and LightGCN training loops."""
from typing import Callable, Iterator, Optional

import numpy as np

from ..exceptions import DatasetError

# Called once per epoch with the current user embedding; returns an extra
# gradient for the user rows (the Retrain baseline's D2D term).
UserPenalty = Optional[Callable[[np.ndarray], np.ndarray]]


class PositiveIndex:
    """Membership lookup for (user, item) train pairs, used to reject sampled negatives."""

    def __init__(self, users: np.ndarray, items: np.ndarray, n_users: int, n_items: int):
        self.n_items = n_items
        self.keys = np.unique(users.astype(np.int64) * n_items + items.astype(np.int64))
        per_user = np.bincount(self.keys // n_items, minlength=n_users)
        if (per_user >= n_items).any():
            user = int(np.argmax(per_user >= n_items))
            raise DatasetError(f"user index {user} interacted with every item; no negatives to sample")

    def contains(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        query = users.astype(np.int64) * self.n_items + items
        pos = np.minimum(np.searchsorted(self.keys, query), len(self.keys) - 1)
        return self.keys[pos] == query

    def sample_negatives(self, rng: np.random.Generator, users: np.ndarray) -> np.ndarray:
        """Uniform over items the user has no train interaction with."""
        items = rng.integers(0, self.n_items, size=len(users))
        bad = self.contains(users, items)
        while bad.any():
            items[bad] = rng.integers(0, self.n_items, size=int(bad.sum()))
            bad[bad] = self.contains(users[bad], items[bad])
        return items


def iterate_batches(order: np.ndarray, batch_size: int) -> Iterator[np.ndarray]:
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]
