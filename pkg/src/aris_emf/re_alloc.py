"""Greedy per-slot assignment of resource elements to users.

Every user is seeded with one resource element, then surplus elements are
granted one at a time to the user whose ranking metric is currently largest.
The metric scales the rate burden a user would carry per owned element by
how weak its reflected path is, so far users with high targets accumulate
more elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exposure import InfeasibleError


@dataclass(frozen=True)
class AllocationMatrix:
    """Binary user-by-element ownership for one slot."""

    delta: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim != 2:
            raise ValueError(f"allocation must be 2-D, got shape {delta.shape}")
        if not np.all((delta == 0.0) | (delta == 1.0)):
            raise ValueError("allocation entries must be 0 or 1")
        if np.any(delta.sum(axis=0) > 1):
            raise ValueError("a resource element is assigned to more than one user")
        users, res = delta.shape
        if res >= users and np.any(delta.sum(axis=1) < 1):
            raise ValueError("a user holds no resource element")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)

    @property
    def counts(self):
        """Resource elements held by each user."""
        return self.delta.sum(axis=1).astype(int)


def ranking_metric(r_u, d_ur, d_rb, kappa1, kappa2, w):
    """(2**(r_u/w) - 1) * d_ur**kappa1 * d_rb**kappa2, elementwise."""
    r_u = np.asarray(r_u, dtype=float)
    return (2.0 ** (r_u / w) - 1.0) * np.asarray(d_ur, dtype=float) ** kappa1 \
        * np.asarray(d_rb, dtype=float) ** kappa2


def allocate(rates, d_ur, d_rb, kappa1, kappa2, w, num_res):
    """Greedy allocation of num_res elements among len(rates) users.

    rates: per-user total rate burden (bit/s) driving the metric; d_ur:
    per-user distance to the reflecting surface at this slot; d_rb: surface
    to base-station distance.  Ties go to the lowest user index.
    """
    rates = np.asarray(rates, dtype=float)
    d_ur = np.asarray(d_ur, dtype=float)
    users = rates.size
    if num_res < users:
        raise InfeasibleError(
            f"{num_res} resource elements cannot seed {users} users")
    if d_ur.shape != (users,):
        raise ValueError("one surface distance needed per user")
    if np.any(d_ur <= 0) or d_rb <= 0:
        raise ValueError("distances must be positive")

    delta = np.zeros((users, num_res))
    counts = np.ones(users)
    for u in range(users):
        delta[u, u] = 1.0
    for n in range(users, num_res):
        metric = ranking_metric(rates / counts, d_ur, d_rb, kappa1, kappa2, w)
        winner = int(np.argmax(metric))
        delta[winner, n] = 1.0
        counts[winner] += 1.0
    return AllocationMatrix(delta)
