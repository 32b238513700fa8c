"""Landmark budgets and uniform landmark selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

DEFAULT_CAP = 5000


@dataclass(frozen=True)
class LandmarkSet:
    """Sorted sample indices acting as landmarks; slot ``p`` maps to ``indices[p]``."""

    indices: np.ndarray
    n: int

    def __post_init__(self):
        idx = self.indices
        if idx.ndim != 1 or idx.size < 1 or idx.size > self.n:
            raise ValueError(f"need 1 <= m <= n landmarks, got m={idx.size}, n={self.n}")
        if idx.min() < 0 or idx.max() >= self.n:
            raise ValueError("landmark index out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("landmark indices must be distinct")

    @property
    def m(self) -> int:
        return int(self.indices.size)

    @property
    def ratio(self) -> float:
        return self.m / self.n

    def slot_of_sample(self) -> np.ndarray:
        """Inverse map: ``out[i]`` is the slot of sample ``i`` or -1."""
        inv = np.full(self.n, -1, dtype=np.int64)
        inv[self.indices] = np.arange(self.m)
        return inv


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def default_landmark_budget(n: int, cap: Optional[int] = DEFAULT_CAP) -> int:
    """Capped-adaptive budget: 0.5n below 500, 0.7n up to 5000, then min(0.7n, cap).

    ``cap=None`` disables the cap (library behaviour).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    # integer floor: reproduces every published budget (4601 -> 3220)
    if n < 500:
        m = n // 2
    else:
        m = (7 * n) // 10
        if n >= 5000 and cap is not None:
            m = min(m, cap)
    return max(1, min(m, n))


def budget_from_ratio(n: int, ratio: float) -> int:
    if not 0 < ratio <= 1:
        raise ValueError("landmark ratio must lie in (0, 1]")
    return max(1, min(n, _round_half_up(ratio * n)))


def sample_landmarks(n: int, m: int, seed: int = 0) -> LandmarkSet:
    """Draw ``m`` distinct indices uniformly without replacement, returned sorted."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)
    return LandmarkSet(idx, n)
