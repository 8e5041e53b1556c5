"""Super Condorcet Winner analysis.

A candidate ``c`` is a Super Condorcet Winner (SCW) when, for every subset
``S`` containing ``c`` and at least one opponent, more than ``n/|S|`` voters
rank ``c`` first among ``S``. A subset where this fails is *violating*; it is
*strongly* violating when ``c``'s score is at most ``(n - |S| + 1) / |S|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Profile, ProfileError


@dataclass(frozen=True)
class ViolationReport:
    candidate: int
    violating_subsets: tuple[frozenset[int], ...]
    strong_subsets: tuple[frozenset[int], ...]
    scores: dict[frozenset[int], int]

    @property
    def is_scw(self) -> bool:
        return not self.violating_subsets


@dataclass(frozen=True)
class BalancedSplit:
    n: int
    p: int
    ell: int
    q: tuple[int, ...]


def _popcount_table(m: int) -> np.ndarray:
    masks = np.arange(1 << m)
    return np.array([bin(x).count("1") for x in masks], dtype=np.int64)


def opponent_scores(profile: Profile, c: int) -> np.ndarray:
    """``g[B]`` = voters ranking ``c`` above every member of opponent set ``B``.

    ``B`` is a bitmask over candidates (bit ``x-1`` for candidate ``x``);
    entries with ``c``'s own bit set are meaningless.
    """
    m = profile.m
    f = np.zeros(1 << m, dtype=np.int64)
    for r, k in profile.items():
        below = 0
        for x in reversed(r):
            if x == c:
                break
            below |= 1 << (x - 1)
        f[below] += k
    # superset-sum transform: g[B] = sum of f[M] over M containing B
    g = f.copy()
    for bit in range(m):
        step = 1 << bit
        view = g.reshape(-1, 2 * step)
        view[:, :step] += view[:, step:]
    return g


def _subset_order(m: int, c: int) -> list[int]:
    """Opponent masks (excluding c, nonempty), by size then lexicographic subset."""
    others = [x for x in range(1, m + 1) if x != c]
    from itertools import combinations

    out = []
    for size in range(1, m):
        for combo in combinations(others, size):
            # lexicographic on the full subset S = combo + {c}
            out.append(tuple(sorted(combo + (c,))))
    out.sort(key=lambda s: (len(s), s))
    return [sum(1 << (x - 1) for x in s if x != c) for s in out]


def _mask_to_set(mask: int, c: int) -> frozenset[int]:
    s = {c}
    x = 1
    while mask:
        if mask & 1:
            s.add(x)
        mask >>= 1
        x += 1
    return frozenset(s)


def _check_candidate(profile: Profile, c: int) -> None:
    if not 1 <= c <= profile.m:
        raise ProfileError(f"candidate {c} out of range 1..{profile.m}")


def analyze_scw(profile: Profile, c: int) -> ViolationReport:
    _check_candidate(profile, c)
    g = opponent_scores(profile, c)
    n = profile.n
    violating, strong, scores = [], [], {}
    for mask in _subset_order(profile.m, c):
        s = _mask_to_set(mask, c)
        score = int(g[mask])
        size = len(s)
        scores[s] = score
        if size * score <= n:
            violating.append(s)
            if size * score <= n - (size - 1):
                strong.append(s)
    return ViolationReport(c, tuple(violating), tuple(strong), scores)


def is_scw(profile: Profile, c: int) -> bool:
    _check_candidate(profile, c)
    g = opponent_scores(profile, c)
    sizes = _popcount_table(profile.m) + 1
    valid = np.ones(1 << profile.m, dtype=bool)
    valid[0] = False
    own = 1 << (c - 1)
    valid[np.arange(1 << profile.m) & own != 0] = False
    return bool(np.all(sizes[valid] * g[valid] > profile.n))


def find_scw(profile: Profile) -> int | None:
    """The Super Condorcet Winner, or ``None``. It is unique when it exists."""
    m, n = profile.m, profile.n
    # an SCW has a strict plurality above n/m, which at most m-1 candidates can
    for c in range(1, m + 1):
        top = sum(k for r, k in profile.items() if r[0] == c)
        if m * top <= n:
            continue
        if is_scw(profile, c):
            return c
    return None


def strong_violation(profile: Profile, c: int) -> frozenset[int] | None:
    """First strongly violating subset for ``c`` (smallest, then lexicographic)."""
    _check_candidate(profile, c)
    g = opponent_scores(profile, c)
    n = profile.n
    for mask in _subset_order(profile.m, c):
        size = bin(mask).count("1") + 1
        if size * int(g[mask]) <= n - (size - 1):
            return _mask_to_set(mask, c)
    return None


def balanced_split(n: int, p: int, ell: int) -> BalancedSplit:
    """Opponent scores ``q`` summing to ``n - p``, all above ``p``, as even as possible.

    Requires ``ell >= 1`` and ``0 <= p <= (n - ell) / (ell + 1)``.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    if p < 0 or p * (ell + 1) > n - ell:
        raise ValueError(f"need 0 <= p <= (n - ell)/(ell + 1); got n={n}, p={p}, ell={ell}")
    top = -(-(n - p) // ell)
    k = p - n + ell * top
    q = (top - 1,) * k + (top,) * (ell - k)
    return BalancedSplit(n, p, ell, q)


def split_satisfies_bounds(split: BalancedSplit) -> bool:
    """Sum, lower bound and the upper bound ``q < p + 2(n/(ell+1) - p) + 1``."""
    n, p, ell, q = split.n, split.p, split.ell, split.q
    if len(q) != ell or sum(q) + p != n or min(q) <= p:
        return False
    # q_j < p + 2(n/(ell+1) - p) + 1, cleared of the fraction
    return all((q_j - p - 1) * (ell + 1) < 2 * (n - p * (ell + 1)) for q_j in q)

