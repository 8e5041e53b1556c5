"""Candidates, rankings and counted preference profiles.

Candidates are 1-based integers ``1..m``. A ranking is a tuple listing every
candidate once, best first. A :class:`Profile` stores how many voters hold each
ranking type; nothing in this package needs per-voter identities.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from types import MappingProxyType

Ranking = tuple[int, ...]


class ProfileError(ValueError):
    """A profile, ranking or candidate set is malformed."""


def check_ranking(ranking: Iterable[int], m: int) -> Ranking:
    r = tuple(int(c) for c in ranking)
    if len(r) != m:
        raise ProfileError(f"ranking length {len(r)} != m={m}: {r}")
    seen = set()
    for c in r:
        if c in seen:
            raise ProfileError(f"duplicate candidate {c} in ranking {r}")
        if not 1 <= c <= m:
            raise ProfileError(f"candidate {c} out of range 1..{m} in ranking {r}")
        seen.add(c)
    return r


class TieBreak:
    """Fixed priority order over candidates; earlier means favoured.

    IRV eliminates the priority-latest among tied minimisers; plurality
    finalists and runoffs favour the priority-earliest candidate.
    """

    __slots__ = ("priority", "_rank")

    def __init__(self, priority: Iterable[int]):
        self.priority = tuple(int(c) for c in priority)
        m = len(self.priority)
        if sorted(self.priority) != list(range(1, m + 1)):
            raise ProfileError(f"tie-break priority must be a permutation of 1..{m}")
        self._rank = {c: i for i, c in enumerate(self.priority)}

    @classmethod
    def default(cls, m: int) -> "TieBreak":
        return cls(range(1, m + 1))

    @property
    def m(self) -> int:
        return len(self.priority)

    def rank(self, c: int) -> int:
        """Position of ``c`` in the priority order (0 = most favoured)."""
        return self._rank[c]

    def prefers(self, a: int, b: int) -> bool:
        return self._rank[a] < self._rank[b]

    def __eq__(self, other):
        return isinstance(other, TieBreak) and self.priority == other.priority

    def __hash__(self):
        return hash(self.priority)

    def __repr__(self):
        return f"TieBreak({self.priority})"


class Profile:
    """Immutable counted multiset of strict rankings over ``m`` candidates."""

    __slots__ = ("m", "counts", "n")

    def __init__(self, m: int, counts: Mapping[Ranking, int]):
        self.m = m
        self.counts = MappingProxyType(dict(counts))
        self.n = sum(self.counts.values())

    def __eq__(self, other):
        return (
            isinstance(other, Profile)
            and self.m == other.m
            and dict(self.counts) == dict(other.counts)
        )

    def __hash__(self):
        return hash((self.m, frozenset(self.counts.items())))

    def __repr__(self):
        body = ", ".join(
            f"{k}:{'>'.join(map(str, r))}" for r, k in sorted(self.counts.items())
        )
        return f"Profile(m={self.m}, n={self.n}, {{{body}}})"

    def items(self):
        return self.counts.items()

    @property
    def candidates(self) -> range:
        return range(1, self.m + 1)

    def with_delta(self, delta: Mapping[Ranking, int]) -> "Profile":
        """Profile with ``delta`` added to the counts; zero entries are dropped."""
        new = dict(self.counts)
        for r, d in delta.items():
            new[r] = new.get(r, 0) + d
            if new[r] < 0:
                raise ProfileError(f"negative count for ranking {r}")
        return Profile(self.m, {r: k for r, k in new.items() if k > 0})


def validate_profile(raw: Mapping[Iterable[int], int] | Iterable[tuple[int, Iterable[int]]],
                     m: int | None = None) -> Profile:
    """Build a :class:`Profile` from raw counts, merging duplicate rankings.

    ``raw`` is either a mapping ranking -> count or an iterable of
    ``(count, ranking)`` pairs. If ``m`` is omitted it is taken from the first
    ranking.
    """
    if isinstance(raw, Mapping):
        pairs = [(k, r) for r, k in raw.items()]
    else:
        pairs = list(raw)
    if not pairs:
        raise ProfileError("empty profile")
    if m is None:
        m = len(tuple(pairs[0][1]))
    if m < 2:
        raise ProfileError(f"need at least 2 candidates, got m={m}")
    counts: dict[Ranking, int] = {}
    for k, r in pairs:
        k = int(k)
        if k < 0:
            raise ProfileError(f"negative count {k}")
        r = check_ranking(r, m)
        if k:
            counts[r] = counts.get(r, 0) + k
    if not counts:
        raise ProfileError("empty profile: zero voters")
    return Profile(m, counts)


def _check_subset(subset: Iterable[int], m: int | None = None) -> frozenset[int]:
    s = frozenset(subset)
    if not s:
        raise ProfileError("candidate subset must be nonempty")
    if m is not None and not s <= set(range(1, m + 1)):
        raise ProfileError(f"subset {sorted(s)} not within 1..{m}")
    return s


def top_of_subset(ranking: Ranking, subset: Iterable[int]) -> int:
    """Member of ``subset`` ranked highest in ``ranking``."""
    s = _check_subset(subset)
    for c in ranking:
        if c in s:
            return c
    raise ProfileError(f"subset {sorted(s)} has no member in ranking {ranking}")


def restricted_plurality_scores(profile: Profile, subset: Iterable[int]) -> dict[int, int]:
    """Plurality scores within ``subset``: voters ranking each member first among it.

    With a pair ``{c, b}`` this is the pairwise count of voters preferring c to b.
    """
    s = _check_subset(subset, profile.m)
    scores = {c: 0 for c in sorted(s)}
    for r, k in profile.items():
        for c in r:
            if c in s:
                scores[c] += k
                break
    return scores


def all_rankings(m: int) -> list[Ranking]:
    """Every ranking over ``1..m`` in lexicographic order."""
    from itertools import permutations

    return list(permutations(range(1, m + 1)))
