"""Instant-Runoff Voting and Plurality with Runoff."""

from __future__ import annotations

from dataclasses import dataclass

from .core import Profile, TieBreak, restricted_plurality_scores


@dataclass(frozen=True)
class Round:
    remaining: frozenset[int]
    scores: dict[int, int]
    eliminated: int


@dataclass(frozen=True)
class EliminationTrace:
    rounds: tuple[Round, ...]
    winner: int

    @property
    def order(self) -> tuple[int, ...]:
        return tuple(rd.eliminated for rd in self.rounds)

    @property
    def visited(self) -> tuple[frozenset[int], ...]:
        return tuple(rd.remaining for rd in self.rounds)


@dataclass(frozen=True)
class RunoffResult:
    finalists: tuple[int, int]
    first_round: dict[int, int]
    runoff_counts: dict[int, int]
    winner: int


def _tiebreak(profile: Profile, tiebreak: TieBreak | None) -> TieBreak:
    if tiebreak is None:
        return TieBreak.default(profile.m)
    if tiebreak.m != profile.m:
        raise ValueError(f"tie-break over {tiebreak.m} candidates, profile has {profile.m}")
    return tiebreak


def irv_loser(scores: dict[int, int], tiebreak: TieBreak) -> int:
    """Lowest scorer; among ties the priority-latest candidate."""
    return min(scores, key=lambda c: (scores[c], -tiebreak.rank(c)))


def irv_trace(profile: Profile, tiebreak: TieBreak | None = None) -> EliminationTrace:
    t = _tiebreak(profile, tiebreak)
    remaining = frozenset(profile.candidates)
    rounds = []
    while len(remaining) > 1:
        scores = restricted_plurality_scores(profile, remaining)
        loser = irv_loser(scores, t)
        rounds.append(Round(remaining, scores, loser))
        remaining = remaining - {loser}
    (winner,) = remaining
    return EliminationTrace(tuple(rounds), winner)


def irv_winner(profile: Profile, tiebreak: TieBreak | None = None) -> int:
    return irv_trace(profile, tiebreak).winner


def pr_winner(profile: Profile, tiebreak: TieBreak | None = None) -> RunoffResult:
    t = _tiebreak(profile, tiebreak)
    first = restricted_plurality_scores(profile, profile.candidates)
    ordered = sorted(first, key=lambda c: (-first[c], t.rank(c)))
    a, b = ordered[0], ordered[1]
    runoff = restricted_plurality_scores(profile, (a, b))
    if runoff[a] != runoff[b]:
        winner = a if runoff[a] > runoff[b] else b
    else:
        winner = a if t.prefers(a, b) else b
    return RunoffResult((a, b), first, runoff, winner)


def winner(profile: Profile, rule: str, tiebreak: TieBreak | None = None) -> int:
    rule = rule.lower()
    if rule == "irv":
        return irv_trace(profile, tiebreak).winner
    if rule == "pr":
        return pr_winner(profile, tiebreak).winner
    raise ValueError(f"unknown rule {rule!r}")
