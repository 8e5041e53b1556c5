"""Coalitional manipulation of IRV and Plurality with Runoff.

For a target ``w`` different from the sincere winner ``c`` the coalition is
every voter ranking ``w`` above ``c``; everybody else votes sincerely. Taking
the largest coalition loses nothing, since a member may keep their sincere
ballot.

IRV exact search
----------------
Fix an elimination order. A manipulator's ballot counts for one survivor at a
time and moves on only when that survivor is eliminated, so the state of a
round is how many manipulators are *committed* to each survivor plus a free
*pool*. Processing rounds in order, the eliminee keeps only its existing
commitments, every other survivor takes from the pool exactly its deficit,
and the eliminee's commitments return to the pool afterwards. Uncommitted
votes are scored on ``w``; when they are committed later to ``x`` they are read
as having sat on ``x`` from the moment they became free, which only raises a
survivor's score and never drops ``w`` below what it was promised. These
minimal commitments are a lower bound for any feasible allocation along the
same order, so the greedy is exact per order, and a depth-first search over
orders decides manipulability. States over the same survivor set whose
commitments dominate a failed state are pruned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations
from math import comb, floor
from typing import Mapping

from .core import Profile, ProfileError, Ranking, TieBreak, restricted_plurality_scores
from .rules import irv_trace, pr_winner
from .scw import analyze_scw, balanced_split, find_scw

STRICT = "strict"
TIEBREAK_AWARE = "tiebreak-aware"
MODES = (STRICT, TIEBREAK_AWARE)

BRUTE_FORCE_LIMIT = 10**7


class ResourceLimit(RuntimeError):
    """A computation would exceed its configured size bound."""


@dataclass(frozen=True)
class ManipulationCertificate:
    rule: str
    sincere_winner: int
    target_winner: int
    delta: Mapping[Ranking, int]
    coalition_size: int

    def target_profile(self, profile: Profile) -> Profile:
        return profile.with_delta(self.delta)

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "sincere_winner": self.sincere_winner,
            "target_winner": self.target_winner,
            "coalition_size": self.coalition_size,
            "delta": [
                {"ranking": list(r), "change": d} for r, d in sorted(self.delta.items())
            ],
        }


@dataclass(frozen=True)
class CmVerdict:
    manipulable: bool
    certificate: ManipulationCertificate | None = None
    decision_path: str = "exact-search"

    def to_json(self) -> dict:
        return {
            "manipulable": self.manipulable,
            "decision_path": self.decision_path,
            "certificate": self.certificate.to_json() if self.certificate else None,
        }


@dataclass(frozen=True)
class EliminationPlan:
    target: int
    order: tuple[int, ...]
    # per round: manipulators newly committed to each survivor
    allocations: tuple[dict[int, int], ...]
    # manipulator ballot prefixes with multiplicities
    chains: tuple[tuple[tuple[int, ...], int], ...] = field(default=())


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def _tb(profile: Profile, tiebreak: TieBreak | None) -> TieBreak:
    return TieBreak.default(profile.m) if tiebreak is None else tiebreak


def _margin(x: int, e: int, tiebreak: TieBreak, mode: str) -> int:
    """Extra score ``x`` needs over ``e`` so that ``e`` is the one eliminated."""
    if mode == STRICT:
        return 1
    return 1 if tiebreak.rank(x) > tiebreak.rank(e) else 0


def _coalition(profile: Profile, c: int, w: int):
    fixed, manip = [], []
    for r, k in profile.items():
        (manip if r.index(w) < r.index(c) else fixed).append((r, k))
    return fixed, manip


def _ballot(prefix: tuple[int, ...], sincere: Ranking) -> Ranking:
    head = set(prefix)
    return tuple(prefix) + tuple(x for x in sincere if x not in head)


def _assign_ballots(groups, manip) -> dict[Ranking, int]:
    """Pair ballot prefixes (with counts) to coalition voters; return delta."""
    delta: dict[Ranking, int] = {}
    voters = [[r, k] for r, k in sorted(manip)]
    vi = 0
    for prefix, cnt in groups:
        while cnt:
            r, avail = voters[vi]
            take = min(avail, cnt)
            new = _ballot(prefix, r)
            if new != r:
                delta[r] = delta.get(r, 0) - take
                delta[new] = delta.get(new, 0) + take
            cnt -= take
            voters[vi][1] -= take
            if voters[vi][1] == 0:
                vi += 1
    return {r: d for r, d in delta.items() if d}


class _Search:
    """Depth-first search over elimination orders for one target."""

    def __init__(self, fixed, k: int, m: int, w: int, tiebreak: TieBreak, mode: str):
        self.fixed = fixed
        self.k = k
        self.m = m
        self.w = w
        self.mode = mode
        self.tb = tiebreak
        self._scores: dict[frozenset, dict[int, int]] = {}
        self._failed: dict[frozenset, list[tuple[int, ...]]] = {}
        cands = range(1, m + 1)
        self.margin = {(x, e): _margin(x, e, tiebreak, mode) for x in cands for e in cands}

    def scores(self, alive: frozenset) -> dict[int, int]:
        sc = self._scores.get(alive)
        if sc is None:
            sc = dict.fromkeys(alive, 0)
            for r, cnt in self.fixed:
                for x in r:
                    if x in alive:
                        sc[x] += cnt
                        break
            self._scores[alive] = sc
        return sc

    def step(self, alive, committed, pool, e):
        """Commitments after eliminating ``e`` from ``alive``, or None if infeasible."""
        sc = self.scores(alive)
        w = self.w
        thr = sc[e] + committed.get(e, 0)
        new = dict(committed)
        need = 0
        for x in alive:
            if x == e or x == w:
                continue
            d = thr + self.margin[x, e] - sc[x] - committed.get(x, 0)
            if d > 0:
                new[x] = committed.get(x, 0) + d
                need += d
                if need > pool:
                    return None
        # w is scored with the whole pool; it commits only what it needs
        dw = thr + self.margin[w, e] - sc[w] - committed.get(w, 0)
        if dw > 0:
            if need + dw > pool:
                return None
            need += dw
            new[w] = committed.get(w, 0) + dw
        pool -= need
        pool += new.pop(e, 0)
        return new, pool

    def _dominated(self, alive, vec) -> bool:
        for old in self._failed.get(alive, ()):
            if all(a >= b for a, b in zip(vec, old)):
                return True
        return False

    def run(self) -> tuple[int, ...] | None:
        start = frozenset(range(1, self.m + 1))
        return self._dfs(start, {}, self.k)

    def _dfs(self, alive, committed, pool):
        if len(alive) == 1:
            return ()
        key = tuple(committed.get(x, 0) for x in sorted(alive))
        if self._dominated(alive, key):
            return None
        sc = self.scores(alive)
        cand = [x for x in alive if x != self.w]
        cand.sort(key=lambda x: (sc[x] + committed.get(x, 0), -self.tb.rank(x)))
        for e in cand:
            res = self.step(alive, committed, pool, e)
            if res is None:
                continue
            sub = self._dfs(alive - {e}, res[0], res[1])
            if sub is not None:
                return (e,) + sub
        self._failed.setdefault(alive, []).append(key)
        return None

    def plan(self, order: tuple[int, ...]) -> EliminationPlan:
        """Replay ``order`` and materialise manipulator ballot prefixes."""
        alive = frozenset(range(1, self.m + 1))
        committed: dict[int, int] = {}
        pool = self.k
        # token groups: [prefix tuple, count]; pool groups are uncommitted
        free: list[list] = [[(), self.k]] if self.k else []
        held: dict[int, list[list]] = {}
        allocations = []
        for e in order:
            res = self.step(alive, committed, pool, e)
            if res is None:
                raise AssertionError(f"plan order {order} infeasible at {e}")
            new, pool = res
            alloc = {}
            for x in sorted(alive):
                if x == e:
                    continue
                d = new.get(x, 0) - committed.get(x, 0)
                if d <= 0:
                    continue
                alloc[x] = d
                while d:
                    grp = free[-1]
                    take = min(grp[1], d)
                    held.setdefault(x, []).append([grp[0] + (x,), take])
                    grp[1] -= take
                    d -= take
                    if grp[1] == 0:
                        free.pop()
            allocations.append(alloc)
            free = held.pop(e, []) + free
            committed = new
            alive = alive - {e}
        groups = []
        for grp in free + [g for gs in held.values() for g in gs]:
            if grp[1]:
                prefix = grp[0] if grp[0] and grp[0][-1] == self.w else grp[0] + (self.w,)
                groups.append((prefix, grp[1]))
        return EliminationPlan(self.w, tuple(order), tuple(allocations), tuple(groups))


def feasible_elimination_search(profile: Profile, w: int, tiebreak: TieBreak | None = None,
                                mode: str = TIEBREAK_AWARE,
                                sincere_winner: int | None = None) -> EliminationPlan | None:
    """Elimination plan making ``w`` the IRV winner, or None when none exists."""
    _check_mode(mode)
    t = _tb(profile, tiebreak)
    c = irv_trace(profile, t).winner if sincere_winner is None else sincere_winner
    if w == c:
        raise ValueError(f"target {w} is already the sincere winner")
    fixed, manip = _coalition(profile, c, w)
    search = _Search(fixed, sum(k for _, k in manip), profile.m, w, t, mode)
    order = search.run()
    if order is None:
        return None
    return search.plan(order)


def _plan_certificate(profile: Profile, plan: EliminationPlan, c: int) -> ManipulationCertificate:
    _, manip = _coalition(profile, c, plan.target)
    delta = _assign_ballots(plan.chains, manip)
    return ManipulationCertificate("irv", c, plan.target, delta, sum(d for d in delta.values() if d > 0))


def _trace_is_strict(trace) -> bool:
    for rd in trace.rounds:
        low = rd.scores[rd.eliminated]
        if sum(1 for v in rd.scores.values() if v == low) > 1:
            return False
    return True


def construct_lemma2(profile: Profile, tiebreak: TieBreak | None = None,
                     mode: str = TIEBREAK_AWARE) -> ManipulationCertificate | None:
    """Two-stage construction when the IRV winner strongly violates the SCW condition.

    Stage one moves the fewest voters from ``(a_1..a_k, b_1..b_l, c)`` to
    ``(b_1..b_l, a_1..a_k, c)`` so that the candidates outside the subset go
    first; stage two permutes only opponents inside the subset, on ballots that
    open with ``a_1..a_k`` and end with ``c``, until every opponent has its
    balanced-split target and ``c`` falls next. Every manipulator ranks ``c``
    last. The result is replayed before being returned.
    """
    _check_mode(mode)
    t = _tb(profile, tiebreak)
    n = profile.n
    c = irv_trace(profile, t).winner
    report = analyze_scw(profile, c)
    if not report.strong_subsets:
        return None
    first = restricted_plurality_scores(profile, profile.candidates)
    counts = profile.counts
    for subset in report.strong_subsets:
        B = sorted(subset - {c})
        A = sorted(set(profile.candidates) - subset, key=lambda x: (first[x], x))
        k, ell = len(A), len(B)
        r1 = tuple(A) + tuple(B) + (c,)
        # stage one: moved voters leave a_j for b_1 in every early round
        tau = 0
        for j in range(k):
            sj = restricted_plurality_scores(profile, A[j:] + B + [c])
            aj = sj[A[j]]
            for x, sx in sj.items():
                if x == A[j]:
                    continue
                if x == B[0]:
                    need = -(-(aj + 1 - sx) // 2)
                else:
                    need = aj + 1 - sx
                tau = max(tau, need)
        if tau > counts.get(r1, 0):
            continue
        delta: dict[Ranking, int] = {}
        if tau:
            moved = tuple(B) + tuple(A) + (c,)
            delta[r1] = -tau
            delta[moved] = tau
        # stage two: rebalance scores within S
        s_scores = restricted_plurality_scores(profile, subset)
        p = s_scores[c]
        q = balanced_split(n, p, ell).q
        by_score = sorted(B, key=lambda b: (-s_scores[b], b))
        target = dict(zip(by_score, sorted(q, reverse=True)))
        excess = {b: s_scores[b] - target[b] for b in B if s_scores[b] > target[b]}
        deficit = {b: target[b] - s_scores[b] for b in B if s_scores[b] < target[b]}
        prefix = tuple(A)
        donors: dict[int, list] = {b: [] for b in excess}
        for r, cnt in sorted(counts.items()):
            if r[:k] == prefix and r[-1] == c and r[k] in donors:
                avail = cnt - (tau if r == r1 else 0)
                if avail > 0:
                    donors[r[k]].append([r, avail])
        feasible = all(sum(a for _, a in donors[b]) >= excess[b] for b in excess)
        if not feasible:
            continue
        supply = []
        for b in sorted(excess):
            need = excess[b]
            for item in donors[b]:
                if not need:
                    break
                take = min(item[1], need)
                supply.append((item[0], take))
                need -= take
        for bi in sorted(deficit):
            need = deficit[bi]
            while need:
                r, avail = supply.pop()
                take = min(avail, need)
                lst = list(r)
                pi = lst.index(bi)
                lst[k], lst[pi] = lst[pi], lst[k]
                new = tuple(lst)
                delta[r] = delta.get(r, 0) - take
                delta[new] = delta.get(new, 0) + take
                need -= take
                if avail > take:
                    supply.append((r, avail - take))
        delta = {r: d for r, d in delta.items() if d}
        if not delta:
            continue
        try:
            after = profile.with_delta(delta)
        except ProfileError:
            continue
        trace = irv_trace(after, t)
        if trace.winner == c:
            continue
        if mode == STRICT and not _trace_is_strict(trace):
            continue
        cert = ManipulationCertificate(
            "irv", c, trace.winner, delta, sum(d for d in delta.values() if d > 0)
        )
        if verify_certificate(profile, cert, t):
            return cert
    return None


def _irv_targets(profile: Profile, c: int) -> list[int]:
    """Targets ordered by decreasing coalition size, then index."""
    pair = {}
    for w in profile.candidates:
        if w != c:
            pair[w] = restricted_plurality_scores(profile, (w, c))[w]
    return sorted(pair, key=lambda w: (-pair[w], w))


def decide_cm_irv(profile: Profile, tiebreak: TieBreak | None = None,
                  mode: str = TIEBREAK_AWARE, use_lemma2: bool = True,
                  use_shortcut: bool = True) -> CmVerdict:
    """Decide IRV manipulability: SCW shortcut, then the two-stage construction,
    then exact search over elimination orders for each target.

    Disabling the shortcut and the construction leaves the exact search alone,
    which is how the shortcut itself gets checked.
    """
    _check_mode(mode)
    t = _tb(profile, tiebreak)
    if use_shortcut and find_scw(profile) is not None:
        return CmVerdict(False, None, "SCW-shortcut")
    if use_lemma2:
        cert = construct_lemma2(profile, t, mode)
        if cert is not None:
            return CmVerdict(True, cert, "lemma2")
    c = irv_trace(profile, t).winner
    for w in _irv_targets(profile, c):
        plan = feasible_elimination_search(profile, w, t, mode, sincere_winner=c)
        if plan is not None:
            return CmVerdict(True, _plan_certificate(profile, plan, c), "exact-search")
    return CmVerdict(False, None, "exact-search")


def construct_pr_manipulation(profile: Profile, a: int, b: int, alpha: float,
                              tiebreak: TieBreak | None = None) -> ManipulationCertificate:
    """Voters preferring ``a`` to the sincere winner put ``a`` (share alpha) or ``b`` first.

    The returned certificate is not checked; replay it with :func:`verify_certificate`.
    """
    m = profile.m
    if m <= 3:
        raise ValueError("alpha interval (2/3, (m-1)/m) is empty or unavailable for m <= 3")
    if not 2 / 3 < alpha < (m - 1) / m:
        raise ValueError(f"alpha must lie in (2/3, {m - 1}/{m}), got {alpha}")
    t = _tb(profile, tiebreak)
    c = pr_winner(profile, t).winner
    if len({a, b, c}) != 3:
        raise ValueError(f"a={a}, b={b} and the sincere winner {c} must be distinct")
    supporters = sorted((r, k) for r, k in profile.items() if r.index(a) < r.index(c))
    total = sum(k for _, k in supporters)
    n_a = floor(alpha * total)
    delta: dict[Ranking, int] = {}
    for r, k in supporters:
        to_a = min(k, n_a)
        n_a -= to_a
        for lead, cnt in ((a, to_a), (b, k - to_a)):
            if not cnt:
                continue
            new = _ballot((lead,), r)
            if new != r:
                delta[r] = delta.get(r, 0) - cnt
                delta[new] = delta.get(new, 0) + cnt
    delta = {r: d for r, d in delta.items() if d}
    return ManipulationCertificate("pr", c, a, delta, sum(d for d in delta.values() if d > 0))


def _pr_split(profile: Profile, c: int, w: int, x: int, t: TieBreak, mode: str):
    """Number of coalition voters putting ``x`` first, or None if (w, x) cannot work."""
    fixed, manip = _coalition(profile, c, w)
    M = sum(k for _, k in manip)
    f = dict.fromkeys(profile.candidates, 0)
    fwx = fxw = 0
    for r, k in fixed:
        f[r[0]] += k
        if r.index(w) < r.index(x):
            fwx += k
        else:
            fxw += k

    def margin(a, b):
        if mode == STRICT:
            return 1
        return 0 if t.prefers(a, b) else 1

    lo, hi = 0, M
    for y in profile.candidates:
        if y in (w, x):
            continue
        hi = min(hi, f[w] + M - f[y] - margin(w, y))
        lo = max(lo, f[y] + margin(x, y) - f[x])
    # runoff: fwx + M - t_x >= fxw + t_x + margin
    hi = min(hi, (fwx + M - fxw - margin(w, x)) // 2)
    if lo > hi:
        return None
    return lo, manip


def decide_cm_pr(profile: Profile, tiebreak: TieBreak | None = None,
                 mode: str = TIEBREAK_AWARE) -> CmVerdict:
    _check_mode(mode)
    t = _tb(profile, tiebreak)
    c = pr_winner(profile, t).winner
    for w in profile.candidates:
        if w == c:
            continue
        for x in profile.candidates:
            if x == w:
                continue
            res = _pr_split(profile, c, w, x, t, mode)
            if res is None:
                continue
            tx, manip = res
            M = sum(k for _, k in manip)
            groups = [((x,), tx), ((w,), M - tx)]
            delta = _assign_ballots([g for g in groups if g[1]], manip)
            if not delta:
                continue
            cert = ManipulationCertificate("pr", c, w, delta, sum(d for d in delta.values() if d > 0))
            return CmVerdict(True, cert, "exact-search")
    return CmVerdict(False, None, "exact-search")


def _rule_winner(profile: Profile, rule: str, t: TieBreak) -> int:
    if rule == "irv":
        return irv_trace(profile, t).winner
    if rule == "pr":
        return pr_winner(profile, t).winner
    raise ValueError(f"unknown rule {rule!r}")


def brute_force_cm(profile: Profile, rule: str, tiebreak: TieBreak | None = None,
                   limit: int = BRUTE_FORCE_LIMIT) -> CmVerdict:
    """Enumerate every ballot distribution of each target's whole coalition."""
    rule = rule.lower()
    t = _tb(profile, tiebreak)
    c = _rule_winner(profile, rule, t)
    rankings = list(permutations(profile.candidates))
    nr = len(rankings)
    plans = []
    for w in profile.candidates:
        if w == c:
            continue
        fixed, manip = _coalition(profile, c, w)
        M = sum(k for _, k in manip)
        size = comb(M + nr - 1, nr - 1)
        if size > limit:
            raise ResourceLimit(
                f"brute force for target {w} needs {size} coalition ballot distributions (limit {limit})"
            )
        plans.append((w, fixed, manip, M))
    for w, fixed, manip, M in plans:
        base = dict(fixed)
        for combo in combinations_with_replacement(range(nr), M):
            new = dict(base)
            for i in combo:
                r = rankings[i]
                new[r] = new.get(r, 0) + 1
            target = Profile(profile.m, {r: k for r, k in new.items() if k})
            if _rule_winner(target, rule, t) == w:
                delta = {}
                for r in set(new) | set(profile.counts):
                    d = new.get(r, 0) - profile.counts.get(r, 0)
                    if d:
                        delta[r] = d
                cert = ManipulationCertificate(
                    rule, c, w, delta, sum(d for d in delta.values() if d > 0)
                )
                return CmVerdict(True, cert, "brute-force")
    return CmVerdict(False, None, "brute-force")


def verify_certificate(profile: Profile, cert: ManipulationCertificate,
                       tiebreak: TieBreak | None = None) -> bool:
    t = _tb(profile, tiebreak)
    delta = {r: d for r, d in cert.delta.items() if d}
    if not delta or sum(delta.values()) != 0:
        return False
    if not 1 <= cert.target_winner <= profile.m:
        return False
    try:
        rule = cert.rule.lower()
        c = _rule_winner(profile, rule, t)
        after = profile.with_delta(delta)
    except (ProfileError, ValueError):
        return False
    w = cert.target_winner
    if w == c:
        return False
    for r, d in delta.items():
        if d < 0 and not r.index(w) < r.index(c):
            return False
    return _rule_winner(after, rule, t) == w
