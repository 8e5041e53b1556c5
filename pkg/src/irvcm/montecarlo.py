"""Impartial Culture sampling and finite-electorate rate estimates.

Sample ``i`` of a run draws from a generator seeded by ``(seed, i)``, so an
estimate is the same whatever the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Profile, TieBreak
from .manipulation import (
    TIEBREAK_AWARE,
    ResourceLimit,
    decide_cm_irv,
    decide_cm_pr,
    verify_certificate,
)
from .scw import find_scw

CSV_COLUMNS = ("m", "n", "samples", "rule", "quantity", "value", "half_width_95", "seed")
MAX_M = 12


@dataclass(frozen=True)
class RateEstimate:
    m: int
    n: int
    samples: int
    rule: str
    quantity: str
    value: float
    half_width_95: float
    seed: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


class SampleError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        self.index = index
        super().__init__(f"sample {index}: {cause}")


def sample_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def unrank_permutation(index: int, m: int) -> tuple[int, ...]:
    """Lexicographic permutation of ``1..m`` with the given rank."""
    pool = list(range(1, m + 1))
    out = []
    for i in range(m, 0, -1):
        f = math.factorial(i - 1)
        q, index = divmod(index, f)
        out.append(pool.pop(q))
    return tuple(out)


def sample_ic(m: int, n: int, rng: np.random.Generator) -> Profile:
    """Profile of ``n`` independent uniform rankings over ``m`` candidates."""
    if m < 2 or n < 1:
        raise ValueError(f"need m >= 2 and n >= 1, got m={m}, n={n}")
    if m > MAX_M:
        raise ValueError(f"m={m} exceeds supported maximum {MAX_M}")
    draws = rng.integers(0, math.factorial(m), size=n)
    idx, cnt = np.unique(draws, return_counts=True)
    return Profile(m, {unrank_permutation(int(i), m): int(k) for i, k in zip(idx, cnt)})


def half_width(value: float, samples: int) -> float:
    return 1.96 * math.sqrt(value * (1.0 - value) / samples)


def _cm_chunk(args):
    m, n, rule, priority, mode, seed, start, stop, verify = args
    t = TieBreak(priority) if priority else TieBreak.default(m)
    out = []
    for i in range(start, stop):
        profile = sample_ic(m, n, sample_stream(seed, i))
        try:
            if rule == "irv":
                verdict = decide_cm_irv(profile, t, mode)
            else:
                verdict = decide_cm_pr(profile, t, mode)
        except ResourceLimit as exc:
            raise SampleError(i, exc) from exc
        ok = True
        if verify and verdict.manipulable:
            ok = verify_certificate(profile, verdict.certificate, t)
        has_scw = verdict.decision_path == "SCW-shortcut" if rule == "irv" else None
        out.append((verdict.manipulable, verdict.decision_path, ok, has_scw))
    return out


def _scw_chunk(args):
    m, n, seed, start, stop = args
    return [find_scw(sample_ic(m, n, sample_stream(seed, i))) is not None for i in range(start, stop)]


def _map_chunks(fn, make_args, samples: int, workers: int, chunk: int | None = None):
    if chunk is None:
        chunk = max(1, min(2000, -(-samples // max(1, 4 * workers))))
    bounds = [(s, min(s + chunk, samples)) for s in range(0, samples, chunk)]
    jobs = [make_args(s, e) for s, e in bounds]
    if workers <= 1:
        parts = [fn(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(fn, jobs))
    return [x for part in parts for x in part]


def estimate_cm_rate(m: int, n: int, samples: int, rule: str = "irv",
                     tiebreak: TieBreak | None = None, mode: str = TIEBREAK_AWARE,
                     seed: int = 0, workers: int = 1, verify: bool = False) -> RateEstimate:
    """Fraction of IC profiles that are coalitionally manipulable.

    Diagnostics record how each verdict was reached, how often "no SCW" and
    "manipulable" disagree (IRV only) and, with ``verify``, how many
    certificates failed replay.
    """
    rule = rule.lower()
    if rule not in ("irv", "pr"):
        raise ValueError(f"unknown rule {rule!r}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    priority = tiebreak.priority if tiebreak else None
    results = _map_chunks(
        _cm_chunk,
        lambda s, e: (m, n, rule, priority, mode, seed, s, e, verify),
        samples, workers)
    hits = sum(1 for r in results if r[0])
    paths: dict[str, int] = {}
    for r in results:
        paths[r[1]] = paths.get(r[1], 0) + 1
    diag = {
        "decision_paths": dict(sorted(paths.items())),
        "mode": mode,
        "tiebreak": list(priority) if priority else list(range(1, m + 1)),
    }
    if rule == "irv":
        no_scw = sum(1 for r in results if not r[3])
        # SCW present implies immune, so disagreement is "no SCW and immune"
        diag["no_scw"] = no_scw
        diag["disagreements"] = sum(1 for r in results if not r[3] and not r[0])
    if verify:
        diag["certificates_checked"] = hits
        diag["certificate_failures"] = sum(1 for r in results if r[0] and not r[2])
    value = hits / samples
    return RateEstimate(m, n, samples, rule, "cm-rate", value, half_width(value, samples), seed, diag)


def estimate_scw_rate(m: int, n: int, samples: int, seed: int = 0, workers: int = 1) -> RateEstimate:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    results = _map_chunks(_scw_chunk, lambda s, e: (m, n, seed, s, e), samples, workers)
    value = sum(results) / samples
    return RateEstimate(m, n, samples, "irv", "scw-rate", value, half_width(value, samples), seed)


def to_csv(estimates) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for est in estimates:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in est.row().items()})
    return buf.getvalue()


def to_json(estimates) -> str:
    return json.dumps([asdict(e) for e in estimates], indent=2, sort_keys=True) + "\n"
