"""Command-line interface.

Every file written with ``-o`` gets a ``<file>.manifest.json`` next to it that
records the exact argument vector, so ``irvcm <argv...>`` reproduces the file.
``IRVCM_SEED`` and ``IRVCM_WORKERS`` override the default seed and worker count.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .asymptotics import ConvergenceError, limit_irv_cm
from .core import ProfileError, TieBreak
from .manipulation import (
    MODES,
    TIEBREAK_AWARE,
    ResourceLimit,
    brute_force_cm,
    decide_cm_irv,
    decide_cm_pr,
)
from .montecarlo import SampleError, estimate_cm_rate, estimate_scw_rate, sample_ic, sample_stream
from .montecarlo import to_csv as rates_to_csv
from .montecarlo import to_json as rates_to_json
from .profile_io import emit_native, read_profile
from .rules import irv_trace, pr_winner
from .scw import analyze_scw, find_scw

LIMIT_COLUMNS = ("m", "p_scw", "p_irv_cm", "std_error", "replicates", "points_per_replicate", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"environment variable {name} must be an integer, got {raw!r}") from None


def _tiebreak(text: str | None, m: int) -> TieBreak:
    if not text:
        return TieBreak.default(m)
    t = TieBreak(int(x) for x in text.split(","))
    if t.m != m:
        raise ProfileError(f"tie-break {text!r} does not cover candidates 1..{m}")
    return t


def _candidate_key(d: dict) -> dict:
    return {str(k): v for k, v in sorted(d.items())}


def _subset(s) -> list[int]:
    return sorted(s)


# --- subcommands -------------------------------------------------------------

def cmd_limits(args):
    results = []
    for m in range(args.m_min, args.m_max + 1):
        res = limit_irv_cm(m, args.target_se, args.seed, workers=args.workers)
        results.append(res)
    rows = [{
        "m": r.m,
        "p_scw": r.p_scw.value,
        "p_irv_cm": r.p_irv_cm.value,
        "std_error": r.p_irv_cm.std_error,
        "replicates": r.p_irv_cm.replicates,
        "points_per_replicate": r.p_irv_cm.points_per_replicate,
        "seed": r.p_irv_cm.seed,
    } for r in results]
    if args.output:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=LIMIT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return {args.output: buf.getvalue()}
    return json.dumps(rows, indent=2) + "\n"


def _rate_outputs(args, estimates):
    if args.output:
        out = Path(args.output)
        return {
            str(out): rates_to_csv(estimates),
            str(out.with_suffix(".json")): rates_to_json(estimates),
        }
    return rates_to_json(estimates)


def cmd_mc(args):
    t = _tiebreak(args.tiebreak, args.m)
    estimates = [
        estimate_cm_rate(args.m, n, args.samples, args.rule, t, args.mode, args.seed,
                         args.workers, verify=args.verify)
        for n in args.n
    ]
    return _rate_outputs(args, estimates)


def cmd_scw_rate(args):
    estimates = [estimate_scw_rate(args.m, n, args.samples, args.seed, args.workers) for n in args.n]
    return _rate_outputs(args, estimates)


def cmd_decide(args):
    profile = read_profile(args.profile)
    t = _tiebreak(args.tiebreak, profile.m)
    if args.brute_force:
        verdict = brute_force_cm(profile, args.rule, t)
    elif args.rule == "irv":
        verdict = decide_cm_irv(profile, t, args.mode)
    else:
        verdict = decide_cm_pr(profile, t, args.mode)
    doc = {"rule": args.rule, "mode": args.mode, "tiebreak": list(t.priority), **verdict.to_json()}
    return _json_out(args, doc)


def analyze_profile(profile, t: TieBreak, mode: str = TIEBREAK_AWARE) -> dict:
    trace = irv_trace(profile, t)
    runoff = pr_winner(profile, t)
    scw = find_scw(profile)
    reports = {}
    for c in profile.candidates:
        rep = analyze_scw(profile, c)
        reports[str(c)] = {
            "is_scw": rep.is_scw,
            "violating_subsets": [_subset(s) for s in rep.violating_subsets],
            "strong_subsets": [_subset(s) for s in rep.strong_subsets],
        }
    return {
        "m": profile.m,
        "n": profile.n,
        "tiebreak": list(t.priority),
        "irv": {
            "winner": trace.winner,
            "rounds": [
                {"remaining": _subset(rd.remaining), "scores": _candidate_key(rd.scores),
                 "eliminated": rd.eliminated}
                for rd in trace.rounds
            ],
        },
        "pr": {
            "winner": runoff.winner,
            "finalists": list(runoff.finalists),
            "first_round": _candidate_key(runoff.first_round),
            "runoff": _candidate_key(runoff.runoff_counts),
        },
        "scw": scw,
        "violations": reports,
        "cm": {
            "irv": decide_cm_irv(profile, t, mode).to_json(),
            "pr": decide_cm_pr(profile, t, mode).to_json(),
        },
    }


def cmd_analyze(args):
    profile = read_profile(args.profile)
    t = _tiebreak(args.tiebreak, profile.m)
    return _json_out(args, analyze_profile(profile, t, args.mode))


def cmd_sample(args):
    profile = sample_ic(args.m, args.n, sample_stream(args.seed, args.index))
    text = emit_native(profile)
    return {args.output: text} if args.output else text


def cmd_convert(args):
    text = emit_native(read_profile(args.input))
    return {args.output: text} if args.output else text


def _json_out(args, doc):
    text = json.dumps(doc, indent=2) + "\n"
    return {args.output: text} if getattr(args, "output", None) else text


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    seed = _env_int("IRVCM_SEED", 0)
    workers = _env_int("IRVCM_WORKERS", 1)
    p = _Parser(prog="irvcm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, with_seed=True, with_workers=True):
        if with_seed:
            sp.add_argument("--seed", type=int, default=seed)
        if with_workers:
            sp.add_argument("--workers", type=int, default=workers)
        sp.add_argument("-o", "--output")

    sp = sub.add_parser("limits", help="limiting IRV manipulability rate per m")
    sp.add_argument("--m-min", type=int, default=2)
    sp.add_argument("--m-max", type=int, default=8)
    sp.add_argument("--target-se", type=float, default=5e-4)
    common(sp)
    sp.set_defaults(func=cmd_limits)

    sp = sub.add_parser("mc", help="Monte Carlo manipulability rate under Impartial Culture")
    sp.add_argument("--rule", choices=("irv", "pr"), default="irv")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--n", type=int, nargs="+", required=True)
    sp.add_argument("--samples", type=int, default=100000)
    sp.add_argument("--mode", choices=MODES, default=TIEBREAK_AWARE)
    sp.add_argument("--tiebreak", help="priority permutation, e.g. 3,1,2")
    sp.add_argument("--verify", action="store_true", help="replay every certificate")
    common(sp)
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("scw-rate", help="Monte Carlo frequency of a Super Condorcet Winner")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--n", type=int, nargs="+", required=True)
    sp.add_argument("--samples", type=int, default=100000)
    common(sp)
    sp.set_defaults(func=cmd_scw_rate)

    sp = sub.add_parser("decide", help="decide manipulability of one profile")
    sp.add_argument("--rule", choices=("irv", "pr"), default="irv")
    sp.add_argument("--profile", required=True)
    sp.add_argument("--mode", choices=MODES, default=TIEBREAK_AWARE)
    sp.add_argument("--tiebreak")
    sp.add_argument("--brute-force", action="store_true")
    common(sp, with_seed=False, with_workers=False)
    sp.set_defaults(func=cmd_decide)

    sp = sub.add_parser("analyze", help="full report for one profile")
    sp.add_argument("profile")
    sp.add_argument("--mode", choices=MODES, default=TIEBREAK_AWARE)
    sp.add_argument("--tiebreak")
    common(sp, with_seed=False, with_workers=False)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sample", help="draw one Impartial Culture profile")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--index", type=int, default=0, help="sample index within the seed's stream")
    common(sp, with_workers=False)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("convert", help="convert a SOC or native file to canonical native form")
    sp.add_argument("input")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_convert)
    return p


def _write_outputs(files: dict, argv: list[str], args, started: float) -> None:
    for path, text in files.items():
        data = text.encode("utf-8")
        Path(path).write_bytes(data)
    primary = args.output
    digest = {p: hashlib.sha256(t.encode("utf-8")).hexdigest() for p, t in files.items()}
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "parameters": params,
        "seed": params.get("seed"),
        "version": __version__,
        "duration_s": round(time.perf_counter() - started, 3),
        "outputs": digest,
        "output_digest": digest[primary],
    }
    Path(primary + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        result = args.func(args)
    except (ResourceLimit, ConvergenceError, SampleError, MemoryError) as exc:
        print(f"irvcm: {exc}", file=sys.stderr)
        return 2
    except (ProfileError, ValueError, OSError) as exc:
        print(f"irvcm: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, dict):
        _write_outputs(result, argv, args, started)
    else:
        sys.stdout.write(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
