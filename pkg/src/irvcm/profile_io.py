"""Reading and writing profiles.

Native format::

    m=3
    # comment
    4: 1>2>3
    3: 2>3>1

PrefLib complete strict orders (SOC) are accepted for input only.
"""

from __future__ import annotations

import re

from .core import Profile, ProfileError, check_ranking


class ParseError(ProfileError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class UnsupportedFormat(ParseError):
    pass


_HEADER = re.compile(r"^m\s*=\s*(\d+)$")
_BODY = re.compile(r"^(\d+)\s*:\s*(.+)$")


def parse_native(text: str, source: str | None = None) -> Profile:
    m = None
    counts: dict[tuple[int, ...], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if m is None:
            hm = _HEADER.match(line)
            if not hm:
                raise ParseError("expected header 'm=<int>'", lineno, source)
            m = int(hm.group(1))
            if m < 2:
                raise ParseError(f"need at least 2 candidates, got m={m}", lineno, source)
            continue
        bm = _BODY.match(line)
        if not bm:
            raise ParseError(f"expected '<count>: c1>c2>...', got {line!r}", lineno, source)
        try:
            items = [int(tok) for tok in bm.group(2).split(">")]
        except ValueError:
            raise ParseError(f"non-integer candidate in {line!r}", lineno, source) from None
        if len(items) != m:
            raise ParseError(f"ranking length {len(items)} != m={m}", lineno, source)
        try:
            r = check_ranking(items, m)
        except ProfileError as exc:
            raise ParseError(str(exc), lineno, source) from None
        k = int(bm.group(1))
        if k <= 0:
            raise ParseError("counts must be positive", lineno, source)
        counts[r] = counts.get(r, 0) + k
    if m is None:
        raise ParseError("missing header 'm=<int>'", None, source)
    if not counts:
        raise ParseError("empty profile", None, source)
    return Profile(m, counts)


def emit_native(profile: Profile) -> str:
    lines = [f"m={profile.m}"]
    for r, k in sorted(profile.items()):
        lines.append(f"{k}: {'>'.join(map(str, r))}")
    return "\n".join(lines) + "\n"


def parse_preflib_soc(text: str, source: str | None = None) -> Profile:
    """Parse a PrefLib SOC file; alternatives are renumbered 1..m in file order.

    File order is the order of ``# ALTERNATIVE NAME <id>`` metadata when present,
    otherwise ascending alternative id.
    """
    declared_m = None
    alt_ids: list[int] = []
    body: list[tuple[int, int, list[int]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            meta = line[1:].strip()
            if meta.upper().startswith("DATA TYPE"):
                dtype = meta.split(":", 1)[-1].strip().lower()
                if dtype != "soc":
                    raise UnsupportedFormat(f"data type {dtype!r} unsupported, only soc", lineno, source)
            elif meta.upper().startswith("NUMBER ALTERNATIVES"):
                declared_m = int(meta.split(":", 1)[1])
            elif meta.upper().startswith("ALTERNATIVE NAME"):
                am = re.match(r"ALTERNATIVE NAME\s+(\d+)", meta, re.IGNORECASE)
                if am:
                    alt_ids.append(int(am.group(1)))
            continue
        if "{" in line or "}" in line:
            raise UnsupportedFormat("ties unsupported", lineno, source)
        bm = _BODY.match(line)
        if not bm:
            raise ParseError(f"expected '<count>: a1,a2,...', got {line!r}", lineno, source)
        try:
            order = [int(tok) for tok in bm.group(2).split(",")]
        except ValueError:
            raise ParseError(f"non-integer alternative in {line!r}", lineno, source) from None
        body.append((lineno, int(bm.group(1)), order))
    if not body:
        raise ParseError("empty profile", None, source)
    if not alt_ids:
        alt_ids = sorted({a for _, _, order in body for a in order})
    if declared_m is not None and declared_m != len(alt_ids):
        raise ParseError(f"declared {declared_m} alternatives, found {len(alt_ids)}", None, source)
    m = len(alt_ids)
    if m < 2:
        raise ParseError("need at least 2 alternatives", None, source)
    remap = {a: i for i, a in enumerate(alt_ids, start=1)}
    counts: dict[tuple[int, ...], int] = {}
    for lineno, k, order in body:
        unknown = [a for a in order if a not in remap]
        if unknown:
            raise UnsupportedFormat(f"unknown alternative id {unknown[0]}", lineno, source)
        if len(order) != m:
            raise UnsupportedFormat(f"incomplete order ({len(order)} of {m} alternatives)", lineno, source)
        try:
            r = check_ranking([remap[a] for a in order], m)
        except ProfileError as exc:
            raise ParseError(str(exc), lineno, source) from None
        if k > 0:
            counts[r] = counts.get(r, 0) + k
    if not counts:
        raise ParseError("empty profile", None, source)
    return Profile(m, counts)


def read_profile(path: str) -> Profile:
    """Load a native or SOC file, chosen by extension (``.soc`` means PrefLib)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.lower().endswith(".soc"):
        return parse_preflib_soc(text, source=path)
    return parse_native(text, source=path)
