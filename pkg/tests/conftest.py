from pathlib import Path

from irvcm.core import Profile

DATA = Path(__file__).parent / "data"

P1 = Profile(3, {(1, 2, 3): 4, (2, 3, 1): 3, (3, 2, 1): 2})
P2 = Profile(3, {(1, 2, 3): 3, (2, 3, 1): 1, (3, 1, 2): 1})
P4 = Profile(3, {(1, 2, 3): 2, (2, 3, 1): 4, (3, 2, 1): 4})
P5 = Profile(3, {(1, 2, 3): 2, (3, 2, 1): 2, (2, 3, 1): 1})

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
