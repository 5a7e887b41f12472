"""Shared pytest hooks: one summary line per acceptance criterion."""

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str = "", part: str | None = None):
    """Store the outcome of (a part of) an acceptance criterion."""
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    status = "PASS" if passed else "FAIL"
    label = f"criterion {criterion}" + (f" [{part}]" if part else "")
    print(f"{label}: {status} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for part, passed, detail in parts:
            tag = f"[{part}] " if part else ""
            tr.write_line(f"    {tag}{'pass' if passed else 'fail'}: {detail}")
