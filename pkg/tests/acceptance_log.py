"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS = []


def record(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    RESULTS.append((number, line))
    print(line)
    return line
