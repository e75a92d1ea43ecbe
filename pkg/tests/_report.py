"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def report(label: str, passed: bool, detail: str) -> bool:
    LINES.append(f"{label}: {'PASS' if passed else 'FAIL'} ({detail})")
    return passed
