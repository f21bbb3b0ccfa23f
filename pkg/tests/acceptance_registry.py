"""Collects one verdict per acceptance criterion for the end-of-run summary."""

RESULTS: dict[int, tuple[bool, str]] = {}


def format_line(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def record(n: int, ok: bool, detail: str) -> bool:
    RESULTS[n] = (bool(ok), detail)
    print(format_line(n), flush=True)
    return bool(ok)
