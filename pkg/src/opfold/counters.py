"""Instrumentation counters for search-budget assertions.

The screening loops increment named counters so tests can assert how many
model extractions a fit actually performed (e.g. bank size x CV folds for
the folded path versus one fit per grid cell for an explicit emulation).
"""

from collections import Counter

_COUNTS: Counter = Counter()


def increment(name: str, by: int = 1) -> None:
    _COUNTS[name] += by


def get(name: str) -> int:
    return _COUNTS[name]


def reset(name: str | None = None) -> None:
    if name is None:
        _COUNTS.clear()
    else:
        _COUNTS.pop(name, None)


def snapshot() -> dict:
    return dict(_COUNTS)
