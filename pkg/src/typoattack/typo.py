"""Single-edit, keyboard-plausible typos of one token.

Four operators: insert a character, delete a character, swap two adjacent
characters, or replace a character with one of its QWERTY neighbours.
"""
from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DataError

ALPHABET = string.ascii_lowercase + string.digits
OPS = ("insert", "delete", "swap", "replace")

_ORDER = {c: i for i, c in enumerate(ALPHABET)}
_ROWS = ("1234567890", "qwertyuiop", "asdfghjkl", "zxcvbnm")
_ROW_OFFSETS = (0.0, 0.5, 1.0, 1.5)


class KeyboardMap(Mapping[str, frozenset]):
    """Symmetric character adjacency over ``[a-z0-9]``."""

    def __init__(self, adjacency: Mapping[str, Iterable[str]]):
        adj = {c: frozenset(v) for c, v in adjacency.items()}
        for c, nbrs in adj.items():
            if len(c) != 1 or c not in ALPHABET:
                raise DataError(f"keyboard key {c!r} outside [a-z0-9]")
            bad = [n for n in nbrs if len(n) != 1 or n not in ALPHABET]
            if bad:
                raise DataError(f"neighbours of {c!r} outside [a-z0-9]: {bad}")
            if c in nbrs:
                raise DataError(f"key {c!r} is listed as its own neighbour")
            for n in nbrs:
                if c not in adj.get(n, ()):
                    raise DataError(f"adjacency not symmetric: {n!r} in adj({c!r}) but not vice versa")
        self._adj = {c: adj.get(c, frozenset()) for c in ALPHABET}

    def __getitem__(self, c):
        return self._adj.get(c, frozenset())

    def __iter__(self):
        return iter(self._adj)

    def __len__(self):
        return len(self._adj)

    def to_json(self) -> dict:
        return {"adjacency": {c: "".join(sorted(n)) for c, n in self._adj.items()}}

    @classmethod
    def load(cls, path) -> "KeyboardMap":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls({c: list(v) for c, v in obj["adjacency"].items()})
        except (json.JSONDecodeError, KeyError, AttributeError, TypeError) as exc:
            raise DataError(f"{path}: malformed keyboard map ({exc})") from None


def default_keyboard() -> KeyboardMap:
    """QWERTY with the digit row, each row shifted half a key to the right.

    Keys in the same row are neighbours at one column apart; keys in adjacent
    rows are neighbours when their horizontal positions differ by half a key.
    """
    pos = {}
    for r, (row, off) in enumerate(zip(_ROWS, _ROW_OFFSETS)):
        for c, ch in enumerate(row):
            pos[ch] = (r, c + off)
    adj = {ch: set() for ch in pos}
    for a, (ra, xa) in pos.items():
        for b, (rb, xb) in pos.items():
            if a == b:
                continue
            if (ra == rb and abs(xa - xb) == 1.0) or (abs(ra - rb) == 1 and abs(xa - xb) == 0.5):
                adj[a].add(b)
    return KeyboardMap(adj)


_DEFAULT_KEYBOARD = default_keyboard()


@dataclass(frozen=True)
class PerturbationCandidate:
    op: str
    position: int
    new_token: str


def _raw_candidates(token, ops, keyboard, neighbour_inserts):
    n = len(token)
    if "insert" in ops:
        for i in range(n + 1):
            if neighbour_inserts:
                chars = set()
                if i > 0:
                    chars |= keyboard[token[i - 1]]
                if i < n:
                    chars |= keyboard[token[i]]
                chars = sorted(chars, key=_ORDER.__getitem__)
            else:
                chars = ALPHABET
            for ch in chars:
                yield PerturbationCandidate("insert", i, token[:i] + ch + token[i:])
    if "delete" in ops and n >= 2:
        for i in range(n):
            yield PerturbationCandidate("delete", i, token[:i] + token[i + 1:])
    if "swap" in ops:
        for i in range(n - 1):
            if token[i] != token[i + 1]:
                yield PerturbationCandidate("swap", i, token[:i] + token[i + 1] + token[i] + token[i + 2:])
    if "replace" in ops:
        for i in range(n):
            for ch in sorted(keyboard[token[i]], key=_ORDER.__getitem__):
                yield PerturbationCandidate("replace", i, token[:i] + ch + token[i + 1:])


def generate_candidates(
    token: str,
    ops: Iterable[str] = OPS,
    keyboard: KeyboardMap | None = None,
    neighbour_inserts: bool = False,
) -> list[PerturbationCandidate]:
    """All distinct single-edit typos of ``token``.

    Order is operator (insert, delete, swap, replace), then character
    position, then character (``a``-``z`` before ``0``-``9``).  When two edits
    give the same string only the first is kept.  ``neighbour_inserts``
    restricts inserted characters to keyboard neighbours of the flanking
    characters.
    """
    if not token:
        raise ValueError("cannot perturb an empty token")
    ops = set(ops)
    unknown = ops - set(OPS)
    if unknown:
        raise ValueError(f"unknown typo operators: {sorted(unknown)}")
    keyboard = _DEFAULT_KEYBOARD if keyboard is None else keyboard
    seen = {token}
    out = []
    for cand in _raw_candidates(token, ops, keyboard, neighbour_inserts):
        if cand.new_token not in seen:
            seen.add(cand.new_token)
            out.append(cand)
    return out


def count_candidates(token: str, ops: Iterable[str] = OPS, keyboard: KeyboardMap | None = None,
                     neighbour_inserts: bool = False) -> int:
    return len(generate_candidates(token, ops, keyboard, neighbour_inserts))


def damerau_levenshtein(a: str, b: str) -> int:
    """Edit distance with adjacent transpositions (optimal string alignment)."""
    n, m = len(a), len(b)
    prev2 = None
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                cur[j] = min(cur[j], prev2[j - 2] + 1)
        prev2, prev = prev, cur
    return prev[m]
