"""Corpus ingestion and preprocessing.

Raw records are merged per patient, tokenized (split on non-alphanumeric
runs, lowercase, drop tokens without letters), restricted to the most
frequent label codes and split by a salted hash of the patient id.

Documents keep their tokens as *strings*.  Mapping to ids happens at the
model boundary via :meth:`Vocabulary.encode`, so an attack can drop an
arbitrary typo string into a document and watch it fall through to UNK.
"""
from __future__ import annotations

import hashlib
import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._hashing import fmix64, fnv1a64
from .errors import DataError

PAD = "<PAD>"
UNK = "<UNK>"

_SPLIT_RE = re.compile(r"[^a-zA-Z0-9]+")
_ALPHA_RE = re.compile(r"[a-z]")


@dataclass(frozen=True)
class RawRecord:
    doc_id: str
    patient_id: str
    text: str
    labels: frozenset[str]


@dataclass(frozen=True)
class Document:
    doc_id: str
    patient_id: str
    tokens: tuple[str, ...]
    labels: frozenset[int]


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.78
    val: float = 0.11
    test: float = 0.11
    salt: int = 0

    def __post_init__(self):
        fractions = (self.train, self.val, self.test)
        if any(f < 0 for f in fractions):
            raise ValueError(f"split fractions must be non-negative, got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fractions)!r}")


def tokenize(text: str) -> list[str]:
    """Split ``text`` into lowercase tokens that contain at least one letter.

    >>> tokenize("Chest X-ray 2x daily")
    ['chest', 'x', 'ray', '2x', 'daily']
    """
    out = []
    for piece in _SPLIT_RE.split(text):
        if not piece:
            continue
        piece = piece.lower()
        if _ALPHA_RE.search(piece):
            out.append(piece)
    return out


def merge_by_patient(records: Sequence[RawRecord]) -> list[RawRecord]:
    """Collapse records sharing a patient id into one.

    Texts are joined with a single space in input order, label sets are
    unioned and the first record's ``doc_id`` is kept.  Output order follows
    the first appearance of each patient.
    """
    merged: dict[str, list] = {}
    for rec in records:
        slot = merged.get(rec.patient_id)
        if slot is None:
            merged[rec.patient_id] = [rec.doc_id, [rec.text], set(rec.labels)]
        else:
            slot[1].append(rec.text)
            slot[2].update(rec.labels)
    return [
        RawRecord(doc_id, pid, " ".join(texts), frozenset(labels))
        for pid, (doc_id, texts, labels) in merged.items()
    ]


# ---------------------------------------------------------------------------
# Label space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelSpace:
    codes: tuple[str, ...]
    counts: tuple[int, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.codes)})

    def __len__(self):
        return len(self.codes)

    def __contains__(self, code):
        return code in self._index

    def index(self, code: str) -> int:
        return self._index[code]

    def project(self, codes: Iterable[str]) -> frozenset[int]:
        return frozenset(self._index[c] for c in codes if c in self._index)

    def to_json(self) -> dict:
        return {"codes": list(self.codes), "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict) -> "LabelSpace":
        return cls(tuple(obj["codes"]), tuple(int(c) for c in obj["counts"]))


def build_label_space(records: Sequence[RawRecord], num_labels: int = 50) -> LabelSpace:
    """Keep the ``num_labels`` codes attached to the most records.

    A code counts once per record.  Equal counts are ordered by code string.
    """
    if not records:
        raise DataError("cannot build a label space from zero records")
    freq: Counter[str] = Counter()
    for rec in records:
        freq.update(set(rec.labels))
    if len(freq) < num_labels:
        raise DataError(
            f"corpus has only {len(freq)} distinct label codes, {num_labels} requested"
        )
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:num_labels]
    return LabelSpace(tuple(c for c, _ in ranked), tuple(n for _, n in ranked))


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


class Vocabulary:
    """Token <-> id map.  ``<PAD>`` is id 0 and ``<UNK>`` id 1.

    Lookup is total: any string that was not kept maps to :attr:`unk_id`.
    """

    pad_id = 0
    unk_id = 1

    def __init__(self, tokens: Sequence[str], counts: Sequence[int], min_count: int = 3):
        if len(tokens) != len(counts):
            raise ValueError("tokens and counts differ in length")
        self.min_count = min_count
        self.itos: list[str] = [PAD, UNK, *tokens]
        self.counts: list[int] = [0, 0, *counts]
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi and self.stoi[token] > self.unk_id

    def lookup(self, token: str) -> int:
        idx = self.stoi.get(token, self.unk_id)
        # the reserved strings are not real tokens
        return self.unk_id if idx == self.pad_id else idx

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.fromiter((self.lookup(t) for t in tokens), dtype=np.int64, count=len(tokens))

    def dumps(self) -> str:
        buf = io.StringIO()
        for tok, n in zip(self.itos, self.counts):
            buf.write(f"{tok}\t{n}\n")
        return buf.getvalue()

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path, min_count: int = 3) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        rows = []
        for lineno, line in enumerate(lines, 1):
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'token<TAB>count'")
            try:
                rows.append((parts[0], int(parts[1])))
            except ValueError:
                raise DataError(f"{path}:{lineno}: count is not an integer") from None
        if len(rows) < 2 or rows[0][0] != PAD or rows[1][0] != UNK:
            raise DataError(f"{path}: first two entries must be {PAD} and {UNK}")
        rest = rows[2:]
        return cls([t for t, _ in rest], [n for _, n in rest], min_count=min_count)


def build_vocabulary(train_docs: Iterable[Sequence[str]], min_count: int = 3) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times in ``train_docs``.

    ``train_docs`` is an iterable of token sequences (or :class:`Document`).
    Kept tokens are ordered by descending count, then alphabetically.
    """
    freq: Counter[str] = Counter()
    for doc in train_docs:
        freq.update(doc.tokens if isinstance(doc, Document) else doc)
    kept = sorted(((t, n) for t, n in freq.items() if n >= min_count), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([t for t, _ in kept], [n for _, n in kept], min_count=min_count)


def filter_and_encode(
    records: Iterable[RawRecord], vocab: Vocabulary | None, labelspace: LabelSpace
) -> list[Document]:
    """Tokenize records and drop those with no label inside ``labelspace``.

    ``vocab`` is accepted for symmetry with the pipeline but tokens are left as
    strings; see the module docstring.
    """
    docs = []
    for rec in records:
        labels = labelspace.project(rec.labels)
        if not labels:
            continue
        docs.append(Document(rec.doc_id, rec.patient_id, tuple(tokenize(rec.text)), labels))
    return docs


def split_fraction(patient_id: str, salt: int) -> float:
    """Map a patient id to [0, 1): salted 64-bit FNV-1a, finalised with fmix64.

    Plain FNV-1a barely moves its top bits when ids differ only in their last
    characters (``p001``, ``p002``, ...), so its raw value cannot be used as a
    uniform draw.
    """
    data = int(salt).to_bytes(8, "little", signed=int(salt) < 0) + patient_id.encode("utf-8")
    return fmix64(fnv1a64(data)) / 2.0**64


def split(records: Sequence, split_spec: SplitSpec = SplitSpec()) -> tuple[list, list, list]:
    """Partition records (or documents) into train/val/test by patient hash."""
    train, val, test = [], [], []
    cut1 = split_spec.train
    cut2 = split_spec.train + split_spec.val
    for rec in records:
        u = split_fraction(rec.patient_id, split_spec.salt)
        if u < cut1:
            train.append(rec)
        elif u < cut2:
            val.append(rec)
        else:
            test.append(rec)
    return train, val, test


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _record_from_obj(obj, where: str) -> RawRecord:
    try:
        labels = obj["labels"]
        if not isinstance(labels, list) or not all(isinstance(c, str) for c in labels):
            raise DataError(f"{where}: 'labels' must be a list of strings")
        fields = (obj["doc_id"], obj["patient_id"], obj["text"])
        if not all(isinstance(f, str) for f in fields):
            raise DataError(f"{where}: doc_id, patient_id and text must be strings")
    except (KeyError, TypeError) as exc:
        raise DataError(f"{where}: missing or malformed field ({exc})") from None
    return RawRecord(*fields, frozenset(labels))


def read_raw_corpus(path) -> list[RawRecord]:
    """Read a JSON-lines corpus.  Errors name the offending line."""
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{where}: expected a JSON object")
            rec = _record_from_obj(obj, where)
            if rec.doc_id in seen:
                raise DataError(f"{where}: duplicate doc_id {rec.doc_id!r}")
            seen.add(rec.doc_id)
            records.append(rec)
    return records


def write_raw_corpus(records: Iterable[RawRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            obj = {"doc_id": rec.doc_id, "patient_id": rec.patient_id, "text": rec.text,
                   "labels": sorted(rec.labels)}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_documents(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in docs:
            obj = {"doc_id": d.doc_id, "patient_id": d.patient_id, "tokens": list(d.tokens),
                   "labels": sorted(d.labels)}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_documents(path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                docs.append(Document(obj["doc_id"], obj["patient_id"], tuple(obj["tokens"]),
                                     frozenset(int(i) for i in obj["labels"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed document ({exc})") from None
    return docs
