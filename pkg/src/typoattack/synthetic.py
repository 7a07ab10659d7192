"""Keyword-separable synthetic corpora.

Every label owns one trigger word.  A document carries ``labels_per_doc``
labels, contains each of their trigger words exactly once, and is otherwise
filled with label-independent filler words plus an occasional one-off
nonsense token (so the model also sees UNK during training).  With
``labels_per_doc >= 5`` the Bayes-optimal precision@5 is 1.
"""
from __future__ import annotations

import numpy as np

from .corpus import RawRecord

KEYWORDS = (
    "hypertension", "pneumonia", "sepsis", "anemia", "fibrillation", "diabetes",
    "hyperlipidemia", "intubation", "ventilation", "catheterization", "hypothyroidism",
    "bronchoscopy", "cholecystectomy", "pneumothorax", "tracheostomy", "jaundice",
    "obesity", "depression", "regurgitation", "transfusion",
)
CODES = (
    "401.9", "486", "038.9", "285.9", "427.31", "250.00", "272.4", "96.04", "96.71", "38.93",
    "244.9", "33.22", "51.23", "512.1", "31.1", "782.4", "278.00", "311", "424.0", "99.04",
)

_ONSETS = ("b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "pr", "st", "tr", "ch")
_VOWELS = ("a", "e", "i", "o", "u")


def _pseudo_words(n: int, rng: np.random.Generator, exclude=()) -> list[str]:
    words, seen = [], set(exclude)
    while len(words) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syl))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def label_inventory(num_labels: int, seed: int = 0) -> tuple[list[str], list[str]]:
    """Trigger words and label codes for ``num_labels`` labels."""
    keywords, codes = list(KEYWORDS[:num_labels]), list(CODES[:num_labels])
    if num_labels > len(KEYWORDS):
        rng = np.random.default_rng([seed, 7])
        keywords += ["kw" + w for w in _pseudo_words(num_labels - len(KEYWORDS), rng)]
        codes += [f"V{i:02d}.{i % 10}" for i in range(len(CODES), num_labels)]
    return keywords, codes


def make_keyword_corpus(
    n_docs: int = 500,
    num_labels: int = 10,
    labels_per_doc: int = 5,
    length: tuple[int, int] = (30, 60),
    n_filler: int = 200,
    rare_per_doc: int = 1,
    seed: int = 0,
    id_prefix: str = "doc",
) -> list[RawRecord]:
    """Generate ``n_docs`` records, one patient each.

    ``length`` bounds the number of filler tokens (inclusive) before the
    trigger words are inserted at random positions.
    """
    if labels_per_doc > num_labels:
        raise ValueError("labels_per_doc cannot exceed num_labels")
    rng = np.random.default_rng(seed)
    keywords, codes = label_inventory(num_labels)
    filler = _pseudo_words(n_filler, np.random.default_rng([seed, 1]), exclude=keywords)
    records = []
    for i in range(n_docs):
        labels = np.sort(rng.choice(num_labels, size=labels_per_doc, replace=False))
        n = int(rng.integers(length[0], length[1] + 1))
        words = [filler[j] for j in rng.integers(n_filler, size=n)]
        for _ in range(rare_per_doc):
            words.insert(int(rng.integers(len(words) + 1)), "zq" + "".join(rng.choice(list("aeioubdk"), 5)))
        for lab in labels:
            words.insert(int(rng.integers(len(words) + 1)), keywords[lab])
        records.append(RawRecord(f"{id_prefix}{i:05d}", f"p{id_prefix}{i:05d}", " ".join(words),
                                 frozenset(codes[j] for j in labels)))
    return records
