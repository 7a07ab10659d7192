"""Multilabel evaluation metrics and the budget/strategy sweep table."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


def _truth_matrix(truths, shape) -> np.ndarray:
    if isinstance(truths, np.ndarray) and truths.shape == shape:
        return truths.astype(bool)
    Y = np.zeros(shape, dtype=bool)
    for i, labels in enumerate(truths):
        Y[i, list(labels)] = True
    return Y


def top_k(probs: np.ndarray, k: int = 5) -> np.ndarray:
    """Indices of the ``k`` largest probabilities; ties go to the lower label index."""
    return np.argsort(-np.asarray(probs), kind="stable")[:k]


def precision_at_k(probs, truths, k: int = 5) -> float:
    """Mean over documents of |top-k ∩ truth| / k."""
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if P.shape[1] < k:
        raise ValueError(f"precision@{k} needs at least {k} labels, got {P.shape[1]}")
    Y = _truth_matrix(truths, P.shape)
    order = np.argsort(-P, axis=1, kind="stable")[:, :k]
    hits = np.take_along_axis(Y, order, axis=1).sum(axis=1)
    return float(np.mean(hits / k))


def f1_scores(probs, truths, threshold: float = 0.5):
    """Macro and micro F1 at a fixed probability threshold.

    Returns ``(macro, micro, counts)`` where ``counts`` is an ``(L, 3)`` array
    of per-label tp, fp, fn.  A label with no predictions and no positives
    scores 0.
    """
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    Y = _truth_matrix(truths, P.shape)
    pred = P >= threshold
    tp = (pred & Y).sum(axis=0)
    fp = (pred & ~Y).sum(axis=0)
    fn = (~pred & Y).sum(axis=0)
    denom = 2 * tp + fp + fn
    per_label = np.divide(2.0 * tp, denom, out=np.zeros(len(tp)), where=denom > 0)
    TP, FP, FN = tp.sum(), fp.sum(), fn.sum()
    micro = 2.0 * TP / (2 * TP + FP + FN) if (2 * TP + FP + FN) > 0 else 0.0
    return float(per_label.mean()), float(micro), np.stack([tp, fp, fn], axis=1)


def roc_auc(scores, positives) -> float:
    """Mann-Whitney estimate of ROC-AUC; tied scores count one half.

    Returns nan when either class is empty.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(positives, dtype=bool).ravel()
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_scores(probs, truths):
    """Macro AUC over non-degenerate labels and micro AUC over all pairs.

    Returns ``(macro, micro, per_label)``; ``per_label`` is nan for skipped
    labels and ``macro`` is nan when every label is degenerate.
    """
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    Y = _truth_matrix(truths, P.shape)
    per_label = np.array([roc_auc(P[:, j], Y[:, j]) for j in range(P.shape[1])])
    valid = ~np.isnan(per_label)
    macro = float(per_label[valid].mean()) if valid.any() else float("nan")
    return macro, roc_auc(P, Y), per_label


@dataclass
class EvalReport:
    macro_f1: float
    micro_f1: float
    macro_auc: float
    micro_auc: float
    precision_at_5: float
    num_docs: int
    counts: list           # per-label [tp, fp, fn]
    per_label_auc: list    # nan (serialised as null) for degenerate labels
    skipped_auc_labels: list

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["per_label_auc"] = [None if np.isnan(a) else a for a in self.per_label_auc]
        for key in ("macro_auc", "micro_auc"):
            if np.isnan(obj[key]):
                obj[key] = None
        return obj

    def table(self, title: str = "Model") -> str:
        rows = [("Macro F1 Score", self.macro_f1), ("Micro F1 Score", self.micro_f1),
                ("Macro AUC", self.macro_auc), ("Micro AUC", self.micro_auc),
                ("Top 5 Precision", self.precision_at_5)]
        width = max(len(r[0]) for r in rows)
        lines = [f"{'Metric':<{width}}  {title}"]
        for name, value in rows:
            text = "n/a" if np.isnan(value) else f"{value:.4f}"
            lines.append(f"{name:<{width}}  {text}")
        return "\n".join(lines) + "\n"


def evaluate(probs, truths, threshold: float = 0.5, k: int = 5) -> EvalReport:
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    macro_f1, micro_f1, counts = f1_scores(P, truths, threshold)
    macro_auc, micro_auc, per_label = auc_scores(P, truths)
    return EvalReport(
        macro_f1=macro_f1, micro_f1=micro_f1, macro_auc=macro_auc, micro_auc=micro_auc,
        precision_at_5=precision_at_k(P, truths, k), num_docs=len(P),
        counts=counts.tolist(), per_label_auc=per_label.tolist(),
        skipped_auc_labels=[int(j) for j in np.flatnonzero(np.isnan(per_label))],
    )


# ---------------------------------------------------------------------------
# Sweep table
# ---------------------------------------------------------------------------

_STRATEGY_TITLES = {"max_gradient": "Max grad strategy", "random": "Random strategy"}


@dataclass
class SweepTable:
    baseline: float
    strategies: list[str]
    rows: list[dict]   # {"budget": K, "<strategy>": mean final P@5 or None}

    def to_json(self) -> dict:
        return asdict(self)

    def text(self) -> str:
        heads = ["Budget"] + [_STRATEGY_TITLES.get(s, s) for s in self.strategies]
        cells = [[str(r["budget"])] + ["-" if r[s] is None else f"{r[s]:.3f}" for s in self.strategies]
                 for r in self.rows]
        widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(heads)]
        fmt = lambda row: "  ".join(c.center(w) for c, w in zip(row, widths)).rstrip()
        total = len(fmt(heads))
        lines = ["Top5 precision".center(total).rstrip(), fmt(heads),
                 f"Baseline (K = 0) -> {self.baseline:.3f}".center(total).rstrip()]
        lines += [fmt(c) for c in cells]
        return "\n".join(lines) + "\n"


def sweep_table(groups: Mapping[tuple[int, str], Mapping], tol: float = 1e-9) -> SweepTable:
    """Arrange per-(budget, strategy) aggregates into one row per budget.

    Each aggregate needs ``mean_score_before`` and ``mean_score_after``.  All
    groups describe the same corpus, so their baselines must agree.
    """
    if not groups:
        raise DataError("sweep_table needs at least one (budget, strategy) group")
    baselines = [g["mean_score_before"] for g in groups.values()]
    if any(b is None for b in baselines):
        raise DataError("a sweep group has no documents")
    if max(baselines) - min(baselines) > tol:
        raise DataError(f"inconsistent baselines across sweep groups: {sorted(set(baselines))}")
    strategies = sorted({s for _, s in groups}, key=lambda s: (s != "max_gradient", s))
    budgets = sorted({k for k, _ in groups})
    rows = []
    for k in budgets:
        row = {"budget": k}
        for s in strategies:
            g = groups.get((k, s))
            row[s] = None if g is None else g["mean_score_after"]
        rows.append(row)
    return SweepTable(float(baselines[0]), strategies, rows)


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
