"""Greedy, budgeted, gradient-guided typo attack.

Each iteration re-runs the model on the current document, picks one
not-yet-attacked position (largest input-gradient norm, or uniformly at
random), enumerates every single-edit typo of the token there and keeps the
one that drives precision@5 lowest.  Precision@5 takes only six values, so
ties are broken by the larger cross-entropy loss and then by enumeration
order.

Typo strings usually fall out of the vocabulary, so many candidates share an
id.  Candidates are evaluated once per distinct id; the model only ever sees
ids, so this changes cost, not results.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import nn
from ._hashing import derive_rng
from .corpus import Document
from .errors import TypoAttackError
from .metrics import top_k
from .typo import OPS, KeyboardMap, PerturbationCandidate, damerau_levenshtein, generate_candidates

STRATEGIES = ("max_gradient", "random")
MODES = ("greedy_min", "monotone")
TRACE_SCHEMA = "1"
SCORE_K = 5


@dataclass(frozen=True)
class AttackConfig:
    budget: int = 10
    strategy: str = "max_gradient"
    mode: str = "greedy_min"
    ops: tuple[str, ...] = OPS
    seed: int = 0
    max_candidates_per_word: int | None = None
    neighbour_inserts: bool = False

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        bad = set(self.ops) - set(OPS)
        if bad or not self.ops:
            raise ValueError(f"ops must be a non-empty subset of {OPS}")
        if self.max_candidates_per_word is not None and self.max_candidates_per_word < 1:
            raise ValueError("max_candidates_per_word must be positive")


@dataclass
class AttackStep:
    iteration: int
    position: int
    original: str
    replacement: str
    op: str
    score_before: float
    score_after: float
    loss_before: float
    loss_after: float


@dataclass
class AttackTrace:
    doc_id: str
    budget: int
    strategy: str
    mode: str
    truth: list[int]
    initial_tokens: list[str]
    final_tokens: list[str]
    initial_score: float
    final_score: float
    initial_loss: float
    final_loss: float
    initial_top5: list[int]
    final_top5: list[int]
    steps: list[AttackStep] = field(default_factory=list)
    rejected: list[int] = field(default_factory=list)   # monotone mode: positions tried, not edited
    exhausted: bool = False
    failed: str | None = None

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["schema"] = TRACE_SCHEMA
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "AttackTrace":
        obj = dict(obj)
        obj.pop("schema", None)
        obj["steps"] = [AttackStep(**s) for s in obj.get("steps", [])]
        return cls(**obj)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def _score(p: np.ndarray, truth: frozenset[int], k: int = SCORE_K) -> tuple[float, list[int]]:
    top = top_k(p, k)
    return sum(1 for j in top if j in truth) / k, [int(j) for j in top]


def _evaluate_ids(model: nn.Classifier, ids: np.ndarray, truth) -> tuple[float, float, list[int], nn.ForwardTrace]:
    trace = model.forward_encoded(ids)
    score, top = _score(trace.p[0], truth)
    return score, nn.loss(trace, truth), top, trace


def score_document(model: nn.Classifier, tokens: Sequence[str], truth: Iterable[int]) -> tuple[float, float]:
    """Precision@5 and cross-entropy loss of ``model`` on one document."""
    truth = frozenset(truth)
    if not truth:
        raise ValueError("score_document needs a non-empty truth set")
    score, loss, _, _ = _evaluate_ids(model, model.vocab.encode(tokens), truth)
    return score, loss


def select_position(grad_norms: np.ndarray, attacked: set, strategy: str,
                    rng: np.random.Generator | None = None, eligible: np.ndarray | None = None) -> int | None:
    """Next position to perturb, or ``None`` when nothing is eligible.

    ``max_gradient`` takes the largest norm (lowest index on ties);
    ``random`` draws uniformly from the eligible positions.
    """
    norms = np.asarray(grad_norms, dtype=np.float64)
    ok = np.ones(len(norms), dtype=bool) if eligible is None else np.array(eligible, dtype=bool)
    if attacked:
        ok[list(attacked)] = False
    positions = np.flatnonzero(ok)
    if len(positions) == 0:
        return None
    if strategy == "max_gradient":
        return int(positions[np.argmax(norms[positions])])
    if strategy == "random":
        if rng is None:
            raise ValueError("random strategy needs an rng")
        return int(positions[rng.integers(len(positions))])
    raise ValueError(f"unknown strategy {strategy!r}")


def best_typo(model: nn.Classifier, tokens: Sequence[str], truth: Iterable[int], position: int,
              candidates: Sequence[PerturbationCandidate], _ids: np.ndarray | None = None):
    """Candidate whose substitution minimises (precision@5, -loss).

    Returns ``(candidate, score, loss)``.  Earlier candidates win exact ties.
    """
    if not candidates:
        raise ValueError("best_typo needs at least one candidate")
    truth = frozenset(truth)
    vocab = model.vocab
    ids = vocab.encode(tokens) if _ids is None else _ids.copy()
    cache: dict[int, tuple[float, float]] = {}
    best = None
    best_key = None
    for cand in candidates:
        tid = vocab.lookup(cand.new_token)
        if tid not in cache:
            ids[position] = tid
            s, l, _, _ = _evaluate_ids(model, ids, truth)
            cache[tid] = (s, l)
        s, l = cache[tid]
        key = (s, -l)
        if best_key is None or key < best_key:
            best, best_key = cand, key
    return best, best_key[0], -best_key[1]


class _CandidateCache:
    def __init__(self, config: AttackConfig, keyboard: KeyboardMap | None):
        self.config = config
        self.keyboard = keyboard
        self._store: dict[str, list[PerturbationCandidate]] = {}

    def __call__(self, token: str) -> list[PerturbationCandidate]:
        cands = self._store.get(token)
        if cands is None:
            cands = generate_candidates(token, self.config.ops, self.keyboard, self.config.neighbour_inserts)
            if self.config.max_candidates_per_word is not None:
                cands = cands[: self.config.max_candidates_per_word]
            self._store[token] = cands
        return cands


def attack_document(model: nn.Classifier, doc: Document, config: AttackConfig,
                    keyboard: KeyboardMap | None = None, _cands: _CandidateCache | None = None) -> AttackTrace:
    truth = frozenset(doc.labels)
    if not truth:
        raise ValueError(f"document {doc.doc_id!r} has no labels")
    if not doc.tokens:
        raise ValueError(f"document {doc.doc_id!r} has no tokens")
    cands_for = _cands or _CandidateCache(config, keyboard)
    rng = derive_rng(config.seed, "attack", doc.doc_id)
    tokens = list(doc.tokens)
    ids = model.vocab.encode(tokens)
    score, loss, top, fwd = _evaluate_ids(model, ids, truth)
    trace = AttackTrace(
        doc_id=doc.doc_id, budget=config.budget, strategy=config.strategy, mode=config.mode,
        truth=sorted(truth), initial_tokens=list(tokens), final_tokens=tokens,
        initial_score=score, final_score=score, initial_loss=loss, final_loss=loss,
        initial_top5=top, final_top5=top,
    )
    attacked: set[int] = set()
    eligible = np.array([len(cands_for(t)) > 0 for t in tokens], dtype=bool)

    for it in range(config.budget):
        try:
            if config.strategy == "max_gradient":
                norms = nn.backward_input(fwd, truth).norms
            else:
                norms = np.zeros(len(tokens))
            pos = select_position(norms, attacked, config.strategy, rng, eligible)
            if pos is None:
                trace.exhausted = True
                break
            attacked.add(pos)
            cand, new_score, new_loss = best_typo(model, tokens, truth, pos, cands_for(tokens[pos]), _ids=ids)
            if config.mode == "monotone" and not (new_score, -new_loss) < (score, -loss):
                trace.rejected.append(pos)
                continue
            original = tokens[pos]
            tokens[pos] = cand.new_token
            ids[pos] = model.vocab.lookup(cand.new_token)
            new_score, new_loss, top, fwd = _evaluate_ids(model, ids, truth)
            trace.steps.append(AttackStep(it, pos, original, cand.new_token, cand.op,
                                          score, new_score, loss, new_loss))
            score, loss = new_score, new_loss
        except (TypoAttackError, ValueError, ArithmeticError) as exc:
            trace.failed = f"iteration {it}: {exc}"
            break

    trace.final_score, trace.final_loss, trace.final_top5 = score, loss, top
    return trace


def perturbation_budget_check(trace: AttackTrace) -> bool:
    """True iff the trace respects its budget and every edit is a single typo."""
    if len(trace.steps) > trace.budget:
        return False
    positions = [s.position for s in trace.steps]
    if len(set(positions)) != len(positions):
        return False
    init, final = trace.initial_tokens, trace.final_tokens
    if len(init) != len(final):
        return False
    for s in trace.steps:
        if not 0 <= s.position < len(init):
            return False
        if init[s.position] != s.original or final[s.position] != s.replacement:
            return False
        if damerau_levenshtein(s.original, s.replacement) != 1:
            return False
    changed = {i for i, (a, b) in enumerate(zip(init, final)) if a != b}
    return changed == set(positions)


# ---------------------------------------------------------------------------
# Corpus level
# ---------------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(model, config, keyboard):
    _WORKER["model"] = model
    _WORKER["config"] = config
    _WORKER["cands"] = _CandidateCache(config, keyboard)


def _attack_one(doc: Document):
    try:
        return attack_document(_WORKER["model"], doc, _WORKER["config"], _cands=_WORKER["cands"]), None
    except (TypoAttackError, ValueError, ArithmeticError) as exc:
        return None, {"doc_id": doc.doc_id, "error": str(exc)}


def attack_corpus(model: nn.Classifier, docs: Sequence[Document], config: AttackConfig,
                  parallelism: int = 1, keyboard: KeyboardMap | None = None):
    """Attack every document independently.

    Returns ``(traces, aggregate)``.  Traces follow the input order; the
    aggregate means are summed in ``doc_id`` order so they do not depend on
    ``parallelism``.  Documents that fail outright are listed under
    ``aggregate["failures"]`` instead of raising.
    """
    if parallelism <= 1 or len(docs) <= 1:
        _init_worker(model, config, keyboard)
        results = [_attack_one(d) for d in docs]
    else:
        chunk = max(1, math.ceil(len(docs) / (4 * parallelism)))
        with ProcessPoolExecutor(max_workers=parallelism, initializer=_init_worker,
                                 initargs=(model, config, keyboard)) as pool:
            results = list(pool.map(_attack_one, docs, chunksize=chunk))
    traces = [t for t, _ in results if t is not None]
    failures = [f for _, f in results if f is not None]
    failures += [{"doc_id": t.doc_id, "error": t.failed} for t in traces if t.failed]
    return traces, aggregate(traces, config, failures)


def aggregate(traces: Sequence[AttackTrace], config: AttackConfig, failures=()) -> dict:
    ordered = sorted(traces, key=lambda t: t.doc_id)
    n = len(ordered)
    before = after = None
    if n:
        before = sum(t.initial_score for t in ordered) / n
        after = sum(t.final_score for t in ordered) / n
    return {
        "budget": config.budget,
        "strategy": config.strategy,
        "mode": config.mode,
        "seed": config.seed,
        "mean_score_before": before,
        "mean_score_after": after,
        "mean_steps": (sum(len(t.steps) for t in ordered) / n) if n else None,
        "docs": n,
        "undefined": n == 0,
        "failures": sorted(failures, key=lambda f: f["doc_id"]),
    }


def write_traces(traces: Iterable[AttackTrace], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in traces:
            fh.write(json.dumps(t.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def read_traces(path) -> list[AttackTrace]:
    from .errors import DataError
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if obj.get("schema") != TRACE_SCHEMA:
                    raise DataError(f"{path}:{lineno}: unsupported trace schema {obj.get('schema')!r}")
                out.append(AttackTrace.from_json(obj))
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: malformed trace ({exc})") from None
    return out

