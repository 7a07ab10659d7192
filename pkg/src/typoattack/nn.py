"""Single-layer CNN text classifiers with hand-written backpropagation.

Two variants share embedding + convolution + tanh:

* ``max_pool``: each filter is max-pooled over positions, then a linear
  layer gives one logit per label.
* ``label_attention``: every label owns a query vector; a softmax over
  positions of ``H @ query`` pools the conv features separately per label,
  and a per-label dot product gives the logit.

Everything runs in float64 on arrays shaped ``(batch, positions, ...)``.
Documents shorter than the kernel are right-padded with the pad id.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corpus import Document, Vocabulary
from .errors import CheckpointError, NumericalError

logger = logging.getLogger(__name__)

VARIANTS = ("max_pool", "label_attention")
CLAMP = 1e-12
FORMAT_VERSION = "1"


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "max_pool"
    embed_dim: int = 50
    num_filters: int = 100
    kernel_width: int = 4
    num_labels: int = 50
    dropout: float = 0.2
    activation: str = "tanh"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("embed_dim", "num_filters", "kernel_width", "num_labels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")


@dataclass
class ModelParams:
    """Weights of one model.  Also used to hold gradients and Adam moments."""

    E: np.ndarray           # (V, d) embeddings; row 0 is the pad vector
    W: np.ndarray           # (F, k, d) convolution kernel
    b_c: np.ndarray         # (F,)
    U: np.ndarray           # (L, F) output weights
    b_o: np.ndarray         # (L,)
    U_a: np.ndarray | None = None  # (L, F) attention queries, label_attention only

    def names(self) -> list[str]:
        base = ["E", "W", "b_c"]
        if self.U_a is not None:
            base.append("U_a")
        return base + ["U", "b_o"]

    def items(self):
        return [(n, getattr(self, n)) for n in self.names()]

    def map(self, fn) -> "ModelParams":
        return ModelParams(**{n: fn(a) for n, a in self.items()})

    def copy(self) -> "ModelParams":
        return self.map(np.array)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.items())


def expected_shapes(config: ModelConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    d, F, k, L = config.embed_dim, config.num_filters, config.kernel_width, config.num_labels
    shapes = {"E": (vocab_size, d), "W": (F, k, d), "b_c": (F,)}
    if config.variant == "label_attention":
        shapes["U_a"] = (L, F)
    shapes.update({"U": (L, F), "b_o": (L,)})
    return shapes


def init_params(config: ModelConfig, vocab_size: int, rng: np.random.Generator | int = 0) -> ModelParams:
    """Random initialisation: N(0, 0.1) embeddings, Glorot-uniform dense weights, zero biases."""
    rng = np.random.default_rng(rng)
    d, F, k, L = config.embed_dim, config.num_filters, config.kernel_width, config.num_labels

    def glorot(shape, fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    E = rng.normal(0.0, 0.1, size=(vocab_size, d))
    E[Vocabulary.pad_id] = 0.0
    W = glorot((F, k, d), k * d, F)
    U_a = glorot((L, F), F, L) if config.variant == "label_attention" else None
    U = glorot((L, F), F, L)
    return ModelParams(E=E, W=W, b_c=np.zeros(F), U=U, b_o=np.zeros(L), U_a=U_a)


# ---------------------------------------------------------------------------
# Forward / loss / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    """Cached activations of one forward pass over a batch.

    Arrays carry a leading batch axis.  ``lengths`` holds each document's
    unpadded token count.
    """

    params: ModelParams
    config: ModelConfig
    ids: np.ndarray          # (B, N)
    lengths: np.ndarray      # (B,)
    X: np.ndarray            # (B, N, d) embedded input, after dropout
    windows: np.ndarray      # (B, T, k*d)
    C: np.ndarray            # (B, T, F) pre-activation
    H: np.ndarray            # (B, T, F)
    z: np.ndarray            # (B, L)
    p: np.ndarray            # (B, L)
    argmax: np.ndarray | None = None   # (B, F) max_pool
    pooled: np.ndarray | None = None   # (B, F) max_pool, or (B, L, F) label_attention
    alpha: np.ndarray | None = None    # (B, L, T) label_attention
    dropout_mask: np.ndarray | None = None  # (B, N)


@dataclass
class InputGradients:
    grads: np.ndarray   # (N, d)
    norms: np.ndarray   # (N,)

    def __len__(self):
        return len(self.norms)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def pad_batch(id_seqs: Sequence[np.ndarray], min_len: int, pad_id: int = Vocabulary.pad_id):
    """Right-pad id sequences to a common length of at least ``min_len``."""
    lengths = np.array([len(s) for s in id_seqs], dtype=np.int64)
    N = max(int(lengths.max()), min_len)
    ids = np.full((len(id_seqs), N), pad_id, dtype=np.int64)
    for i, s in enumerate(id_seqs):
        ids[i, : len(s)] = s
    return ids, lengths


def forward_ids(params: ModelParams, config: ModelConfig, ids: np.ndarray,
                lengths: np.ndarray | None = None, dropout_mask: np.ndarray | None = None) -> ForwardTrace:
    """Batched forward pass over an already padded ``(B, N)`` id array."""
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    B, N = ids.shape
    k = config.kernel_width
    if N < k:
        raise ValueError(f"padded length {N} shorter than kernel width {k}")
    if lengths is None:
        lengths = np.full(B, N, dtype=np.int64)

    X = params.E[ids]
    if dropout_mask is not None:
        X = X * dropout_mask[:, :, None]
    if not (np.isfinite(X).all() and np.isfinite(params.W).all() and np.isfinite(params.U).all()
            and (params.U_a is None or np.isfinite(params.U_a).all())):
        raise NumericalError("non-finite model parameter encountered in forward pass")

    T = N - k + 1
    F = config.num_filters
    windows = sliding_window_view(X, k, axis=1)          # (B, T, d, k)
    # reshape can return an overlapping strided view, which bypasses BLAS
    windows = np.ascontiguousarray(windows.transpose(0, 1, 3, 2).reshape(B, T, k * config.embed_dim))
    Wf = params.W.reshape(F, -1)
    C = (windows.reshape(B * T, -1) @ Wf.T).reshape(B, T, F) + params.b_c
    H = np.tanh(C)

    trace = ForwardTrace(params, config, ids, np.asarray(lengths), X, windows, C, H,
                         z=None, p=None, dropout_mask=dropout_mask)
    if config.variant == "max_pool":
        am = H.argmax(axis=1)                            # first maximum -> lowest position
        v = np.take_along_axis(H, am[:, None, :], axis=1)[:, 0, :]
        z = v @ params.U.T + params.b_o
        trace.argmax, trace.pooled = am, v
    else:
        L = config.num_labels
        S = (H.reshape(B * T, F) @ params.U_a.T).reshape(B, T, L).transpose(0, 2, 1)  # (B, L, T)
        S = S - S.max(axis=2, keepdims=True)
        A = np.exp(S)
        A /= A.sum(axis=2, keepdims=True)
        V = A @ H                                        # (B, L, F)
        z = (V * params.U).sum(axis=2) + params.b_o
        trace.alpha, trace.pooled = A, V
    trace.z = z
    trace.p = sigmoid(z)
    return trace


def _targets(truth, B: int, L: int) -> np.ndarray:
    """Coerce label sets / index lists / dense arrays into a (B, L) float target."""
    if isinstance(truth, np.ndarray) and truth.dtype.kind == "f":
        Y = np.atleast_2d(truth).astype(np.float64)
    else:
        if B == 1 and (isinstance(truth, (set, frozenset)) or
                       (len(truth) > 0 and np.isscalar(next(iter(truth))))):
            truth = [truth]
        Y = np.zeros((B, L))
        for b, labels in enumerate(truth):
            Y[b, list(labels)] = 1.0
    if Y.shape != (B, L):
        raise ValueError(f"target shape {Y.shape} does not match ({B}, {L})")
    return Y


def loss(trace: ForwardTrace, truth) -> float:
    """Binary cross-entropy averaged over labels, then over the batch."""
    B, L = trace.p.shape
    Y = _targets(truth, B, L)
    p = np.clip(trace.p, CLAMP, 1.0 - CLAMP)
    per_doc = -(Y * np.log(p) + (1.0 - Y) * np.log1p(-p)).mean(axis=1)
    return float(per_doc.mean())


def _backward(trace: ForwardTrace, truth, want_params: bool):
    params, cfg = trace.params, trace.config
    B, L = trace.p.shape
    N = trace.ids.shape[1]
    k, d, F = cfg.kernel_width, cfg.embed_dim, cfg.num_filters
    T = N - k + 1
    Y = _targets(truth, B, L)
    # clamping is ignored here: away from the clamp bounds it is the exact gradient
    dz = (trace.p - Y) / (L * B)

    g = {}
    if cfg.variant == "max_pool":
        v = trace.pooled
        if want_params:
            g["U"] = dz.T @ v
            g["b_o"] = dz.sum(axis=0)
        dv = dz @ params.U                                # (B, F)
        dH = np.zeros_like(trace.H)
        bi = np.arange(B)[:, None]
        fi = np.arange(F)[None, :]
        dH[bi, trace.argmax, fi] = dv
    else:
        A, V, H = trace.alpha, trace.pooled, trace.H
        if want_params:
            g["U"] = (dz[:, :, None] * V).sum(axis=0)
            g["b_o"] = dz.sum(axis=0)
        dV = dz[:, :, None] * params.U[None]              # (B, L, F)
        dA = dV @ H.transpose(0, 2, 1)                    # (B, L, T)
        dH = A.transpose(0, 2, 1) @ dV                    # (B, T, F)
        dS = A * (dA - (A * dA).sum(axis=2, keepdims=True))
        if want_params:
            g["U_a"] = (dS @ H).sum(axis=0)
        dH += (dS.transpose(0, 2, 1).reshape(B * T, L) @ params.U_a).reshape(B, T, F)

    dC = dH * (1.0 - trace.H ** 2)
    Wf = params.W.reshape(F, -1)
    if want_params:
        g["W"] = (dC.reshape(-1, F).T @ trace.windows.reshape(-1, k * d)).reshape(F, k, d)
        g["b_c"] = dC.sum(axis=(0, 1))
    dXw = (dC.reshape(B * T, F) @ Wf).reshape(B, T, k, d)
    dX = np.zeros((B, N, d))
    for j in range(k):
        dX[:, j:j + T] += dXw[:, :, j]
    return g, dX


def backward_params(trace: ForwardTrace, truth) -> ModelParams:
    """Exact gradient of :func:`loss` with respect to every parameter."""
    g, dX = _backward(trace, truth, want_params=True)
    if trace.dropout_mask is not None:
        dX = dX * trace.dropout_mask[:, :, None]
    dE = np.zeros_like(trace.params.E)
    np.add.at(dE, trace.ids.ravel(), dX.reshape(-1, dX.shape[-1]))
    return ModelParams(E=dE, **g)


def backward_input(trace: ForwardTrace, truth) -> InputGradients:
    """Gradient of the loss with respect to each position's embedding vector.

    Only defined for a single-document trace.  Rows beyond the document's
    own length (padding added to reach the kernel width) are dropped.
    """
    if trace.ids.shape[0] != 1:
        raise ValueError("backward_input expects a single-document trace")
    _, dX = _backward(trace, truth, want_params=False)
    n = int(trace.lengths[0])
    grads = dX[0, :n]
    return InputGradients(grads, np.linalg.norm(grads, axis=1))


def forward(params: ModelParams, config: ModelConfig, tokens: Sequence[str], vocab: Vocabulary) -> ForwardTrace:
    """Forward pass over one tokenized document (no dropout)."""
    if len(tokens) == 0:
        raise ValueError("cannot run the model on an empty document")
    ids, lengths = pad_batch([vocab.encode(tokens)], config.kernel_width, vocab.pad_id)
    return forward_ids(params, config, ids, lengths)


def predict(params: ModelParams, config: ModelConfig, tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    return forward(params, config, tokens, vocab).p[0]


@dataclass
class Classifier:
    """A trained model bundled with the vocabulary it was trained against."""

    params: ModelParams
    config: ModelConfig
    vocab: Vocabulary

    @property
    def num_labels(self) -> int:
        return self.config.num_labels

    def forward(self, tokens: Sequence[str]) -> ForwardTrace:
        return forward(self.params, self.config, tokens, self.vocab)

    def forward_encoded(self, ids: np.ndarray) -> ForwardTrace:
        if len(ids) == 0:
            raise ValueError("cannot run the model on an empty document")
        padded, lengths = pad_batch([ids], self.config.kernel_width, self.vocab.pad_id)
        return forward_ids(self.params, self.config, padded, lengths)

    def predict(self, tokens: Sequence[str]) -> np.ndarray:
        return self.forward(tokens).p[0]

    def predict_many(self, docs: Iterable[Sequence[str]]) -> np.ndarray:
        return np.stack([self.predict(t) for t in docs])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0


def _batches(lengths: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Length-bucketed batches: shuffle, stable-sort by length, chunk, shuffle chunk order."""
    order = rng.permutation(len(lengths))
    order = order[np.argsort(lengths[order], kind="stable")]
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    return [chunks[i] for i in rng.permutation(len(chunks))]


def _precision_at_5(clf: Classifier, docs: Sequence[Document]) -> float:
    from .metrics import precision_at_k
    if not docs:
        return float("nan")
    P = clf.predict_many([d.tokens for d in docs])
    return precision_at_k(P, [d.labels for d in docs], k=min(5, clf.num_labels))


def train(params: ModelParams, config: ModelConfig, train_docs: Sequence[Document],
          val_docs: Sequence[Document], vocab: Vocabulary,
          opt: OptimizerConfig = OptimizerConfig()) -> tuple[ModelParams, list[dict]]:
    """Adam on mini-batches with early stopping on validation precision@5.

    Returns the best parameters seen (by validation P@5, or the last epoch
    when ``val_docs`` is empty) together with a per-epoch history.
    """
    if not train_docs:
        raise ValueError("no training documents")
    rng = np.random.default_rng(opt.seed)
    params = params.copy()
    m, v = params.zeros_like(), params.zeros_like()
    encoded = [vocab.encode(d.tokens) for d in train_docs]
    lengths = np.array([len(e) for e in encoded])
    if (lengths == 0).any():
        raise ValueError("training corpus contains an empty document")
    targets = [d.labels for d in train_docs]

    best, best_score, bad_epochs = params.copy(), -np.inf, 0
    history = []
    step = 0
    for epoch in range(1, opt.max_epochs + 1):
        losses = []
        for batch in _batches(lengths, opt.batch_size, rng):
            ids, lens = pad_batch([encoded[i] for i in batch], config.kernel_width, vocab.pad_id)
            mask = None
            if config.dropout > 0:
                keep = rng.random(ids.shape) >= config.dropout
                mask = keep / (1.0 - config.dropout)
            trace = forward_ids(params, config, ids, lens, dropout_mask=mask)
            Y = _targets([targets[i] for i in batch], len(batch), config.num_labels)
            batch_loss = loss(trace, Y)
            if not np.isfinite(batch_loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, step {step}")
            grads = backward_params(trace, Y)
            grads.E[vocab.pad_id] = 0.0
            step += 1
            bc1 = 1.0 - opt.beta1 ** step
            bc2 = 1.0 - opt.beta2 ** step
            for name, g in grads.items():
                mi, vi, w = getattr(m, name), getattr(v, name), getattr(params, name)
                mi *= opt.beta1
                mi += (1.0 - opt.beta1) * g
                vi *= opt.beta2
                vi += (1.0 - opt.beta2) * g * g
                w -= opt.lr * (mi / bc1) / (np.sqrt(vi / bc2) + opt.eps)
            losses.append(batch_loss)
        if not params.all_finite():
            raise NumericalError(f"parameters became non-finite during epoch {epoch}")

        clf = Classifier(params, config, vocab)
        val_p5 = _precision_at_5(clf, val_docs)
        record = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_p5": val_p5}
        history.append(record)
        logger.info("epoch %d  loss %.5f  val P@5 %.4f", epoch, record["train_loss"], val_p5)

        if not val_docs:
            best = params.copy()
            continue
        if val_p5 > best_score:
            best, best_score, bad_epochs = params.copy(), val_p5, 0
        else:
            bad_epochs += 1
            if bad_epochs >= opt.patience:
                break
    return best, history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: ModelParams, config: ModelConfig, vocab_hash: str) -> None:
    """One JSON header line, then each array as raw little-endian float64."""
    header = {
        "format": FORMAT_VERSION,
        "config": asdict(config),
        "vocab_hash": vocab_hash,
        "vocab_size": int(params.E.shape[0]),
        "fields": [{"name": n, "shape": list(a.shape)} for n, a in params.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, a in params.items():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path, vocab_hash: str | None = None) -> tuple[ModelParams, ModelConfig, str]:
    """Read a checkpoint, validating shapes against its config.

    When ``vocab_hash`` is given it must match the hash stored in the file.
    """
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
        if header.get("format") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')!r}")
        config = ModelConfig(**header["config"])
        vocab_size = int(header["vocab_size"])
        declared = [(f["name"], tuple(f["shape"])) for f in header["fields"]]
        stored_hash = header["vocab_hash"]
    except CheckpointError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint header ({exc})") from None

    expected = expected_shapes(config, vocab_size)
    if [n for n, _ in declared] != list(expected):
        raise CheckpointError(f"{path}: field list {[n for n, _ in declared]} does not match "
                              f"variant {config.variant!r}")
    for name, shape in declared:
        if shape != expected[name]:
            raise CheckpointError(f"{path}: field {name!r} has shape {shape}, config implies {expected[name]}")
    if vocab_hash is not None and stored_hash != vocab_hash:
        raise CheckpointError(f"{path}: vocab_hash mismatch (checkpoint {stored_hash[:12]}..., "
                              f"vocabulary {vocab_hash[:12]}...)")

    body = memoryview(raw)[nl + 1:]
    arrays, offset = {}, 0
    for name, shape in declared:
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(body):
            raise CheckpointError(f"{path}: truncated while reading field {name!r}")
        arrays[name] = np.frombuffer(body[offset:offset + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes after last field")
    params = ModelParams(**arrays)
    if not params.all_finite():
        raise CheckpointError(f"{path}: checkpoint contains non-finite weights")
    return params, config, stored_hash
