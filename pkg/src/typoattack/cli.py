"""Command-line entry point: ``typoattack <subcommand> [options]``.

Subcommands: preprocess, train, eval, attack, report, typos (plus
``synthesize`` to write a keyword-separable demo corpus).

Options can also come from a TOML file given with ``--config``.  Keys are the
option names with underscores (``budget = [10, 20, 30]``), either at top level
or in a table named after the subcommand.  Command-line flags win over the
file, the subcommand table wins over top-level keys.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import html
import json
import logging
import sys
from pathlib import Path


from . import attack, corpus, metrics, nn, synthetic, typo
from ._hashing import derive_rng
from .errors import DataError, NumericalError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("typoattack")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "common": {"seed": 0, "output_dir": "."},
    "preprocess": {"corpus": None, "num_labels": 50, "min_count": 3,
                   "split_fractions": [0.78, 0.11, 0.11], "salt": 0},
    "train": {"data": None, "variant": "max_pool", "embed_dim": 50, "num_filters": 100,
              "kernel_width": 4, "dropout": 0.2, "lr": 1e-3, "batch_size": 16, "epochs": 30,
              "patience": 5},
    "eval": {"checkpoint": None, "data": None, "split": "test", "threshold": 0.5},
    "attack": {"checkpoint": None, "data": None, "split": "test", "budget": [10, 20, 30],
               "strategy": ["max_gradient", "random"], "mode": "greedy_min", "parallel": 1,
               "max_candidates": None, "ops": list(typo.OPS), "neighbour_inserts": False, "limit": None},
    "report": {"traces": None, "data": None, "split": "test", "top_n": 3, "context": 6},
    "typos": {"ops": list(typo.OPS), "neighbour_inserts": False},
    "synthesize": {"num_docs": 700, "num_labels": 10, "labels_per_doc": 5},
}
REQUIRED = {
    "preprocess": ["corpus"], "train": ["data"], "eval": ["checkpoint", "data"],
    "attack": ["checkpoint", "data"], "report": ["traces", "data"],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with option values")
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--output-dir", help="where artifacts are written (default .)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="typoattack", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="raw JSONL corpus -> split documents + vocab")
    p.add_argument("--corpus", help="raw corpus (JSON lines)")
    p.add_argument("--num-labels", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--split-fractions", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--salt", type=int)

    p = sub.add_parser("train", parents=[common], help="train a CNN classifier")
    p.add_argument("--data", help="directory written by preprocess")
    p.add_argument("--variant", choices=nn.VARIANTS)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--num-filters", type=int)
    p.add_argument("--kernel-width", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("attack", parents=[common], help="run the typo attack sweep")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--budget", type=int, action="append", help="repeatable")
    p.add_argument("--strategy", choices=attack.STRATEGIES, action="append", help="repeatable")
    p.add_argument("--mode", choices=attack.MODES)
    p.add_argument("--parallel", type=int)
    p.add_argument("--max-candidates", type=int)
    p.add_argument("--ops", nargs="+", choices=typo.OPS)
    p.add_argument("--neighbour-inserts", action="store_true", default=None)
    p.add_argument("--limit", type=int, help="attack only the first N documents")

    p = sub.add_parser("report", parents=[common], help="render before/after highlights from traces")
    p.add_argument("--traces")
    p.add_argument("--data")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--top-n", type=int)
    p.add_argument("--context", type=int)

    p = sub.add_parser("typos", parents=[common], help="list typo candidates of a word")
    p.add_argument("word")
    p.add_argument("--ops", nargs="+", choices=typo.OPS)
    p.add_argument("--neighbour-inserts", action="store_true", default=None)

    p = sub.add_parser("synthesize", parents=[common], help="write a keyword-separable demo corpus")
    p.add_argument("--num-docs", type=int)
    p.add_argument("--num-labels", type=int)
    p.add_argument("--labels-per-doc", type=int)
    return parser


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from built-in defaults."""
    cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            cfg = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from None
    section = cfg.get(args.command, {})
    all_keys = {k for d in DEFAULTS.values() for k in d}
    unknown = (set(section) | {k for k, v in cfg.items() if not isinstance(v, dict)}) - all_keys
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key, default in {**DEFAULTS["common"], **DEFAULTS[args.command]}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, section.get(key, cfg.get(key, default)))
    for key in REQUIRED.get(args.command, []):
        if getattr(args, key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required (flag or config)")
    return args


def _require_file(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input not found: {path}")
    return path


def _out(args, name: str) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _load_data(data_dir):
    data_dir = _require_file(data_dir)
    vocab = corpus.Vocabulary.load(_require_file(data_dir / "vocab.tsv"))
    labels = corpus.LabelSpace.from_json(json.loads(_require_file(data_dir / "labels.json").read_text()))
    return data_dir, vocab, labels


def _load_model(args, vocab) -> nn.Classifier:
    params, config, _ = nn.load_checkpoint(_require_file(args.checkpoint), vocab_hash=vocab.hash)
    return nn.Classifier(params, config, vocab)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_preprocess(args) -> dict:
    raw = corpus.read_raw_corpus(_require_file(args.corpus))
    merged = corpus.merge_by_patient(raw)
    labels = corpus.build_label_space(merged, args.num_labels)
    split_spec = corpus.SplitSpec(*args.split_fractions, salt=args.salt)
    parts = corpus.split(merged, split_spec)
    vocab = corpus.build_vocabulary((corpus.tokenize(r.text) for r in parts[0]), args.min_count)
    stats = {"raw_records": len(raw), "merged_docs": len(merged), "docs_per_split": {},
             "dropped_per_split": {}, "vocab_size": len(vocab), "num_labels": len(labels),
             "min_count": args.min_count, "split": {"fractions": list(args.split_fractions), "salt": args.salt},
             "label_frequencies": dict(zip(labels.codes, labels.counts))}
    for name, recs in zip(("train", "val", "test"), parts):
        docs = corpus.filter_and_encode(recs, vocab, labels)
        corpus.write_documents(docs, _out(args, f"{name}.jsonl"))
        stats["docs_per_split"][name] = len(docs)
        stats["dropped_per_split"][name] = len(recs) - len(docs)
    vocab.save(_out(args, "vocab.tsv"))
    metrics.dump_json(labels.to_json(), _out(args, "labels.json"))
    metrics.dump_json(stats, _out(args, "stats.json"))
    print(f"{stats['merged_docs']} merged documents from {stats['raw_records']} records; "
          f"train/val/test = {stats['docs_per_split']['train']}/{stats['docs_per_split']['val']}/"
          f"{stats['docs_per_split']['test']}; vocabulary {len(vocab)}")
    return stats


def cmd_train(args) -> list:
    data_dir, vocab, labels = _load_data(args.data)
    train_docs = corpus.read_documents(_require_file(data_dir / "train.jsonl"))
    val_path = data_dir / "val.jsonl"
    val_docs = corpus.read_documents(val_path) if val_path.exists() else []
    config = nn.ModelConfig(variant=args.variant, embed_dim=args.embed_dim, num_filters=args.num_filters,
                            kernel_width=args.kernel_width, num_labels=len(labels), dropout=args.dropout)
    opt = nn.OptimizerConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                             patience=args.patience,
                             seed=int(derive_rng(args.seed, "train").integers(2**62)))
    params0 = nn.init_params(config, len(vocab), derive_rng(args.seed, "init"))
    params, history = nn.train(params0, config, train_docs, val_docs, vocab, opt)
    nn.save_checkpoint(_out(args, "model.ckpt"), params, config, vocab.hash)
    metrics.dump_json({"config": config.__dict__, "optimizer": opt.__dict__, "history": history},
                      _out(args, "history.json"))
    best = max((h["val_p5"] for h in history), default=float("nan"))
    print(f"trained {config.variant} for {len(history)} epochs; best val P@5 {best:.4f}")
    return history


def cmd_eval(args) -> metrics.EvalReport:
    data_dir, vocab, labels = _load_data(args.data)
    model = _load_model(args, vocab)
    docs = corpus.read_documents(_require_file(data_dir / f"{args.split}.jsonl"))
    if not docs:
        raise DataError(f"split {args.split!r} is empty")
    P = model.predict_many([d.tokens for d in docs])
    report = metrics.evaluate(P, [d.labels for d in docs], threshold=args.threshold)
    metrics.dump_json(report.to_json(), _out(args, f"eval_{args.split}.json"))
    text = report.table(title=model.config.variant)
    _out(args, f"eval_{args.split}.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return report


def cmd_attack(args) -> metrics.SweepTable:
    data_dir, vocab, labels = _load_data(args.data)
    model = _load_model(args, vocab)
    docs = corpus.read_documents(_require_file(data_dir / f"{args.split}.jsonl"))
    if args.limit is not None:
        docs = docs[: args.limit]
    if args.parallel < 1:
        raise UsageError("--parallel must be >= 1")
    groups, summaries = {}, []
    for budget in sorted(set(args.budget)):
        for strategy in dict.fromkeys(args.strategy):
            cfg = attack.AttackConfig(budget=budget, strategy=strategy, mode=args.mode, ops=tuple(args.ops),
                                      seed=args.seed, max_candidates_per_word=args.max_candidates,
                                      neighbour_inserts=bool(args.neighbour_inserts))
            traces, agg = attack.attack_corpus(model, docs, cfg, parallelism=args.parallel)
            attack.write_traces(traces, _out(args, f"traces_{args.split}_K{budget}_{strategy}.jsonl"))
            groups[(budget, strategy)] = agg
            summaries.append(agg)
            if agg["failures"]:
                print(f"K={budget} {strategy}: {len(agg['failures'])} document(s) failed", file=sys.stderr)
            logger.info("K=%d %s: %s -> %s", budget, strategy, agg["mean_score_before"], agg["mean_score_after"])
    table = metrics.sweep_table(groups)
    metrics.dump_json({"table": table.to_json(), "groups": summaries}, _out(args, "sweep.json"))
    text = table.text()
    _out(args, "sweep.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return table


def _snippets(trace: attack.AttackTrace, context: int):
    """Merged [start, end) token windows around each edited position."""
    spans = []
    for pos in sorted(s.position for s in trace.steps):
        lo, hi = max(0, pos - context), min(len(trace.initial_tokens), pos + context + 1)
        if spans and lo <= spans[-1][1]:
            spans[-1][1] = max(spans[-1][1], hi)
        else:
            spans.append([lo, hi])
    return spans


def select_highlights(traces, top_n: int):
    """Largest precision drops and largest rises, ``top_n`` of each."""
    moved = [t for t in traces if t.steps]
    delta = lambda t: t.final_score - t.initial_score
    drops = sorted((t for t in moved if delta(t) < 0), key=lambda t: (delta(t), t.doc_id))[:top_n]
    rises = sorted((t for t in moved if delta(t) > 0), key=lambda t: (-delta(t), t.doc_id))[:top_n]
    return drops, rises


def render_report(traces, codes, top_n: int = 3, context: int = 6) -> tuple[str, str]:
    drops, rises = select_highlights(traces, top_n)
    md = ["# Typo attack highlights", ""]
    ht = ["<!DOCTYPE html>", "<html><head><meta charset=\"utf-8\"><title>Typo attack highlights</title>",
          "<style>.typo{color:#c00;font-weight:bold}.hit{color:#06c}.miss{color:#c00}"
          "td{vertical-align:top;padding:4px 8px}</style></head><body>", "<h1>Typo attack highlights</h1>"]
    if traces:
        t0 = traces[0]
        md += [f"Budget {t0.budget}, strategy `{t0.strategy}`, mode `{t0.mode}`.", ""]
        ht.append(f"<p>Budget {t0.budget}, strategy <code>{html.escape(t0.strategy)}</code>, "
                  f"mode <code>{html.escape(t0.mode)}</code>.</p>")

    def label_list(top, truth, as_html):
        out = []
        for j in top:
            code = codes[j] if j < len(codes) else str(j)
            if as_html:
                cls = "hit" if j in truth else "miss"
                out.append(f"<span class=\"{cls}\">{html.escape(code)}</span>")
            else:
                out.append(f"{code} ({'in truth' if j in truth else 'not in truth'})")
        return ", ".join(out)

    for title, group in (("Largest precision@5 drops", drops), ("Largest precision@5 increases", rises)):
        md += [f"## {title}", ""]
        ht += [f"<h2>{title}</h2>"]
        if not group:
            md += ["(none)", ""]
            ht += ["<p>(none)</p>"]
            continue
        ht.append("<table border=\"1\"><tr><th>Top5 precision</th><th>Description</th></tr>")
        for t in group:
            truth = set(t.truth)
            edited = {s.position for s in t.steps}
            md += [f"### `{t.doc_id}`: {t.initial_score:.1f} -> {t.final_score:.1f}", ""]
            cells = []
            for lo, hi in _snippets(t, context):
                before = " ".join(t.initial_tokens[lo:hi])
                after_md = " ".join(f"**{w}**" if i in edited else w
                                    for i, w in enumerate(t.final_tokens[lo:hi], lo))
                after_ht = " ".join(f"<span class=\"typo\">{html.escape(w)}</span>" if i in edited
                                    else html.escape(w) for i, w in enumerate(t.final_tokens[lo:hi], lo))
                md += [f"- before: ...{before}...", f"- after: ...{after_md}...", ""]
                cells.append(f"...{html.escape(before)}...<br>...{after_ht}...")
            md += [f"Top5 labels before attack: {label_list(t.initial_top5, truth, False)}", "",
                   f"Top5 labels after attack: {label_list(t.final_top5, truth, False)}", ""]
            cells.append(f"<b>Top5 labels before attack</b> - {label_list(t.initial_top5, truth, True)}")
            cells.append(f"<b>Top5 labels after attack</b> - {label_list(t.final_top5, truth, True)}")
            ht.append(f"<tr><td>{t.initial_score:.1f} &rarr; {t.final_score:.1f}<br>"
                      f"<code>{html.escape(t.doc_id)}</code></td><td>{'<br><br>'.join(cells)}</td></tr>")
        ht.append("</table>")
    ht.append("</body></html>")
    return "\n".join(md) + "\n", "\n".join(ht) + "\n"


def cmd_report(args) -> tuple[str, str]:
    data_dir, vocab, labels = _load_data(args.data)
    traces = attack.read_traces(_require_file(args.traces))
    docs = {d.doc_id: d for d in corpus.read_documents(_require_file(data_dir / f"{args.split}.jsonl"))}
    for t in traces:
        doc = docs.get(t.doc_id)
        if doc is None:
            raise DataError(f"trace doc_id {t.doc_id!r} not found in split {args.split!r}")
        if list(doc.tokens) != t.initial_tokens:
            raise DataError(f"trace for {t.doc_id!r} does not match the corpus tokens")
    md, ht = render_report(traces, labels.codes, args.top_n, args.context)
    stem = Path(args.traces).stem
    _out(args, f"report_{stem}.md").write_text(md, encoding="utf-8")
    _out(args, f"report_{stem}.html").write_text(ht, encoding="utf-8")
    print(f"wrote report_{stem}.md and report_{stem}.html")
    return md, ht


def cmd_typos(args) -> int:
    word = args.word
    if not word:
        raise UsageError("word must be non-empty")
    if any(c not in typo.ALPHABET for c in word):
        raise UsageError("word must consist of lowercase letters and digits")
    cands = typo.generate_candidates(word, args.ops, neighbour_inserts=bool(args.neighbour_inserts))
    for op in typo.OPS:
        group = [c.new_token for c in cands if c.op == op]
        if group:
            print(f"{op} ({len(group)}): {' '.join(group)}")
    print(f"total: {len(cands)}")
    return len(cands)


def cmd_synthesize(args) -> None:
    recs = synthetic.make_keyword_corpus(args.num_docs, args.num_labels, args.labels_per_doc, seed=args.seed)
    corpus.write_raw_corpus(recs, _out(args, "synthetic.jsonl"))
    print(f"wrote {len(recs)} records to {_out(args, 'synthetic.jsonl')}")


COMMANDS = {"preprocess": cmd_preprocess, "train": cmd_train, "eval": cmd_eval, "attack": cmd_attack,
            "report": cmd_report, "typos": cmd_typos, "synthesize": cmd_synthesize}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        resolve(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"typoattack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"typoattack: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"typoattack: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"typoattack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
