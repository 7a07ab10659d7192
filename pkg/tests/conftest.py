import numpy as np
import pytest

from typoattack import corpus, nn, synthetic

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


@pytest.fixture
def tiny_vocab():
    return corpus.Vocabulary(["alpha", "beta", "gamma", "delta", "eps"], [9, 8, 7, 6, 5], min_count=1)


def random_model(variant, seed, vocab_size=7, d=3, F=2, k=2, L=3, scale=1.0):
    cfg = nn.ModelConfig(variant=variant, embed_dim=d, num_filters=F, kernel_width=k, num_labels=L, dropout=0.0)
    rng = np.random.default_rng(seed)
    params = nn.init_params(cfg, vocab_size, rng)
    params = params.map(lambda a: a * scale)
    # non-zero biases so every parameter takes part in the check
    params.b_c[:] = rng.normal(0, 0.3, size=params.b_c.shape)
    params.b_o[:] = rng.normal(0, 0.3, size=params.b_o.shape)
    return cfg, params


_KEYWORD_MODELS = {}


def keyword_data():
    """The keyword corpus: 450 train, 50 validation and 200 held-out documents."""
    recs = synthetic.make_keyword_corpus(700, num_labels=10, seed=0)
    labels = corpus.build_label_space(recs, 10)
    docs = corpus.filter_and_encode(recs, None, labels)
    train, val, test = docs[:450], docs[450:500], docs[500:]
    return train, val, test, corpus.build_vocabulary(train, 3), labels


def keyword_model(seed):
    """Default-size max_pool model trained on the keyword corpus with ``seed`` (cached)."""
    if seed not in _KEYWORD_MODELS:
        train, val, test, vocab, labels = keyword_data()
        cfg = nn.ModelConfig(num_labels=10, dropout=0.5)
        params, history = nn.train(nn.init_params(cfg, len(vocab), seed), cfg, train, val, vocab,
                                   nn.OptimizerConfig(seed=seed))
        _KEYWORD_MODELS[seed] = {"model": nn.Classifier(params, cfg, vocab), "train": train, "val": val,
                                 "test": test, "labels": labels, "history": history}
    return _KEYWORD_MODELS[seed]


@pytest.fixture(scope="session")
def keyword_setup():
    return keyword_model(0)
