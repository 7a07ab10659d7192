"""Attack a trained model with a growing typo budget.

Run with ``python3 demos/04_attack_sweep.py`` (under a minute).
"""
# %%
from typoattack import attack, corpus, metrics, nn, synthetic

records = synthetic.make_keyword_corpus(600, num_labels=10, seed=2)
labels = corpus.build_label_space(records, 10)
docs = corpus.filter_and_encode(records, None, labels)
train, val, test = docs[:450], docs[450:500], docs[500:]
vocab = corpus.build_vocabulary(train)
config = nn.ModelConfig(num_labels=10, dropout=0.5)
params, _ = nn.train(nn.init_params(config, len(vocab), 0), config, train, val, vocab)
model = nn.Classifier(params, config, vocab)

# %% [markdown]
# ## One document
# Each step picks the word with the largest input gradient, tries every typo
# of it and keeps the one that hurts precision@5 most.

# %%
trace = attack.attack_document(model, test[0], attack.AttackConfig(budget=4))
print(f"P@5 {trace.initial_score:.1f} -> {trace.final_score:.1f}")
for s in trace.steps:
    print(f"  {s.original:>16} -> {s.replacement:<16} P@5 {s.score_before:.1f} -> {s.score_after:.1f}")

# %% [markdown]
# ## A small sweep
# Gradient-guided position choice against uniformly random choice.

# %%
groups = {}
for K in (1, 2, 4):
    for strategy in attack.STRATEGIES:
        _, agg = attack.attack_corpus(model, test, attack.AttackConfig(budget=K, strategy=strategy))
        groups[(K, strategy)] = agg
print(metrics.sweep_table(groups).text())
