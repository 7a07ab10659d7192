"""Train a small CNN and look at its input gradients.

Run with ``python3 demos/02_training_and_gradients.py`` (about ten seconds).
"""
# %%
import numpy as np

from typoattack import corpus, metrics, nn, synthetic

records = synthetic.make_keyword_corpus(600, num_labels=10, seed=1)
labels = corpus.build_label_space(records, 10)
docs = corpus.filter_and_encode(records, None, labels)
train, val, test = docs[:400], docs[400:450], docs[450:]
vocab = corpus.build_vocabulary(train)

# %% [markdown]
# ## Training
# A convolution over word embeddings, a tanh, max pooling over time and one
# sigmoid per label.  Training stops once validation precision@5 stops
# improving.

# %%
config = nn.ModelConfig(variant="max_pool", num_labels=10)
params, history = nn.train(nn.init_params(config, len(vocab), 0), config, train, val, vocab)
for h in history:
    print(f"epoch {h['epoch']:2d}  loss {h['train_loss']:.4f}  val P@5 {h['val_p5']:.3f}")
model = nn.Classifier(params, config, vocab)

probs = model.predict_many([d.tokens for d in test])
print(metrics.evaluate(probs, [d.labels for d in test]).table("max_pool"))

# %% [markdown]
# ## Which words matter?
# The gradient of the loss with respect to each input embedding says how
# much a small change to that word would move the loss.  Trigger words
# should stand out from the filler.

# %%
doc = test[0]
trace = model.forward(doc.tokens)
norms = nn.backward_input(trace, doc.labels).norms
for i in np.argsort(-norms)[:6]:
    print(f"{norms[i]:.4f}  {doc.tokens[i]}")
