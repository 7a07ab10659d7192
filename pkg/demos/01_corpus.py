"""From raw notes to model-ready documents.

Run with ``python3 demos/01_corpus.py``.  Builds a small synthetic corpus,
merges records per patient, picks the label space and splits by patient.
"""
# %% [markdown]
# ## A raw corpus
# Each record is a note with a patient id and a set of billing codes.  The
# synthetic generator gives every label one trigger word, so a model that
# reads the right word can be perfect.

# %%
from typoattack import corpus, synthetic

records = synthetic.make_keyword_corpus(300, num_labels=10, seed=0)
print(records[0].doc_id, sorted(records[0].labels))
print(records[0].text[:120], "...")

# %% [markdown]
# ## Tokenizing
# Split on anything that is not a letter or digit, lowercase, and drop
# tokens without a letter (bare numbers, dosages).

# %%
print(corpus.tokenize("Pt s/p CABG x4, BP 120/80; hypertension."))

# %% [markdown]
# ## Patients, labels and splits
# Notes from the same patient become one document.  Splitting hashes the
# patient id, so a patient never lands in two splits and the assignment
# does not depend on file order.

# %%
merged = corpus.merge_by_patient(records)
labels = corpus.build_label_space(merged, 10)
print("label space:", labels.codes)
train, val, test = corpus.split(merged, corpus.SplitSpec(salt=0))
print(f"train/val/test = {len(train)}/{len(val)}/{len(test)}")

docs = corpus.filter_and_encode(train, None, labels)
vocab = corpus.build_vocabulary(docs, min_count=3)
print(f"vocabulary: {len(vocab)} entries, first real tokens {vocab.itos[2:7]}")
print("a typo falls through to UNK:", vocab.lookup("hypertenison") == vocab.unk_id)
