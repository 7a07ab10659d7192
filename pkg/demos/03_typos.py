"""Keyboard-plausible single-edit typos.

Run with ``python3 demos/03_typos.py``.
"""
# %%
from collections import Counter

from typoattack import typo

kb = typo.default_keyboard()
print("neighbours of i:", "".join(sorted(kb["i"])))
print("neighbours of u:", "".join(sorted(kb["u"])))

# %% [markdown]
# ## Four operators
# Insert any character, delete one, swap two adjacent ones, or hit a
# neighbouring key instead of the intended one.  Duplicates (inserting an
# ``e`` next to an ``e``) are dropped.

# %%
cands = typo.generate_candidates("hike")
print(Counter(c.op for c in cands), "total", len(cands))
for op in typo.OPS:
    print(op, [c.new_token for c in cands if c.op == op][:8])

# %% [markdown]
# Every candidate is exactly one edit away from the original.

# %%
assert all(typo.damerau_levenshtein("hike", c.new_token) == 1 for c in cands)
print("sepsis ->", [c.new_token for c in typo.generate_candidates("sepsis", {"replace"})][:10])
