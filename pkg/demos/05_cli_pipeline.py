"""The whole pipeline through the command line, in a temporary directory.

Run with ``python3 demos/05_cli_pipeline.py``.  Each call below is the same
as running ``typoattack <subcommand> ...`` in a shell.
"""
# %%
import tempfile
from pathlib import Path

from typoattack.cli import main

work = Path(tempfile.mkdtemp(prefix="typoattack-"))
steps = [
    ["synthesize", "--num-docs", "400", "--output-dir", work],
    ["preprocess", "--corpus", work / "synthetic.jsonl", "--num-labels", "10", "--output-dir", work / "data"],
    ["train", "--data", work / "data", "--epochs", "8", "--output-dir", work / "model"],
    ["eval", "--checkpoint", work / "model/model.ckpt", "--data", work / "data", "--output-dir", work / "eval"],
    ["attack", "--checkpoint", work / "model/model.ckpt", "--data", work / "data", "--budget", "2",
     "--budget", "4", "--output-dir", work / "attack"],
    ["report", "--traces", work / "attack/traces_test_K4_max_gradient.jsonl", "--data", work / "data",
     "--output-dir", work / "attack"],
]
for argv in steps:
    print("$ typoattack", " ".join(map(str, argv)))
    assert main([str(a) for a in argv]) == 0

# %%
print((work / "attack/report_traces_test_K4_max_gradient.md").read_text()[:1500])
print("artifacts in", work)
