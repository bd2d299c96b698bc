"""
Training every stage and reading the CER table
==============================================

Runs the acoustic model, the bottleneck network, the lip reader and the
fused model on a fresh toy corpus, then scores both fusion strategies under
each audio condition. The default 500 utterances take about five minutes.
An utterance count can be passed on the command line, but with the default
schedule corpora of 150 or fewer never leave the all-blank plateau before
the learning-rate rule stops them.

    python3 notebooks/03_full_system.py 500
"""

# %%
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from avsr.pipeline import PipelineConfig, format_table, load_split, run_pipeline, train_lip

n = int(sys.argv[1]) if len(sys.argv) > 1 else 500
cfg = replace(PipelineConfig(), n_utterances=n)
work = Path(tempfile.mkdtemp(prefix="avsr-"))


def progress(rep):
    print(f"  [{rep.phase}] epoch {rep.epoch:2d}  cv acc {rep.cv_acc:6.2f}%  lr {rep.lr:g}")


# %%
t0 = time.perf_counter()
result = run_pipeline(cfg, work / "corpus", on_epoch=progress)
print(f"pipeline finished in {time.perf_counter() - t0:.0f}s; decision bias b = {result.models.bias:g}")

# %% [markdown]
# Test-set CER for feature fusion (RNN_av) and decision fusion (RNN_a,RNN_v).

# %%
print(format_table(result.rows))

# %% [markdown]
# Ten lip-reader epochs on bottleneck features against ten on the raw
# spliced video, same seed and schedule.

# %%
train, cv = load_split(work / "corpus", "train"), load_split(work / "corpus", "cv")
for name, bn in (("bottleneck", result.models.bn), ("raw video", None)):
    _, reps = train_lip(cfg, bn, train, cv, max_epochs=10)
    print(f"{name:11s}", " ".join(f"{r.cv_acc:5.1f}" for r in reps))
