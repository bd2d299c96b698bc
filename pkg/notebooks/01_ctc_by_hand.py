"""
CTC on a posteriorgram small enough to enumerate
================================================

Four frames, one blank plus two symbols. Every alignment is listed, collapsed,
and summed; the forward recursion has to land on the same numbers.
"""

# %%
import itertools

import numpy as np

from avsr.ctc import BLANK, best_alignment, collapse, ctc_log_likelihood, ctc_loss_and_grad

post = np.array([[0.5, 0.3, 0.2],
                 [0.1, 0.6, 0.3],
                 [0.4, 0.2, 0.4],
                 [0.25, 0.25, 0.5]])
T, K = post.shape

# %% [markdown]
# Group all 3**4 alignments by the label they collapse to.

# %%
mass = {}
for path in itertools.product(range(K), repeat=T):
    label = tuple(collapse(path).tolist())
    mass[label] = mass.get(label, 0.0) + np.prod(post[np.arange(T), path])

for label in sorted(mass, key=lambda l: (len(l), l)):
    if len(label) > 2:
        continue
    fwd = np.exp(ctc_log_likelihood(post, list(label))[0])
    print(f"{str(label):10s} enumerated {mass[label]:.6f}   forward {fwd:.6f}")
print("total mass over every label:", round(sum(mass.values()), 12))

# %% [markdown]
# Blanks between frames let the same label appear at different speeds; a
# repeated symbol needs a blank in between to survive the collapse.

# %%
print(collapse([1, BLANK, BLANK, 2, BLANK]), collapse([BLANK, 1, BLANK, BLANK, 2]), collapse([1, 1, BLANK, 1]))

# %% [markdown]
# The single most likely alignment for label (1, 2), and the gradient the
# loss sends back to the logits. Each gradient row sums to zero.

# %%
print("best alignment:", best_alignment(post, [1, 2]))
loss, grad = ctc_loss_and_grad(np.log(post), [1, 2])
print("loss", round(loss, 6))
print(np.round(grad, 4))
print("row sums:", np.round(grad.sum(axis=1), 12))
