"""
A tour of the synthetic audio-visual corpus
===========================================

Sentences follow a six-slot grammar. Each character becomes a few frames of
audio and video; the video only sees the viseme class, so letters that look
alike on the lips are indistinguishable there. A slow appearance drift that
carries no label information rides on top of the video.
"""

# %%
import numpy as np

from avsr.corpus import Grammar, VISEME_GROUPS, make_profile, render_utterance, sample_sentence, viseme_map
from avsr.features import mix_noise_at_snr, power
from avsr.pipeline import PipelineConfig, corpus_profile

rng = np.random.default_rng(0)
grammar = Grammar()
print(len(grammar.vocabulary), "words;", [sample_sentence(grammar, rng) for _ in range(3)])

# %% [markdown]
# Viseme classes. P, B and M share one mouth shape, and so on.

# %%
vm = viseme_map()
for group in VISEME_GROUPS:
    print(repr(group), "->", vm[group[0]])

# %% [markdown]
# With jitter and drift switched off, "PAT" and "BEN" give identical video
# but different audio.

# %%
clean = make_profile(rng, jitter=0.0)
a1, v1 = render_utterance("PAT", clean, rng, durations=[2, 2, 2])
a2, v2 = render_utterance("BEN", clean, rng, durations=[2, 2, 2])
print("video equal:", np.array_equal(v1, v2), " audio equal:", np.array_equal(a1, a2))

# %% [markdown]
# The default profile used by the experiments, and one utterance from it.

# %%
cfg = PipelineConfig()
profile = corpus_profile(cfg)
audio, video = render_utterance("SET RED AT A ONE NOW", profile, rng)
print("frames:", audio.shape[0], " audio dim:", audio.shape[1], " video dim:", video.shape[1])
drift = video @ profile.drift_basis
print("drift component std per direction:", np.round(drift.std(axis=0), 2))

# %% [markdown]
# Mixing noise at a target SNR. Power is measured after removing the
# per-dimension mean, so the realised ratio matches the request exactly.

# %%
noise = rng.normal(size=audio.shape)
for snr in (10.0, 0.0):
    noisy = mix_noise_at_snr(audio, noise, snr)
    got = 10 * np.log10(power(audio) / power(noisy - audio))
    print(f"asked {snr:4.1f} dB, got {got:6.3f} dB")
