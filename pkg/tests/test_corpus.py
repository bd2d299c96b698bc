import filecmp
import os
from pathlib import Path

import numpy as np
import pytest

from avsr.corpus import (
    GRID_SLOTS,
    VISEME_GROUPS,
    Grammar,
    appearance_drift,
    babble,
    generate_corpus,
    make_profile,
    render_utterance,
    sample_sentence,
    split_sizes,
    viseme_map,
)
from avsr.ctc import ALPHABET
from avsr.io import read_feat, read_manifest


def test_grammar_shape():
    g = Grammar()
    assert len(g.vocabulary) == 51
    assert [len(w) for _, w in g.slots] == [4, 4, 4, 25, 10, 4]
    assert "W" not in GRID_SLOTS["letter"]


def test_sentences(rng):
    s = sample_sentence(Grammar(), rng)
    assert len(s.split(" ")) == 6 and s == s.upper()
    assert sample_sentence(Grammar(), np.random.default_rng(3)) == sample_sentence(Grammar(), np.random.default_rng(3))


def test_command_word_frequencies():
    r = np.random.default_rng(0)
    counts = {}
    for _ in range(10_000):
        w = sample_sentence(Grammar(), r).split(" ")[0]
        counts[w] = counts.get(w, 0) + 1
    assert set(counts) == set(GRID_SLOTS["command"])
    assert all(abs(c / 10_000 - 0.25) < 0.02 for c in counts.values())


def test_viseme_partition():
    m = viseme_map()
    assert len(VISEME_GROUPS) == 10
    assert set(m) == set(ALPHABET.symbols) and len(m) == 27
    assert len(set(m.values())) == 10
    with pytest.raises(ValueError):
        viseme_map(("AB",))


def noiseless(rng, **kw):
    return make_profile(rng, jitter=0.0, **kw)


def test_noiseless_render_is_prototype_concatenation(rng):
    p = noiseless(rng)
    audio, video = render_utterance("AM", p, rng, durations=[1, 1])
    assert np.array_equal(audio, np.vstack([p.audio_protos["A"], p.audio_protos["M"]]))
    assert audio.shape[0] == video.shape[0] == 2


def test_same_viseme_identical_video(rng):
    p = noiseless(rng)
    _, v1 = render_utterance("PAT", p, rng, durations=[2, 3, 2])
    _, v2 = render_utterance("BEN", p, rng, durations=[2, 3, 2])
    assert np.array_equal(v1, v2)
    a1, _ = render_utterance("PAT", p, rng, durations=[2, 3, 2])
    a2, _ = render_utterance("BEN", p, rng, durations=[2, 3, 2])
    assert not np.array_equal(a1, a2)


def test_render_lengths_and_errors(rng):
    p = make_profile(rng)
    a, v = render_utterance("SET RED", p, rng)
    assert a.shape[0] == v.shape[0] and 14 <= a.shape[0] <= 35
    assert a.shape[1] == 8 and v.shape[1] == 6
    with pytest.raises(ValueError):
        render_utterance("", p, rng)
    with pytest.raises(ValueError):
        render_utterance("a", p, rng)


def test_length_grows_with_characters(rng):
    p = noiseless(rng)
    lengths = [render_utterance("A" * n, p, rng, durations=[3] * n)[0].shape[0] for n in range(1, 6)]
    assert lengths == [3, 6, 9, 12, 15]


def test_drift_stays_out_of_the_viseme_directions(rng):
    p = make_profile(rng, jitter=0.0, drift_dims=3, drift_std=3.0)
    signal = p.video_protos  # rows live in the complement of the drift basis
    assert np.abs(signal @ p.drift_basis).max() < 1e-12
    drift = appearance_drift(5000, p, np.random.default_rng(1))
    assert drift.shape == (5000, 6)
    z = drift @ p.drift_basis
    assert np.allclose(z.std(axis=0), 3.0, rtol=0.2)
    lag1 = np.mean([np.corrcoef(z[:-1, j], z[1:, j])[0, 1] for j in range(3)])
    assert lag1 == pytest.approx(0.95, abs=0.03)
    assert not appearance_drift(4, make_profile(rng), rng).any()
    with pytest.raises(ValueError):
        make_profile(rng, video_dim=6, drift_dims=6)


def test_babble_shape(rng):
    p = make_profile(rng)
    assert babble(40, Grammar(), p, rng).shape == (40, 8)


def test_split_sizes():
    assert split_sizes(100) == (81, 9, 10)
    assert split_sizes(500) == (405, 45, 50)


def test_generate_corpus(tmp_path):
    p = make_profile(np.random.default_rng(0))
    splits = generate_corpus(20, Grammar(), p, 4, tmp_path / "a")
    generate_corpus(20, Grammar(), p, 4, tmp_path / "b")
    ids = [{r.id for r in getattr(splits, n)} for n in ("train", "cv", "test")]
    assert [len(i) for i in ids] == [17, 1, 2]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    for name in ("train", "cv", "test"):
        for r in read_manifest(tmp_path / "a" / f"{name}.tsv"):
            a, v = read_feat(tmp_path / "a" / r.audio_path), read_feat(tmp_path / "a" / r.video_path)
            assert a.shape[0] == v.shape[0]
            assert filecmp.cmp(tmp_path / "a" / r.audio_path, tmp_path / "b" / r.audio_path, shallow=False)
    with pytest.raises(ValueError):
        generate_corpus(5, Grammar(), p, 4, tmp_path / "c")


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_directory(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    with pytest.raises(OSError):
        generate_corpus(10, Grammar(), make_profile(np.random.default_rng(0)), 1, locked / "x")


def test_file_in_the_way_is_an_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate_corpus(10, Grammar(), make_profile(np.random.default_rng(0)), 1, Path(blocker))
