import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from avsr.ctc import ALPHABET, collapse
from avsr.decode import best_path_decode, cer, edit_distance

A, M = ALPHABET.encode("A")[0], ALPHABET.encode("M")[0]


def one_hot(path, K=28):
    s = np.full((len(path), K), -5.0)
    s[np.arange(len(path)), path] = 0.0
    return s


def test_one_hot_alignment_decodes_to_am():
    res = best_path_decode(one_hot([A, 0, 0, M, 0]))
    assert ALPHABET.decode(res.hypothesis) == "AM"
    assert res.alignment.tolist() == [A, 0, 0, M, 0]
    assert res.score == 0.0


def test_all_blank_and_ties():
    assert best_path_decode(np.zeros((4, 5))).hypothesis.size == 0  # ties go to blank
    with pytest.raises(ValueError):
        best_path_decode(np.zeros((0, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_best_path_equals_exhaustive_max(seed):
    r = np.random.default_rng(seed)
    s = r.normal(size=(5, 3))
    best = max(itertools.product(range(3), repeat=5), key=lambda p: s[np.arange(5), p].sum())
    res = best_path_decode(s)
    assert res.score == pytest.approx(s[np.arange(5), best].sum())
    assert res.hypothesis.tolist() == collapse(best).tolist()


@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_decode_invariant_to_frame_offsets(seed, c):
    r = np.random.default_rng(seed)
    s = r.normal(size=(6, 4))
    shifted = s + c * r.normal(size=(6, 1))
    assert best_path_decode(s).hypothesis.tolist() == best_path_decode(shifted).hypothesis.tolist()


def test_edit_distance_examples():
    assert edit_distance("AM", "AM") == 0
    assert edit_distance("AM", "") == 2
    assert edit_distance("PLACE", "PLANE") == 1
    assert edit_distance("KITTEN", "SITTING") == 3


words = st.text(alphabet="ABC ", max_size=8)


@given(words, words, words)
def test_edit_distance_is_a_metric(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert (edit_distance(a, b) == 0) == (a == b)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


def test_cer_examples():
    assert cer(["AM"], ["AM"]) == 0.0
    assert cer(["AX"], ["AM"]) == 50.0
    refs, hyps = ["PLACE RED", "AT B", "SOON"], ["PLACE RAD", "A B", ""]
    per = [edit_distance(h, r) / len(r) for h, r in zip(hyps, refs)]
    weights = [len(r) for r in refs]
    assert cer(hyps, refs) == pytest.approx(100 * np.average(per, weights=weights))
    with pytest.raises(ValueError):
        cer(["A"], [""])
    with pytest.raises(ValueError):
        cer(["A"], ["A", "B"])
