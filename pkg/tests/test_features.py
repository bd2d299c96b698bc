import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avsr.features import (
    append_deltas,
    deltas,
    global_std,
    mean_normalize,
    mix_noise_at_snr,
    noise_scale,
    power,
    scale_features,
    splice,
)

frames = arrays(np.float64, st.tuples(st.integers(1, 15), st.integers(1, 4)),
                elements=st.floats(-100, 100, allow_nan=False))


def test_mean_normalize_examples(rng):
    assert np.array_equal(mean_normalize(np.full((4, 3), 7.5)), np.zeros((4, 3)))
    x = rng.normal(size=(9, 4))
    out = mean_normalize(x)
    assert np.abs(out.mean(axis=0)).max() < 1e-12
    assert np.allclose(mean_normalize(out), out, atol=1e-12)


@given(frames)
def test_mean_normalize_zero_mean(x):
    assert np.abs(mean_normalize(x).mean(axis=0)).max() < 1e-10


def test_deltas_hand_values():
    # window 2, edges replicated, computed by a scalar loop
    x = np.array([0.0, 1.0, 4.0, 9.0, 16.0])[:, None]
    assert np.allclose(deltas(x)[:, 0], [0.9, 2.2, 4.0, 4.2, 3.1])
    assert np.allclose(deltas(deltas(x))[:, 0], [0.75, 0.97, 0.64, 0.09, -0.29])


def test_delta_of_ramp_is_one_in_the_middle():
    x = np.arange(10.0)[:, None]
    assert np.array_equal(deltas(x)[2:-2, 0], np.ones(6))


def test_append_deltas_shape_and_constant():
    assert append_deltas(np.zeros((5, 40))).shape == (5, 120)
    assert np.array_equal(append_deltas(mean_normalize(np.full((6, 2), 3.0))), np.zeros((6, 6)))
    c = append_deltas(np.full((6, 2), 3.0))
    assert np.array_equal(c[:, 2:], np.zeros((6, 4)))


def test_splice_examples(rng):
    x = rng.normal(size=(20, 100))
    out = splice(x, 5, 5)
    assert out.shape == (20, 1100)
    assert np.array_equal(out[10], np.concatenate(x[5:16]))
    assert np.array_equal(splice(x, 0, 0), x)
    assert np.array_equal(out[0, :100], x[0])  # left edge replicated


@given(frames, st.integers(0, 3), st.integers(0, 3))
def test_splice_centre_block_is_original(x, left, right):
    d = x.shape[1]
    out = splice(x, left, right)
    assert out.shape == (x.shape[0], d * (left + right + 1))
    assert np.array_equal(out[:, left * d : (left + 1) * d], x)


def test_noise_scale_hand_value():
    clean = np.array([[1.0, 2.0], [3.0, 4.0]])
    noise = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert noise_scale(clean, noise, 10.0) == pytest.approx(0.31622776601683794, abs=1e-15)


def test_mix_noise_zero_db_equal_power(rng):
    clean, noise = rng.normal(size=(30, 4)), 3 * rng.normal(size=(40, 4))
    out = mix_noise_at_snr(clean, noise, 0.0)
    added = out - clean
    assert abs(power(added) - power(clean)) < 1e-9


@given(st.floats(-10, 30))
def test_mix_noise_hits_requested_snr(snr):
    r = np.random.default_rng(0)
    clean, noise = r.normal(size=(25, 3)), r.normal(size=(25, 3))
    added = mix_noise_at_snr(clean, noise, snr) - clean
    assert abs(10 * np.log10(power(clean) / power(added)) - snr) < 0.01


def test_mix_noise_infinite_snr_and_errors(rng):
    clean = rng.normal(size=(5, 2))
    assert np.array_equal(mix_noise_at_snr(clean, rng.normal(size=(5, 2)), np.inf), clean)
    with pytest.raises(ValueError):
        mix_noise_at_snr(clean, np.ones((5, 2)), 0.0)  # zero power after mean removal
    with pytest.raises(ValueError):
        mix_noise_at_snr(clean, rng.normal(size=(4, 2)), 0.0)
    with pytest.raises(ValueError):
        mix_noise_at_snr(clean, rng.normal(size=(5, 3)), 0.0)


def test_global_scaling(rng):
    seqs = [rng.normal(size=(7, 3)) * [1.0, 2.0, 4.0] for _ in range(50)]
    std = global_std(seqs)
    assert np.allclose(std, [1.0, 2.0, 4.0], rtol=0.15)
    assert np.allclose(global_std([scale_features(s, std) for s in seqs]), 1.0)
    with pytest.raises(ValueError):
        scale_features(seqs[0], std[:2])
