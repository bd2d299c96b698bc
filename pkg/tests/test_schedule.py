import pytest
from hypothesis import given
from hypothesis import strategies as st

from avsr.schedule import Newbob


def run(accs, **kw):
    s = Newbob(1.0, **kw)
    s.start(accs[0])
    lrs = []
    for a in accs[1:]:
        lrs.append(s.lr)
        if not s.update(a):
            break
    return s, lrs


def test_halves_after_small_gain_then_keeps_halving():
    s, lrs = run([50.0, 52.0, 52.4, 53.4, 54.4, 55.4])
    assert lrs == [1.0, 1.0, 0.5, 0.25, 0.125]


def test_stops_below_stop_threshold():
    s, lrs = run([50.0, 52.0, 52.05, 60.0])
    assert s.stopped and len(lrs) == 2


def test_min_epochs_postpones_rules():
    s, lrs = run([50.0, 50.0, 50.0, 51.0, 51.05], min_epochs=3)
    assert lrs == [1.0, 1.0, 1.0, 1.0] and s.stopped


def test_max_epochs_caps_training():
    s, lrs = run([float(i) for i in range(20)], max_epochs=5)
    assert len(lrs) == 5 and s.stopped


def test_threshold_validation():
    with pytest.raises(ValueError):
        Newbob(1.0, halving_threshold=0.1, stop_threshold=0.5)
    with pytest.raises(ValueError):
        Newbob(1.0, halving_threshold=0.0)


@given(st.lists(st.floats(0, 100), min_size=2, max_size=30), st.integers(0, 5))
def test_rate_never_increases_and_only_halves(accs, min_epochs):
    _, lrs = run(accs, min_epochs=min_epochs)
    for a, b in zip(lrs, lrs[1:]):
        assert b == a or b == a / 2
