import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from surge_extrap.preprocess import (
    CoordScaler, MinMaxScaler, OffsetSample, ReshapeError, default_rows, flatten,
    make_batches, reshape_series,
)


def test_minmax_example():
    npt.assert_array_equal(MinMaxScaler().fit_transform([2, 4, 6]), [0, 0.5, 1])


def test_minmax_constant():
    s = MinMaxScaler().fit([3, 3, 3])
    npt.assert_array_equal(s.transform([3, 3, 3]), 0.0)
    npt.assert_array_equal(s.inverse_transform(s.transform([3, 3, 3])), [3, 3, 3])


def test_minmax_empty():
    with pytest.raises(ValueError):
        MinMaxScaler().fit([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_minmax_roundtrip(values):
    s = MinMaxScaler().fit(values)
    t = s.transform(values)
    assert ((t >= 0) & (t <= 1)).all()
    if s.span > 0:
        assert np.abs(s.inverse_transform(t) - values).max() < 1e-9


@pytest.mark.parametrize("T,rows,shape", [(105, 5, (5, 21)), (69, 3, (3, 23)), (10, 5, (5, 2))])
def test_reshape(T, rows, shape):
    v = np.arange(T, dtype=float)
    m = reshape_series(v, rows)
    assert m.shape == shape
    assert m[1, 0] == shape[1]
    npt.assert_array_equal(flatten(m), v)


def test_reshape_not_divisible():
    with pytest.raises(ReshapeError, match="truncate"):
        reshape_series(np.arange(11.0), 5)
    assert reshape_series(np.arange(11.0), 5, truncate=True).shape == (5, 2)


@pytest.mark.parametrize("T,rows", [(105, 5), (69, 3), (20, 5), (40, 5), (49, 7), (16, 4)])
def test_default_rows(T, rows):
    assert default_rows(T) == rows


def test_default_rows_prime():
    with pytest.raises(ReshapeError):
        default_rows(23)


def _samples(n, shape=(5, 2)):
    return [OffsetSample(str(i), np.zeros(2), np.zeros(shape)) for i in range(n)]


def test_batches_sizes():
    assert [len(b) for b in make_batches(_samples(25), 10, 0)] == [10, 10, 5]
    assert [len(b) for b in make_batches(_samples(10), 10, 0)] == [10]


def test_batches_deterministic():
    a = [[s.station_id for s in b.samples] for b in make_batches(_samples(25), 10, 4)]
    b = [[s.station_id for s in b.samples] for b in make_batches(_samples(25), 10, 4)]
    assert a == b


def test_batches_mixed_shapes():
    with pytest.raises(ReshapeError):
        make_batches(_samples(2) + _samples(1, (3, 3)), 10, 0)


def test_coord_scaler_box_and_clamp():
    cs = CoordScaler.fit([[-95, 28], [-88, 31], [-90, 29]])
    npt.assert_allclose(cs.transform([[-95, 28], [-88, 31]]), [[0, 0], [1, 1]])
    npt.assert_allclose(cs.transform([[-100, 32]]), [[0, 1]])
