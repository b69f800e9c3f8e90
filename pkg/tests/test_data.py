import numpy as np
import pytest

from flexnoise import Dataset, read_dataset, write_dataset


def test_valid_dataset():
    ds = Dataset([0.0, 1.0, 2.0], [5.0, 6.0, 7.0])
    assert len(ds) == 3
    assert ds.dt == 1.0
    assert ds.span == 2.0


def test_times_must_increase():
    with pytest.raises(ValueError, match="increasing"):
        Dataset([0.0, 2.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="increasing"):
        Dataset([0.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_length_mismatch():
    with pytest.raises(ValueError, match="equal length"):
        Dataset([0.0, 1.0], [1.0, 2.0, 3.0])


def test_needs_two_points():
    with pytest.raises(ValueError, match="at least 2"):
        Dataset([0.0], [1.0])


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        Dataset([0.0, np.nan], [1.0, 2.0])
    with pytest.raises(ValueError):
        Dataset([0.0, 1.0], [1.0, np.inf])


def test_dt_uniform_within_tolerance():
    times = np.linspace(0.0, 10.0, 41)
    assert Dataset(times, np.zeros(41)).dt == pytest.approx(0.25)
    # perturbation within 1e-6 relative still counts as uniform
    jitter = times.copy()
    jitter[5] += 0.25 * 5e-7
    assert Dataset(jitter, np.zeros(41)).dt is not None


def test_dt_non_uniform_marked():
    times = np.array([0.0, 1.0, 2.5, 3.0])
    ds = Dataset(times, np.zeros(4))
    assert ds.dt is None
    with pytest.raises(ValueError, match="uniform"):
        ds.require_uniform()


def test_immutable_arrays():
    ds = Dataset([0.0, 1.0], [2.0, 3.0])
    with pytest.raises(ValueError):
        ds.times[0] = 5.0


def test_csv_round_trip(tmp_path):
    times = np.linspace(0.0, 1.0, 17)
    values = np.sin(times * 7.3) * 1e-3 + 0.1
    ds = Dataset(times, values)
    path = tmp_path / "series.csv"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert np.array_equal(back.times, ds.times)
    assert np.array_equal(back.values, ds.values)
    assert path.read_text().splitlines()[0] == "t,y"


def test_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,value\n0,1\n1,2\n")
    with pytest.raises(ValueError, match="t,y"):
        read_dataset(path)


def test_column_vector_accepted():
    ds = Dataset(np.array([[0.0], [1.0]]), np.array([[2.0], [3.0]]))
    assert ds.times.shape == (2,)
