"""Time-series containers and their on-disk CSV format."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import as_vector, check_increasing, check_same_length

#: Relative tolerance under which a time grid counts as uniformly spaced.
UNIFORM_RTOL = 1e-6


@dataclass(frozen=True)
class Dataset:
    """An observed time series: strictly increasing times and matching values.

    Parameters
    ----------
    times : array-like, shape (n,)
        Observation time stamps, strictly increasing, n >= 2.
    values : array-like, shape (n,)
        Observed values at each time stamp.

    Attributes
    ----------
    dt : float or None
        The common spacing when the grid is uniform to relative tolerance
        ``UNIFORM_RTOL``; None marks a non-uniform grid.
    """

    times: np.ndarray
    values: np.ndarray
    dt: float | None = field(init=False)

    def __post_init__(self):
        times = check_increasing(self.times)
        values = as_vector(self.values, "values")
        check_same_length(times, values)
        if times.size < 2:
            raise ValueError("a dataset needs at least 2 points")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dt", _uniform_spacing(times))

    def __len__(self):
        return self.times.size

    @property
    def span(self):
        return float(self.times[-1] - self.times[0])

    def require_uniform(self):
        """Return dt, raising if the grid is not uniformly spaced."""
        if self.dt is None:
            raise ValueError("this operation requires a uniformly spaced time grid")
        return self.dt


def _uniform_spacing(times):
    steps = np.diff(times)
    mean = steps.mean()
    if np.all(np.abs(steps - mean) <= UNIFORM_RTOL * abs(mean)):
        return float(mean)
    return None


def read_dataset(path) -> Dataset:
    """Read a two-column ``t,y`` CSV file into a Dataset."""
    times, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["t", "y"]:
            raise ValueError(f"expected header 't,y' in {path}, got {header!r}")
        for row in reader:
            if not row:
                continue
            times.append(float(row[0]))
            values.append(float(row[1]))
    return Dataset(np.array(times), np.array(values))


def write_dataset(dataset: Dataset, path):
    """Write a Dataset as a two-column ``t,y`` CSV file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for t, y in zip(dataset.times, dataset.values):
            writer.writerow([format(t, ".17g"), format(y, ".17g")])
