import numpy as np
import pytest

from masersoliton.analysis import TimeSeries
from masersoliton.errors import ConfigError
from masersoliton.formats import (
    SERIES_MAGIC, TRAJECTORY_MAGIC, read_series_csv, read_trajectory, series_from_trajectory,
    write_series_csv, write_trajectory_csv, write_trajectory_npz,
)


def random_fields(shape, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("writer,name", [(write_trajectory_csv, "t.csv"),
                                         (write_trajectory_npz, "t.npz")])
def test_trajectory_round_trip_is_bit_exact(tmp_path, writer, name):
    times = np.array([0.0, 0.1, 0.30000000000000004])
    fields = random_fields((3, 2, 8))
    path = tmp_path / name
    writer(path, times, fields, {"channels": ["A", "B"], "kind": "mbe"})
    t, f, meta = read_trajectory(path)
    assert np.array_equal(t, times)
    assert np.array_equal(f, fields)
    assert meta["channels"] == ["A", "B"]


def test_trajectory_csv_layout(tmp_path):
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, [0.0], random_fields((1, 1, 2)), {"channels": ["F"]})
    lines = path.read_text().splitlines()
    assert lines[0] == TRAJECTORY_MAGIC
    assert lines[1].startswith("# {")
    assert lines[2] == "t,re_F_0,im_F_0,re_F_1,im_F_1"
    assert len(lines) == 4


def test_series_round_trip_is_bit_exact(tmp_path):
    a = TimeSeries(random_fields(40, 1), 0.1, "A")
    b = TimeSeries(random_fields(40, 2), 0.1, "B")
    path = tmp_path / "s.csv"
    write_series_csv(path, [a, b])
    assert path.read_text().splitlines()[0] == SERIES_MAGIC
    back = read_series_csv(path)
    assert [s.channel for s in back] == ["A", "B"]
    assert np.array_equal(back[0].samples, a.samples) and np.array_equal(back[1].samples, b.samples)
    assert back[0].dt == 0.1


def test_plain_csv_is_accepted(tmp_path):
    t = 0.5 * np.arange(20)
    path = tmp_path / "p.csv"
    np.savetxt(path, np.column_stack((t, np.sin(t), np.cos(t))), delimiter=",",
               header="t,re,im", comments="")
    (s,) = read_series_csv(path)
    assert s.dt == pytest.approx(0.5)
    assert np.allclose(s.samples, np.sin(t) + 1j * np.cos(t))


def test_non_uniform_time_is_rejected(tmp_path):
    t = np.sort(np.random.default_rng(0).uniform(0, 10, 20))
    path = tmp_path / "p.csv"
    np.savetxt(path, np.column_stack((t, t, t)), delimiter=",")
    with pytest.raises(ConfigError):
        read_series_csv(path)


def test_series_from_trajectory(tmp_path):
    fields = random_fields((20, 1, 4))
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, 0.25 * np.arange(20), fields, {"channels": ["A"]})
    (s,) = series_from_trajectory(path)
    assert s.dt == pytest.approx(0.25)
    assert np.allclose(s.samples, fields[:, 0, :].mean(axis=1))
