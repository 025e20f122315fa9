import numpy as np
import pytest

from peginsert import io
from peginsert.dmp import minimum_jerk
from peginsert.io import FormatError
from peginsert.pipeline import Dataset


def small_dataset():
    rng = np.random.default_rng(0)
    return Dataset(np.arange(4), rng.uniform(-5, 5, (4, 2)), rng.standard_normal((4, 6)),
                   np.array([True, False, True, True]))


def test_dataset_round_trip_is_exact(tmp_path):
    data = small_dataset()
    io.write_dataset(tmp_path / "d.csv", data)
    again = io.read_dataset(tmp_path / "d.csv")
    for f in ("trial_id", "d", "wrench", "converged"):
        np.testing.assert_array_equal(getattr(again, f), getattr(data, f))


def test_dataset_header(tmp_path):
    io.write_dataset(tmp_path / "d.csv", small_dataset())
    first = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert first == "trial_id,dx_mm,dy_mm,fx_N,fy_N,fz_N,mx_Nmm,my_Nmm,mz_Nmm,converged"


def test_corrupt_field_reports_row_number(tmp_path):
    io.write_dataset(tmp_path / "d.csv", small_dataset())
    lines = (tmp_path / "d.csv").read_text().splitlines()
    fields = lines[3].split(",")
    fields[4] = "abc"
    lines[3] = ",".join(fields)
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match="row 4"):
        io.read_dataset(tmp_path / "d.csv")


def test_short_row_reports_row_number(tmp_path):
    io.write_dataset(tmp_path / "d.csv", small_dataset())
    with (tmp_path / "d.csv").open("a") as fh:
        fh.write("9,1.0\n")
    with pytest.raises(FormatError, match="row 6"):
        io.read_dataset(tmp_path / "d.csv")


def test_wrong_header(tmp_path):
    (tmp_path / "d.csv").write_text("a,b\n1,2\n")
    with pytest.raises(FormatError, match="row 1"):
        io.read_dataset(tmp_path / "d.csv")


def test_demo_round_trip(tmp_path):
    demo = minimum_jerk([0.0, 1.0, 2.0], [3.0, 4.0, 5.0], 1.0, 280.0)
    io.write_demo(tmp_path / "demo.csv", demo)
    again = io.read_demo(tmp_path / "demo.csv")
    np.testing.assert_array_equal(again.positions, demo.positions)
    np.testing.assert_array_equal(again.timestamps, demo.timestamps)


def test_missing_file(tmp_path):
    with pytest.raises(FormatError):
        io.read_dataset(tmp_path / "absent.csv")
