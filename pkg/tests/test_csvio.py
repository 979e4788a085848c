import numpy as np
import pytest

from fedcausal import csvio, synth
from fedcausal.model import ClientDataset


class TestClientFiles:
    def test_lossless_round_trip(self, tmp_path, rng):
        world = synth.generate(synth.case_spec("c2", seed=3))
        ds = world.clients[1]
        back = csvio.read_client_csv(csvio.write_client_csv(ds, tmp_path, 2))
        for name in ("x", "w", "y", "y0", "y1"):
            np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))

    def test_header(self, tmp_path):
        ds = ClientDataset(np.ones((2, 3)), [0, 1], [0.0, 1.0])
        path = csvio.write_client_csv(ds, tmp_path, 1)
        assert path.read_text().splitlines()[0] == "x1,x2,x3,w,y"
        assert csvio.client_header(2, True) == ["x1", "x2", "w", "y", "y0", "y1"]

    def test_more_than_nine_columns_keep_order(self, tmp_path, rng):
        ds = ClientDataset(rng.standard_normal((3, 11)), [0, 1, 0], [0.0, 1.0, 2.0])
        back = csvio.read_client_csv(csvio.write_client_csv(ds, tmp_path, 1))
        np.testing.assert_array_equal(back.x, ds.x)

    def test_truths(self, tmp_path):
        csvio.write_truths_csv([0.5, -1.25], 21.5, tmp_path, 3)
        theta, ate = csvio.read_truths_csv(tmp_path / "truths_3.csv")
        np.testing.assert_array_equal(theta, [0.5, -1.25])
        assert ate == 21.5

    def test_client_files_numeric_order(self, tmp_path):
        for k in (10, 2, 1):
            (tmp_path / f"client_{k}.csv").write_text("x1,w,y\n0,0,0\n")
        (tmp_path / "client_x.csv").write_text("")
        assert [p.name for p in csvio.client_files(tmp_path)] == ["client_1.csv", "client_2.csv", "client_10.csv"]


class TestErrors:
    def test_non_numeric_cell(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(csvio.CsvFormatError, match=r"bad.csv:3: column 'b'"):
            csvio.read_table(p)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1\n")
        with pytest.raises(csvio.CsvFormatError, match=":2:"):
            csvio.read_table(p)

    def test_missing_column(self, tmp_path):
        p = tmp_path / "client_1.csv"
        p.write_text("x1,y\n1,2\n")
        with pytest.raises(csvio.CsvFormatError, match="'w'"):
            csvio.read_client_csv(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(csvio.CsvFormatError):
            csvio.read_table(p)


def test_write_table_round_trip(tmp_path, rng):
    cols = {"a": rng.standard_normal(4), "b": np.arange(4.0)}
    header, values = csvio.read_table(csvio.write_table(cols, tmp_path / "t.csv"))
    assert header == ["a", "b"]
    np.testing.assert_array_equal(values[:, 0], cols["a"])
