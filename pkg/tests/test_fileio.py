import numpy as np
import pytest

from kgscatter import fileio
from kgscatter import grid as G
from kgscatter.series import DiagnosticSeries


def test_field_round_trip(tmp_path):
    g = G.make_grid(1, 16, 2.0)
    rng = np.random.default_rng(0)
    f = G.ComplexField2P(g, rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16)))
    path = fileio.write_field(tmp_path / "sub" / "u.bin", f, t=4.0)
    back, header = fileio.read_field(path)
    assert isinstance(back, G.ComplexField2P)
    np.testing.assert_array_equal(back.values, f.values)
    assert header["t"] == 4.0 and header["dtype"] == "<c16"
    assert path.read_bytes()[:8] == b"KGSFLD01"


def test_field_format_errors(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"NOTAFIELD")
    with pytest.raises(fileio.FormatError):
        fileio.read_field(tmp_path / "bad.bin")
    g = G.make_grid(1, 16, 2.0)
    p = fileio.write_field(tmp_path / "u.bin", G.zeros(g))
    p.write_bytes(p.read_bytes()[:-16])
    with pytest.raises(fileio.FormatError):
        fileio.read_field(p)


def test_csv_round_trip_is_exact(tmp_path):
    rows = [(0.1, 1 / 3), (1e-300, -2.5e10)]
    p = fileio.write_rows(tmp_path / "r.csv", ["a", "b"], rows)
    header, data = fileio.read_rows(p)
    assert header == ["a", "b"]
    np.testing.assert_array_equal(data, np.array(rows))


def test_series_csv_columns(tmp_path):
    s = DiagnosticSeries("x", [1.0, 10.0, 100.0], [1.0, 1.0, 1.0])
    header, data = fileio.read_rows(fileio.write_series(tmp_path / "s.csv", s))
    assert header == ["t", "integrand", "running_integral", "dt_weight"]
    assert data[-1, 2] == pytest.approx(np.log(100.0))


def test_json_handles_numpy(tmp_path):
    obj = {"a": np.float64(1.5), "b": np.arange(3), "c": np.bool_(True), "d": np.int64(7)}
    p = fileio.write_json(tmp_path / "o.json", obj)
    assert fileio.read_json(p) == {"a": 1.5, "b": [0, 1, 2], "c": True, "d": 7}
    with pytest.raises(TypeError):
        fileio.write_json(tmp_path / "x.json", {"x": object()})


def test_digests(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert fileio.digest(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert fileio.array_digest(np.zeros(3)) == fileio.array_digest(np.zeros(3))
    assert fileio.array_digest(np.zeros(3)) != fileio.array_digest(np.ones(3))


def test_series_validation():
    with pytest.raises(ValueError):
        DiagnosticSeries("x", [1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        DiagnosticSeries("x", [1.0, 2.0], [0.0])
    s = DiagnosticSeries("x", np.geomspace(1, 100, 50), np.geomspace(1, 100, 50) ** -2.0)
    assert s.fitted_slope() == pytest.approx(-2.0)
    assert DiagnosticSeries("x", [1.0], [1.0]).total == 0.0
