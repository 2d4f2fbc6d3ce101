import numpy as np
import pytest

from nfcal.forward_model import DirectionGrid, FarFieldPattern, FieldGrid
from nfcal.formats import (FIELD_MAGIC, FormatError, field_grid_bytes, field_grid_csv,
                           field_grid_from_bytes, field_grid_from_csv, header_digest, pattern_csv,
                           pattern_from_csv, read_field_grid, read_spectrum, residual_csv,
                           scenario_hash, spectrum_bytes, spectrum_from_bytes, write_field_grid,
                           write_spectrum)
from nfcal.transforms import nfff


@pytest.fixture
def grid():
    rng = np.random.default_rng(4)
    v = rng.normal(size=(9, 7)) + 1j * rng.normal(size=(9, 7))
    return FieldGrid(0.041, -0.01, -0.008, 0.002, 0.0019, 9, 7, 73e9, v)


def test_field_binary_round_trip(grid, tmp_path):
    h = scenario_hash({"a": 1})
    path = tmp_path / "g.fgrid"
    write_field_grid(path, grid, h)
    back = read_field_grid(path)
    assert np.array_equal(back.samples, grid.samples)
    assert (back.z_plane, back.x0, back.y0, back.dx, back.dy) == \
        (grid.z_plane, grid.x0, grid.y0, grid.dx, grid.dy)
    assert back.frequency == grid.frequency
    assert header_digest(path) == h
    blob = path.read_bytes()
    assert blob[:8] == FIELD_MAGIC
    assert len(blob) == 8 + 4 + 6 * 8 + 2 * 8 + 16 + 16 * 63


def test_spectrum_round_trip(grid, tmp_path):
    s = nfff(grid, pad_factor=2)
    write_spectrum(tmp_path / "s.nfs", s)
    back = read_spectrum(tmp_path / "s.nfs")
    assert np.array_equal(back.values, s.values)
    assert np.allclose(back.kx, s.kx, rtol=1e-14)
    assert np.allclose(back.ky, s.ky, rtol=1e-14)


def test_bad_blobs(grid):
    blob = field_grid_bytes(grid)
    with pytest.raises(FormatError):
        field_grid_from_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError):
        field_grid_from_bytes(blob[:-16])
    with pytest.raises(FormatError):
        field_grid_from_bytes(blob[:20])
    with pytest.raises(FormatError):
        spectrum_from_bytes(blob)
    s = spectrum_bytes(nfff(grid, pad_factor=1))
    with pytest.raises(FormatError):
        field_grid_from_bytes(s)


def test_scenario_hash_key_order():
    assert scenario_hash({"a": 1, "b": [1, 2]}) == scenario_hash({"b": [1, 2], "a": 1})
    assert scenario_hash({"a": 1}) != scenario_hash({"a": 2})
    assert len(scenario_hash({})) == 16


def test_field_csv_round_trip(grid):
    back = field_grid_from_csv(field_grid_csv(grid, "hello"))
    assert np.allclose(back.samples, grid.samples, rtol=0, atol=1e-15)
    assert back.descriptor().shape == grid.shape if hasattr(grid, "shape") else True
    assert back.dx == grid.dx and back.ny == grid.ny


def test_pattern_csv_round_trip():
    g = DirectionGrid.regular((-4, 4), (-2, 2), 1.0)
    rng = np.random.default_rng(0)
    p = FarFieldPattern(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), 73e9)
    back = pattern_from_csv(pattern_csv(p))
    assert back.directions.is_regular()
    assert np.array_equal(back.values, p.values)
    pts = DirectionGrid.points([(1.0, 2.0), (3.0, -4.0)])
    q = FarFieldPattern(pts, np.array([1 + 1j, 2 - 1j]), 73e9)
    back = pattern_from_csv(pattern_csv(q))
    assert np.array_equal(back.values.ravel(), q.values.ravel())


def test_residual_csv_nan():
    g = DirectionGrid.regular((-1, 1), (-1, 1), 1.0)
    r = np.zeros(g.shape)
    r[0, 0] = np.nan
    lines = residual_csv(g, r, "c").splitlines()
    assert lines[1] == "alpha_deg,beta_deg,residual_deg"
    assert len(lines) == 2 + 9
    assert any("nan" in line for line in lines)
