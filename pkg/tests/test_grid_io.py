import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibqtree import GridMap, default_prior, load_map, load_prior
from ibqtree.grid_io import (
    CellPrior,
    MalformedFile,
    NonPowerOfTwoSide,
    NonSquare,
    SizeMismatch,
    ValueOutOfRange,
    write_csv,
    write_pgm,
)


def test_p2_pgm_scales_by_maxval(tmp_path):
    f = tmp_path / "m.pgm"
    f.write_text("P2\n# tiny\n2 2\n255\n0 255\n0 0\n")
    m = load_map(f)
    assert m.side_exponent == 1
    assert m.occ.tolist() == [[0.0, 1.0], [0.0, 0.0]]


def test_p5_16bit(tmp_path):
    f = tmp_path / "m.pgm"
    pix = np.array([[0, 65535], [32768, 1]], dtype=">u2")
    f.write_bytes(b"P5\n2 2\n65535\n" + pix.tobytes())
    m = load_map(f)
    assert m.occ[0, 1] == 1.0
    assert m.occ[1, 0] == 32768 / 65535


def test_three_by_three_csv_rejected(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("0,0,0\n0,0,0\n0,0,0\n")
    with pytest.raises(NonPowerOfTwoSide):
        load_map(f)


def test_all_free_4x4_csv(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("\n".join(["0.0,0.0,0.0,0.0"] * 4) + "\n")
    m = load_map(f)
    assert m.side_exponent == 2
    assert not m.occ.any()


def test_rejects_every_non_power_of_two_side(tmp_path):
    accepted = []
    for side in range(1, 101):
        f = tmp_path / f"m{side}.csv"
        f.write_text("\n".join([",".join(["0"] * side)] * side) + "\n")
        try:
            load_map(f)
            accepted.append(side)
        except NonPowerOfTwoSide:
            pass
    assert accepted == [1, 2, 4, 8, 16, 32, 64]


@pytest.mark.parametrize("text,exc", [
    ("0,0\n0\n", NonSquare),
    ("0,0\n0,1.5\n", ValueOutOfRange),
    ("0,0\n0,-0.1\n", ValueOutOfRange),
    ("0,a\n0,0\n", MalformedFile),
    ("0,0\n0,nan\n", ValueOutOfRange),
])
def test_bad_csv(tmp_path, text, exc):
    f = tmp_path / "m.csv"
    f.write_text(text)
    with pytest.raises(exc):
        load_map(f)


def test_truncated_pgm(tmp_path):
    f = tmp_path / "m.pgm"
    f.write_text("P2\n2 2\n255\n0 255 0\n")
    with pytest.raises(MalformedFile):
        load_map(f)


def test_gridmap_is_read_only():
    m = GridMap(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        m.occ[0, 0] = 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_csv_round_trip_bit_identical(tmp_path_factory, ell, seed):
    rng = np.random.default_rng(seed)
    occ = rng.random((2**ell, 2**ell))
    occ[occ < 0.1] = 0.0
    m = GridMap(occ)
    f = tmp_path_factory.mktemp("rt") / "m.csv"
    write_csv(m, f)
    back = load_map(f)
    assert np.array_equal(back.occ, m.occ)


def test_pgm_round_trip_of_quantized_values(tmp_path):
    pix = np.arange(16).reshape(4, 4) * 4000
    m = GridMap(pix / 65535.0)
    write_pgm(m, tmp_path / "m.pgm")
    assert np.array_equal(load_map(tmp_path / "m.pgm").occ, m.occ)


@pytest.mark.parametrize("ell,value", [(1, 0.25), (2, 1 / 16), (7, 1 / 16384)])
def test_default_prior_uniform(ell, value):
    p = default_prior(GridMap(np.zeros((2**ell, 2**ell))))
    assert p.probs.shape == (2**ell, 2**ell)
    assert np.all(p.probs == value)


def test_prior_sidecar(tmp_path):
    m = GridMap(np.zeros((2, 2)))
    f = tmp_path / "p.csv"
    f.write_text("0.1,0.2\n0.3,0.4\n")
    assert np.allclose(load_prior(f, m).probs, [[0.1, 0.2], [0.3, 0.4]])
    f.write_text("0.1,0.2\n0.3,0.3\n")
    with pytest.raises(ValueError):
        load_prior(f, m)
    f.write_text("0.25,0.25,0.25,0.25\n" * 4)
    with pytest.raises(SizeMismatch):
        load_prior(f, m)


def test_prior_rejects_negative():
    with pytest.raises(ValueError):
        CellPrior(np.array([[0.5, 0.6], [0.0, -0.1]]))
