import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvc.grid import FieldFormatError, GridSpec, SampledField
from bvc.reports import build_points, make_report, tail_stabilized


@pytest.mark.parametrize("d,m", [(1, 8), (2, 16), (3, 8)])
def test_field_round_trip(tmp_path, d, m):
    grid = GridSpec(d, m, 3.5)
    f = SampledField(grid, np.random.default_rng(d).standard_normal(grid.shape))
    path = tmp_path / "f.bvc"
    f.save(path)
    g = SampledField.load(path)
    assert g.grid == grid and np.array_equal(g.values, f.values)
    assert len(path.read_bytes()) == 28 + 8 * grid.size


def test_field_format_errors():
    blob = SampledField(GridSpec(1, 8, 1.0), np.zeros(8)).to_bytes()
    with pytest.raises(FieldFormatError):
        SampledField.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FieldFormatError):
        SampledField.from_bytes(blob[:-8])
    with pytest.raises(FieldFormatError):
        SampledField.from_bytes(blob[:10])


@pytest.mark.parametrize("args", [(4, 8, 1.0), (1, 12, 1.0), (1, 4, 1.0), (2, 512, 1.0), (1, 8, -1.0)])
def test_grid_validation(args):
    with pytest.raises(ValueError):
        GridSpec(*args)


def test_grid_geometry():
    g = GridSpec(1, 16, 8.0)
    assert g.axis()[8] == 0.0 and g.h == 0.5
    assert g.periodic_distance(-3.75, 3.75) == pytest.approx(0.5)
    assert g.refine() == GridSpec(1, 32, 8.0)


@settings(max_examples=50)
@given(st.lists(st.floats(0.1, 10), min_size=3, max_size=30))
def test_tail_rule_accepts_sweeps_peaking_early(vals):
    key = np.linspace(0, 12, len(vals))
    ratios = np.array(vals)
    ratios[key > 8] = np.minimum(ratios[key > 8], ratios[key <= 8].max())
    assert tail_stabilized(key, ratios)


def test_tail_rule_rejects_late_growth():
    key = np.linspace(0, 12, 13)
    assert not tail_stabilized(key, 1 + 0.01 * key)
    assert tail_stabilized(key, 1 + 0.0001 * key)


def test_flags_and_csv():
    pts = build_points(1, 0.0, 1.0, [1.0, 2.0, 3.0, 4.0], [0.5, np.nan, 1.0, 1.0], [1.0, 1.0, 0.0, 1.0],
                       unresolved=[False, False, False, True])
    assert [p.flag for p in pts] == ["", "quadrature", "underflow", "resolution"]
    rep = make_report("k", pts)
    assert rep.empirical_C == 0.5
    lines = rep.to_csv().splitlines()
    assert lines[0] == "n,x_mag,t,eta,value,bound,ratio,flag" and len(lines) == 5
    with pytest.raises(ValueError):
        make_report("nope", pts)
