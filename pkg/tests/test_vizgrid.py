import numpy as np
import pytest

from moluq.conformers import Conformer, Ensemble
from moluq.qoi import volume
from moluq.vizgrid import (
    GridFormatError,
    ScalarGrid,
    colormap_export,
    grid_statistics,
    occupancy_map,
    read_grid,
    write_grid,
)
from conftest import make_structure

GOLDEN_1x1x1 = """object 1 class gridpositions counts 1 1 1
origin 0.25 0.25 0.25
delta 0.5 0 0
delta 0 0.5 0
delta 0 0 0.5
object 2 class gridconnections counts 1 1 1
object 3 class array type double rank 0 items 1 data follows
0.5
attribute "dep" string "positions"
"""


def unit_grid(values, dims, spacing=1.0):
    return ScalarGrid(origin=np.zeros(3), spacing=spacing, dims=dims,
                      values=np.asarray(values, dtype=float))


class TestScalarGrid:
    def test_value_count_enforced(self):
        with pytest.raises(ValueError):
            unit_grid([1.0, 2.0], (1, 1, 1))

    def test_x_fastest_indexing(self):
        g = unit_grid(np.arange(8.0), (2, 2, 2))
        assert g.value_at(1, 0, 0) == 1.0
        assert g.value_at(0, 1, 0) == 2.0
        assert g.value_at(0, 0, 1) == 4.0
        cube = g.as_3d()
        assert cube[1, 0, 0] == 1.0 and cube[0, 0, 1] == 4.0


class TestWriteGrid:
    def test_golden_fixture_bytes(self):
        g = ScalarGrid(origin=np.array([0.25, 0.25, 0.25]), spacing=0.5,
                       dims=(1, 1, 1), values=np.array([0.5]))
        assert write_grid(g) == GOLDEN_1x1x1

    def test_roundtrip_through_reader(self):
        rng = np.random.default_rng(0)
        g = unit_grid(rng.random(24), (2, 3, 4), spacing=0.7)
        back = read_grid(write_grid(g))
        assert back.dims == g.dims
        assert back.spacing == pytest.approx(g.spacing)
        np.testing.assert_allclose(back.values, g.values, rtol=1e-5)

    def test_byte_deterministic(self):
        g = unit_grid(np.linspace(0, 1, 6), (3, 2, 1))
        assert write_grid(g) == write_grid(g)

    def test_reader_rejects_dim_mismatch(self):
        text = GOLDEN_1x1x1.replace("items 1 data", "items 2 data")
        with pytest.raises(GridFormatError, match="disagree"):
            read_grid(text)

    def test_reader_rejects_garbage(self):
        with pytest.raises(GridFormatError):
            read_grid("object 1 class gridpositions counts x y z\n")


class TestOccupancy:
    def _ensemble(self, offsets, radius=1.5):
        s = make_structure([[0.0, 0.0, 0.0]], vdw_radius=radius)
        confs = tuple(Conformer(np.array([o], dtype=float), i)
                      for i, o in enumerate(offsets))
        return Ensemble(source=s, conformers=confs, seed=0)

    def test_identical_conformers_binary(self):
        e = self._ensemble([[0, 0, 0]] * 3)
        g = occupancy_map(e, spacing=0.5)
        assert set(np.unique(g.values)) <= {0.0, 1.0}

    def test_half_occupancy_voxel(self):
        e = self._ensemble([[0, 0, 0], [40.0, 0, 0]])
        g = occupancy_map(e, spacing=0.5)
        # a voxel inside the first conformer's sphere only is covered half the time
        assert np.isclose(g.values, 0.5).any()
        assert np.all((g.values >= 0.0) & (g.values <= 1.0))

    def test_integral_bounds_intersection_volume(self):
        e = self._ensemble([[0, 0, 0], [0.4, 0, 0]])
        spacing = 0.3
        g = occupancy_map(e, spacing=spacing)
        integral = g.values.sum() * spacing**3
        # intersection of the two spheres is contained in both, so the
        # occupancy integral must be at least ... use the smaller sphere count
        inter = volume(np.array([[0.0, 0, 0]]), [1.1], spacing=spacing)
        assert integral >= inter

    def test_fixed_radius_mode(self):
        e = self._ensemble([[0, 0, 0]])
        g = occupancy_map(e, spacing=0.5, radius_mode=2.0)
        v = g.values.sum() * 0.5**3
        assert v == pytest.approx(4 / 3 * np.pi * 8.0, rel=0.05)

    def test_adding_inside_conformer_shifts_voxels_by_at_most_one_count(self):
        # when the new conformer stays inside the existing bounds the grids
        # align and every voxel moves by at most 1/(N+1)
        offsets3 = [[0, 0, 0], [0.5, 0, 0], [-0.5, 0, 0]]
        offsets4 = offsets3 + [[0.25, 0.0, 0.0]]
        g3 = occupancy_map(self._ensemble(offsets3), spacing=0.5)
        g4 = occupancy_map(self._ensemble(offsets4), spacing=0.5)
        assert g3.dims == g4.dims and np.allclose(g3.origin, g4.origin)
        assert np.abs(g4.values - g3.values).max() <= 1.0 / 4 + 1e-12

    def test_requires_accepted_conformer(self):
        s = make_structure([[0.0, 0.0, 0.0]])
        e = Ensemble(source=s, conformers=(
            Conformer(s.positions(), 0, accepted=False, rejection_reason="clash"),
        ), seed=0)
        with pytest.raises(ValueError):
            occupancy_map(e, spacing=0.5)


class TestGridStatistics:
    def test_identical_grids_zero_std(self):
        g = unit_grid([1.0, 2.0], (2, 1, 1))
        mean, std = grid_statistics([g, g, g])
        np.testing.assert_array_equal(mean.values, g.values)
        np.testing.assert_array_equal(std.values, 0.0)

    def test_two_point_stats(self):
        a = unit_grid([0.0], (1, 1, 1))
        b = unit_grid([2.0], (1, 1, 1))
        mean, std = grid_statistics([a, b])
        assert mean.values[0] == 1.0
        assert std.values[0] == 1.0

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(1)
        grids = [unit_grid(rng.random(12), (3, 2, 2)) for _ in range(5)]
        mean, std = grid_statistics(grids)
        stack = np.stack([g.values for g in grids])
        for v in range(12):
            col = stack[:, v]
            assert mean.values[v] == pytest.approx(col.mean())
            assert std.values[v] == pytest.approx(col.std())

    def test_geometry_mismatch_rejected(self):
        a = unit_grid([0.0], (1, 1, 1))
        b = unit_grid([0.0, 1.0], (2, 1, 1))
        with pytest.raises(ValueError):
            grid_statistics([a, b])


class TestColormap:
    def test_min_is_first_anchor(self):
        csv_text, _ = colormap_export([1, 2], [0.0, 10.0], palette="green_white_red")
        rows = csv_text.strip().splitlines()[1:]
        assert rows[0].split(",")[2:] == ["0", "255", "0"]
        assert rows[1].split(",")[2:] == ["255", "0", "0"]

    def test_midpoint_is_white(self):
        csv_text, _ = colormap_export([1, 2, 3], [0.0, 5.0, 10.0])
        mid = csv_text.strip().splitlines()[2].split(",")[2:]
        assert mid == ["255", "255", "255"]

    def test_hand_interpolated_rows(self):
        csv_text, _ = colormap_export([1, 2, 3], [0.0, 2.5, 10.0])
        row = csv_text.strip().splitlines()[2].split(",")
        # fraction 0.25 -> halfway along the green->white segment
        assert row[2:] == ["128", "255", "128"]

    def test_constant_values_map_to_midpoint(self):
        csv_text, _ = colormap_export([1, 2], [3.0, 3.0])
        rows = [r.split(",")[2:] for r in csv_text.strip().splitlines()[1:]]
        assert rows[0] == rows[1] == ["255", "255", "255"]

    def test_monotone_per_channel_segment(self):
        vals = np.linspace(0, 1, 11)
        csv_text, _ = colormap_export(range(11), vals, palette="rainbow")
        rows = [tuple(int(x) for x in r.split(",")[2:])
                for r in csv_text.strip().splitlines()[1:]]
        blues = [r[2] for r in rows]
        assert blues == sorted(blues)  # blue channel rises toward high values

    def test_script_contains_pymol_commands(self):
        _, script = colormap_export([7], [1.0])
        assert "set_color" in script and "color moluq_c0, id 7" in script

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            colormap_export([1], [np.nan])
