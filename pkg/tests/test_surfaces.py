"""Surface smoothing, kriging behaviors, contour bands, and selection."""

import numpy as np
import pytest

from estsel import (
    DataError,
    EstimandSpec,
    Surface,
    default_levels,
    extract_bands,
    krige_se,
    select_estimands,
    smooth_pvalues,
)
from estsel.surfaces import _iso_contours


class FakeGrid:
    def __init__(self, c, d, **lattices):
        self.c_values = np.asarray(c, dtype=np.float64)
        self.d_values = np.asarray(d, dtype=np.float64)
        self._lat = {k: np.asarray(v, dtype=np.float64) for k, v in lattices.items()}

    def lattice(self, which):
        return self._lat[which]


def fine_axes(n=101):
    ax = np.linspace(0.0, 1.0, n)
    return ax, ax


class TestSmoothing:
    def test_spline_interpolates_nodes_and_clamps(self):
        c = np.linspace(0, 1, 5)
        rng = np.random.default_rng(0)
        P = rng.uniform(size=(5, 5))
        P[2, 2] = 1.0  # force potential overshoot next to a high node
        grid = FakeGrid(c, c, p_mismatch=P)
        s = smooth_pvalues(grid, "mismatch", resolution=9)
        # resolution 9 fine grid contains the 5 nodes exactly
        np.testing.assert_allclose(s.values[::2, ::2], P, atol=1e-12)
        assert s.values.min() >= 0.0 and s.values.max() <= 1.0

    def test_requires_4x4(self):
        c3 = np.linspace(0, 1, 3)
        grid = FakeGrid(c3, c3, p_mismatch=np.zeros((3, 3)))
        with pytest.raises(DataError, match="4x4"):
            smooth_pvalues(grid, "mismatch")

    def test_unknown_surface_name(self):
        c = np.linspace(0, 1, 4)
        grid = FakeGrid(c, c, p_mismatch=np.zeros((4, 4)))
        with pytest.raises(DataError):
            smooth_pvalues(grid, "bogus")


class TestKriging:
    def test_constant_field_reproduced_exactly(self):
        c = np.linspace(0, 1, 5)
        grid = FakeGrid(c, c, se_boot=np.full((5, 5), 0.17))
        s = krige_se(grid, resolution=20)
        np.testing.assert_allclose(s.values, 0.17, atol=1e-10)

    def test_zero_nugget_exact_at_nodes(self):
        c = np.linspace(0, 1, 5)
        rng = np.random.default_rng(1)
        Z = 0.1 + 0.05 * rng.uniform(size=(5, 5))
        grid = FakeGrid(c, c, se_boot=Z)
        s = krige_se(grid, resolution=9, variogram=(0.0, 0.01, 0.5))
        np.testing.assert_allclose(s.values[::2, ::2], Z, atol=1e-6)

    def test_weight_sums_near_one(self):
        c = np.linspace(0, 1, 6)
        rng = np.random.default_rng(2)
        grid = FakeGrid(c, c, se_boot=0.2 + 0.1 * rng.uniform(size=(6, 6)))
        s = krige_se(grid, resolution=30)
        if s.metadata["interpolator"] == "ordinary-kriging":
            assert s.metadata["max_weight_sum_dev"] < 1e-8

    def test_nan_cells_ignored(self):
        c = np.linspace(0, 1, 5)
        rng = np.random.default_rng(3)
        Z = 0.2 + 0.1 * rng.uniform(size=(5, 5))
        Z[0, 0] = np.nan
        grid = FakeGrid(c, c, se_boot=Z)
        s = krige_se(grid, resolution=15)
        assert np.isfinite(s.values).all()

    def test_too_few_finite_values(self):
        c = np.linspace(0, 1, 5)
        Z = np.full((5, 5), np.nan)
        Z[0, 0] = Z[4, 4] = 0.1
        grid = FakeGrid(c, c, se_boot=Z)
        with pytest.raises(DataError, match="finite"):
            krige_se(grid)


class TestMarchingSquares:
    def test_vertical_line_for_linear_field(self):
        x = np.linspace(0, 1, 61)
        y = np.linspace(0, 1, 61)
        V = np.broadcast_to(x[:, None], (61, 61)).copy()  # value = c coordinate
        lines = _iso_contours(x, y, V, 0.5)
        pts = np.concatenate([np.asarray(l) for l in lines])
        np.testing.assert_allclose(pts[:, 0], 0.5, atol=1e-9)
        # the contour spans the full d range
        assert pts[:, 1].min() == pytest.approx(0.0, abs=1e-9)
        assert pts[:, 1].max() == pytest.approx(1.0, abs=1e-9)

    def test_circle_radius_recovered(self):
        x = np.linspace(0, 1, 201)
        y = np.linspace(0, 1, 201)
        X, Y = np.meshgrid(x, y, indexing="ij")
        V = np.sqrt((X - 0.5) ** 2 + (Y - 0.5) ** 2)
        lines = _iso_contours(x, y, V, 0.25)
        pts = np.concatenate([np.asarray(l) for l in lines])
        radii = np.sqrt((pts[:, 0] - 0.5) ** 2 + (pts[:, 1] - 0.5) ** 2)
        cell = 1.0 / 200
        assert np.abs(radii - 0.25).max() < 2 * cell

    def test_closed_loop_chains(self):
        x = np.linspace(0, 1, 101)
        X, Y = np.meshgrid(x, x, indexing="ij")
        V = np.sqrt((X - 0.5) ** 2 + (Y - 0.5) ** 2)
        lines = _iso_contours(x, x, V, 0.2)
        assert len(lines) == 1
        line = np.asarray(lines[0])
        np.testing.assert_allclose(line[0], line[-1], atol=1e-12)

    @pytest.mark.parametrize("level", [0.09, 0.3])
    def test_matches_skimage_find_contours(self, level):
        measure = pytest.importorskip("skimage.measure")
        x = np.linspace(0.0, 1.0, 21)
        y = np.linspace(0.0, 1.0, 17)
        X, Y = np.meshgrid(x, y, indexing="ij")
        V = (X - 0.4) ** 2 + (Y - 0.55) ** 2  # bowl: loop at 0.09, arcs at 0.3
        ours = _iso_contours(x, y, V, level)
        dx, dy = x[1] - x[0], y[1] - y[0]
        theirs = [
            np.column_stack([x[0] + c[:, 0] * dx, y[0] + c[:, 1] * dy])
            for c in measure.find_contours(V, level)
        ]
        assert len(ours) == len(theirs)
        a, b = np.vstack(ours), np.vstack(theirs)
        gaps_ab = np.sqrt(((a[:, None] - b[None]) ** 2).sum(-1)).min(axis=1)
        gaps_ba = np.sqrt(((b[:, None] - a[None]) ** 2).sum(-1)).min(axis=1)
        assert max(gaps_ab.max(), gaps_ba.max()) < 1e-8


class TestBands:
    def surface_from(self, V):
        n = V.shape[0]
        ax = np.linspace(0, 1, n)
        return Surface(c=ax, d=ax, values=V, kind="p_mismatch")

    def test_single_level_gives_two_bands(self):
        V = np.broadcast_to(np.linspace(0, 1, 41)[:, None], (41, 41)).copy()
        bands = extract_bands(self.surface_from(V), [0.5])
        assert len(bands) == 2
        assert (bands[0].lower, bands[0].upper) == (0.0, 0.5)
        assert (bands[1].lower, bands[1].upper) == (0.5, 1.0)
        assert not bands[0].empty and not bands[1].empty
        # masks partition the lattice
        assert (bands[0].mask ^ bands[1].mask).all()

    def test_constant_field_single_nonempty_band(self):
        V = np.full((41, 41), 0.2)
        bands = extract_bands(self.surface_from(V), [0.05, 0.1])
        nonempty = [b for b in bands if not b.empty]
        assert len(nonempty) == 1
        assert (nonempty[0].lower, nonempty[0].upper) == (0.1, 1.0)

    def test_default_levels_cover_unit_interval(self):
        levels = default_levels()
        assert levels[0] == 0.0 and levels[-1] == 1.0
        assert all(a < b for a, b in zip(levels, levels[1:]))
        V = np.broadcast_to(np.linspace(0, 1, 41)[:, None], (41, 41)).copy()
        bands = extract_bands(self.surface_from(V))
        assert len(bands) == len(levels) - 1
        total = np.zeros((41, 41), dtype=int)
        for b in bands:
            total += b.mask
        np.testing.assert_array_equal(total, 1)

    def test_first_band_closed_at_zero(self):
        V = np.zeros((41, 41))
        bands = extract_bands(self.surface_from(V), [0.05, 0.1])
        assert not bands[0].empty
        assert bands[0].mask.all()

    def test_levels_validation(self):
        V = np.zeros((5, 5))
        with pytest.raises(DataError):
            extract_bands(self.surface_from(V), [0.5, 0.2])
        with pytest.raises(DataError):
            extract_bands(self.surface_from(V), [0.5, 1.5])


class TestSelection:
    def axes(self, n=41):
        return np.linspace(0.0, 1.0, n)

    def make_surfaces(self, pm, sb, se):
        ax = self.axes(pm.shape[0])
        return (
            Surface(c=ax, d=ax, values=pm, kind="p_mismatch"),
            Surface(c=ax, d=ax, values=sb, kind="p_statbias"),
            Surface(c=ax, d=ax, values=se, kind="se_boot"),
        )

    def test_min_se_within_band_intersection(self):
        n = 41
        ax = self.axes(n)
        CC, DD = np.meshgrid(ax, ax, indexing="ij")
        pm = CC  # mismatch p rises with c
        sb = np.full((n, n), 0.2)
        se = (CC - 0.3) ** 2 + (DD - 0.7) ** 2  # unique minimum at (0.3, 0.7)
        m, s, v = self.make_surfaces(pm, sb, se)
        sel = select_estimands(m, s, v, mismatch_levels=[0.0, 1.0])
        assert len(sel.entries) == 1
        e = sel.entries[0]
        assert (e.spec.c, e.spec.d) == (pytest.approx(0.3), pytest.approx(0.7))

    def test_highest_statbias_band_preferred(self):
        """Two statistical-bias bands intersect the mismatch band; the
        spec must come from the higher one even if the lower band holds a
        smaller SE."""
        n = 41
        ax = self.axes(n)
        CC, DD = np.meshgrid(ax, ax, indexing="ij")
        pm = np.full((n, n), 0.5)
        sb = np.where(CC >= 0.5, 0.35, 0.25)  # bands (0.3,0.4] and (0.2,0.3]
        se = np.where(CC >= 0.5, 1.0, 0.5) + DD  # lower band's SEs are smaller
        m, s, v = self.make_surfaces(pm, sb, se)
        sel = select_estimands(
            m,
            s,
            v,
            mismatch_levels=[0.0, 1.0],
            statbias_levels=[0.2, 0.3, 0.4],
        )
        assert len(sel.entries) == 1
        e = sel.entries[0]
        assert e.statbias_lower == pytest.approx(0.3)
        assert e.spec.c >= 0.5  # from the high-band region despite larger SE

    def test_tie_breaks_toward_origin_then_lexicographic(self):
        n = 21
        pm = np.full((n, n), 0.5)
        sb = np.full((n, n), 0.5)
        se = np.ones((n, n))  # all tied
        m, s, v = self.make_surfaces(pm, sb, se)
        sel = select_estimands(m, s, v, mismatch_levels=[0.0, 1.0])
        e = sel.entries[0]
        assert (e.spec.c, e.spec.d) == (0.0, 0.0)

    def test_recommended_band_flag(self):
        n = 41
        ax = self.axes(n)
        CC, _ = np.meshgrid(ax, ax, indexing="ij")
        pm = CC * 0.2  # spans several low bands
        sb = np.full((n, n), 0.5)
        se = np.ones((n, n)) + CC
        m, s, v = self.make_surfaces(pm, sb, se)
        sel = select_estimands(m, s, v)
        rec = sel.recommended
        assert rec is not None
        assert (rec.mismatch_lower, rec.mismatch_upper) == (0.05, 0.10)

    def test_axis_mismatch_rejected(self):
        n = 21
        pm = np.full((n, n), 0.5)
        m, s, v = self.make_surfaces(pm, pm, pm)
        other = Surface(
            c=np.linspace(0, 1, 31),
            d=np.linspace(0, 1, 31),
            values=np.full((31, 31), 0.5),
            kind="se_boot",
        )
        with pytest.raises(DataError):
            select_estimands(m, s, other)

    def test_entries_json_round_trips(self):
        n = 21
        pm = np.full((n, n), 0.07)
        sb = np.full((n, n), 0.5)
        se = np.ones((n, n))
        m, s, v = self.make_surfaces(pm, sb, se)
        sel = select_estimands(m, s, v)
        blob = sel.to_json_dict()
        assert blob["entries"][0]["mismatch_band"] == [0.05, 0.10]
        assert blob["entries"][0]["recommended"] is True


class TestEstimandGridIntegration:
    def test_interpolate_lattice_unclamped(self):
        from estsel import interpolate_lattice

        c = np.linspace(0, 1, 5)
        rng = np.random.default_rng(4)
        tau = rng.normal(size=(5, 5)) * 3.0
        grid = FakeGrid(c, c, tau=tau)
        s = interpolate_lattice(grid, "tau", resolution=9)
        np.testing.assert_allclose(s.values[::2, ::2], tau, atol=1e-10)

    def test_raw_surface_passthrough(self):
        from estsel import raw_surface

        c = np.linspace(0, 1, 4)
        P = np.random.default_rng(5).uniform(size=(4, 4))
        grid = FakeGrid(c, c, p_statbias=P)
        s = raw_surface(grid, "statbias")
        np.testing.assert_array_equal(s.values, P)
        assert s.metadata["interpolator"] == "none"

    def test_spec_on_selection_lies_on_fine_axes(self):
        ax = np.linspace(0, 1, 11)
        CC, DD = np.meshgrid(ax, ax, indexing="ij")
        pm = np.full((11, 11), 0.5)
        sb = np.full((11, 11), 0.5)
        se = (CC - 0.42) ** 2 + (DD - 0.58) ** 2
        m = Surface(c=ax, d=ax, values=pm, kind="p_mismatch")
        s = Surface(c=ax, d=ax, values=sb, kind="p_statbias")
        v = Surface(c=ax, d=ax, values=se, kind="se_boot")
        sel = select_estimands(m, s, v, mismatch_levels=[0.0, 1.0])
        e = sel.entries[0]
        assert e.spec.c in ax and e.spec.d in ax
        assert isinstance(e.spec, EstimandSpec)

    def test_to_table_lists_every_entry_and_flags_recommendation(self):
        ax = np.linspace(0, 1, 11)
        CC, DD = np.meshgrid(ax, ax, indexing="ij")
        m = Surface(c=ax, d=ax, values=np.full((11, 11), 0.07), kind="p_mismatch")
        s = Surface(c=ax, d=ax, values=np.full((11, 11), 0.5), kind="p_statbias")
        v = Surface(c=ax, d=ax, values=CC + DD, kind="se_boot")
        sel = select_estimands(m, s, v)
        table = sel.to_table()
        lines = table.splitlines()
        # header + separator + one row per entry
        assert len(lines) == 2 + len(sel.entries)
        assert lines[0].startswith("mismatch band")
        assert sum("<- recommended" in ln for ln in lines) == 1
        assert "(0.05, 0.1]" in table
