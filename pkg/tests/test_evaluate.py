"""Grid evaluation: shared-machinery orchestration and the CSV round trip."""

import numpy as np
import pytest

from estsel import (
    DataError,
    Dataset,
    EstimandSpec,
    evaluate_grid,
    read_grid_csv,
)
from estsel.evaluate import _resolve_grid


def _toy(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    logit = 0.8 * X[:, 0] - 0.5 * X[:, 1]
    e = 1 / (1 + np.exp(-logit))
    z = (rng.uniform(size=n) < e).astype(int)
    y = X.sum(axis=1) + z + rng.normal(size=n)
    return Dataset(covariates=X, treatment=z, outcome=y,
                   column_names=("x1", "x2", "x3"))


GRID = (np.linspace(0, 1, 4), np.linspace(0, 1, 4))


class TestResolveGrid:
    def test_default_is_441(self):
        c, d, specs = _resolve_grid(None)
        assert len(specs) == 441
        assert c.size == d.size == 21

    def test_tuple_axes(self):
        c, d, specs = _resolve_grid(GRID)
        assert len(specs) == 16
        assert specs[0] == EstimandSpec(0.0, 0.0)
        # row-major: d varies fastest
        assert specs[1].c == 0.0 and specs[1].d == pytest.approx(1 / 3)

    def test_explicit_list_must_be_lattice(self):
        ok = [EstimandSpec(c, d) for c in (0.0, 1.0) for d in (0.0, 1.0)]
        _, _, specs = _resolve_grid(ok)
        assert len(specs) == 4
        with pytest.raises(DataError, match="lattice"):
            _resolve_grid(ok[:3])
        with pytest.raises(DataError, match="order"):
            _resolve_grid(list(reversed(ok)))
        with pytest.raises(DataError, match="empty"):
            _resolve_grid([])


class TestEvaluateGrid:
    def test_full_run_fields(self):
        ge = evaluate_grid(_toy(), grid=GRID, B=100, B_boot=50, seed=11)
        assert ge.tau.shape == (16,)
        assert np.isfinite(ge.tau).all()
        assert np.isfinite(ge.p_mismatch).all()
        assert np.isfinite(ge.p_statbias).all()
        assert np.isfinite(ge.se_boot).all()
        assert (ge.se_boot > 0).all()
        assert ge.model is not None

    def test_skipped_components_are_nan(self):
        ge = evaluate_grid(
            _toy(), grid=GRID, B=100, seed=11,
            with_mismatch=False, with_statbias=False, with_bootstrap=False,
        )
        assert np.isnan(ge.p_mismatch).all()
        assert np.isnan(ge.p_statbias).all()
        assert np.isnan(ge.se_boot).all()
        assert np.isfinite(ge.tau).all()

    def test_lattice_and_spec_index(self):
        ge = evaluate_grid(_toy(), grid=GRID, B=100, B_boot=50, seed=11)
        lat = ge.lattice("tau")
        assert lat.shape == (4, 4)
        s = ge.spec_index(EstimandSpec(1.0, 1.0))
        assert ge.specs[s] == EstimandSpec(1.0, 1.0)
        assert lat[3, 3] == ge.tau[s]
        with pytest.raises(DataError):
            ge.spec_index(EstimandSpec(0.123, 0.456))

    def test_deterministic(self):
        a = evaluate_grid(_toy(), grid=GRID, B=100, B_boot=50, seed=11)
        b = evaluate_grid(_toy(), grid=GRID, B=100, B_boot=50, seed=11)
        np.testing.assert_array_equal(a.tau, b.tau)
        np.testing.assert_array_equal(a.p_mismatch, b.p_mismatch)
        np.testing.assert_array_equal(a.p_statbias, b.p_statbias)
        np.testing.assert_array_equal(a.se_boot, b.se_boot)


class TestCsvRoundTrip:
    def test_byte_identical_and_lossless(self, tmp_path):
        ge = evaluate_grid(_toy(), grid=GRID, B=100, B_boot=50, seed=11)
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        ge.to_csv(p1)
        ge.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

        back = read_grid_csv(p1)
        np.testing.assert_array_equal(back.tau, ge.tau)
        np.testing.assert_array_equal(back.p_mismatch, ge.p_mismatch)
        np.testing.assert_array_equal(back.se_boot, ge.se_boot)
        np.testing.assert_array_equal(back.c_values, ge.c_values)
        assert back.specs == ge.specs
        # and writing the reloaded table reproduces the original bytes
        p3 = tmp_path / "c.csv"
        back.to_csv(p3)
        assert p3.read_bytes() == p1.read_bytes()

    def test_read_validation(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("c,d,tau_hat\n0,0,1\n")
        with pytest.raises(DataError, match="missing columns"):
            read_grid_csv(p)

        header = "c,d,tau_hat,p_mismatch,p_statbias,se_boot,n_eff_treated,n_eff_control\n"
        p.write_text(header)
        with pytest.raises(DataError, match="empty"):
            read_grid_csv(p)

        p.write_text(header + "0,0,1,1,1,1,1,1\n0,1,1,1,1,1,1,1\n1,0,1,1,1,1,1,1\n")
        with pytest.raises(DataError, match="lattice"):
            read_grid_csv(p)

        rows = "1,0,1,1,1,1,1,1\n1,1,1,1,1,1,1,1\n0,0,1,1,1,1,1,1\n0,1,1,1,1,1,1,1\n"
        p.write_text(header + rows)
        with pytest.raises(DataError, match="order"):
            read_grid_csv(p)
