"""Dataset ingestion, schema validation, and balance reporting."""

import numpy as np
import pytest

from estsel import (
    ColumnSchema,
    DataError,
    Dataset,
    EstimandSpec,
    compute_smd,
    compute_weights,
    ingest_csv,
)


def write_csv(path, text):
    path.write_text(text)
    return str(path)


BASIC = """z,y,x1,x2
1,2.0,0.5,1.0
0,1.0,-0.5,2.0
1,3.0,1.5,0.0
0,0.5,0.25,1.5
0,1.5,-1.0,0.75
"""


class TestSchema:
    def test_categorical_must_be_subset_of_covariates(self):
        with pytest.raises(DataError, match="categorical"):
            ColumnSchema(
                treatment="z", outcome="y", covariates=("a",), categorical=("b",)
            )

    def test_duplicate_covariates_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            ColumnSchema(treatment="z", outcome="y", covariates=("a", "a"))


class TestDataset:
    def test_validates_treatment_binary(self):
        with pytest.raises(DataError, match="0/1"):
            Dataset(
                covariates=np.zeros((3, 1)),
                treatment=np.array([0, 1, 2]),
                outcome=np.zeros(3),
                column_names=("a",),
            )

    def test_requires_both_arms(self):
        with pytest.raises(DataError, match="arm"):
            Dataset(
                covariates=np.zeros((3, 1)),
                treatment=np.array([1, 1, 1]),
                outcome=np.zeros(3),
                column_names=("a",),
            )

    def test_arrays_read_only(self):
        d = Dataset(
            covariates=np.zeros((2, 1)),
            treatment=np.array([0, 1]),
            outcome=np.zeros(2),
            column_names=("a",),
        )
        with pytest.raises(ValueError):
            d.covariates[0, 0] = 1.0

    def test_subset_and_column(self):
        d = Dataset(
            covariates=np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 0.0]]),
            treatment=np.array([0, 1, 0, 1]),
            outcome=np.array([0.0, 1.0, 2.0, 3.0]),
            column_names=("a", "b"),
        )
        sub = d.subset(np.array([0, 1, 3]))
        assert sub.n == 3 and sub.n_treated == 2
        with pytest.raises(DataError, match="arm"):
            d.subset(np.array([1, 3]))  # all-treated subset is rejected
        np.testing.assert_array_equal(d.column("b"), [10.0, 20.0, 30.0, 0.0])
        with pytest.raises(DataError):
            d.column("missing")


class TestIngest:
    def test_basic_roundtrip(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", BASIC)
        schema = ColumnSchema(treatment="z", outcome="y", covariates=("x1", "x2"))
        d = ingest_csv(path, schema)
        assert d.n == 5 and d.n_treated == 2
        np.testing.assert_array_equal(d.column("x2"), [1.0, 2.0, 0.0, 1.5, 0.75])

    def test_level_recoding(self, tmp_path):
        text = "t,out,x\nRHC,Yes,1.0\nNo RHC,No,2.0\nRHC,No,3.0\nNo RHC,Yes,0.5\n"
        path = write_csv(tmp_path / "d.csv", text)
        schema = ColumnSchema(
            treatment="t",
            outcome="out",
            covariates=("x",),
            treatment_levels=("No RHC", "RHC"),
            outcome_levels=("Yes", "No"),
        )
        d = ingest_csv(path, schema)
        np.testing.assert_array_equal(d.treatment, [1, 0, 1, 0])
        np.testing.assert_array_equal(d.outcome, [0.0, 1.0, 1.0, 0.0])

    def test_unexpected_level_errors(self, tmp_path):
        text = "t,out,x\nRHC,1,1.0\nmaybe,0,2.0\n"
        path = write_csv(tmp_path / "d.csv", text)
        schema = ColumnSchema(
            treatment="t",
            outcome="out",
            covariates=("x",),
            treatment_levels=("No RHC", "RHC"),
        )
        with pytest.raises(DataError, match="maybe"):
            ingest_csv(path, schema)

    def test_categorical_expansion_alphabetical_first_dropped(self, tmp_path):
        text = "z,y,color\n0,1.0,red\n1,2.0,blue\n0,0.0,green\n1,1.5,red\n"
        path = write_csv(tmp_path / "d.csv", text)
        schema = ColumnSchema(
            treatment="z", outcome="y", covariates=("color",), categorical=("color",)
        )
        d = ingest_csv(path, schema)
        # levels blue < green < red; blue is the reference level
        assert d.column_names == ("color=green", "color=red")
        np.testing.assert_array_equal(d.column("color=red"), [1.0, 0.0, 0.0, 1.0])

    def test_nonnumeric_undeclared_covariate_errors(self, tmp_path):
        text = "z,y,s\n0,1.0,hi\n1,2.0,lo\n"
        path = write_csv(tmp_path / "d.csv", text)
        schema = ColumnSchema(treatment="z", outcome="y", covariates=("s",))
        with pytest.raises(DataError, match="categorical"):
            ingest_csv(path, schema)

    def test_missing_rows_dropped(self, tmp_path):
        text = "z,y,x\n0,1.0,1.0\n1,,2.0\n1,2.0,3.0\n0,0.5,\n0,1.0,4.0\n"
        path = write_csv(tmp_path / "d.csv", text)
        schema = ColumnSchema(treatment="z", outcome="y", covariates=("x",))
        d = ingest_csv(path, schema)
        assert d.n == 3

    def test_missing_column_errors(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", BASIC)
        schema = ColumnSchema(treatment="z", outcome="y", covariates=("nope",))
        with pytest.raises(DataError):
            ingest_csv(path, schema)


class TestSMD:
    def make_data(self):
        X = np.array(
            [[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0], [7.0, 5.0], [9.0, 5.0]]
        )
        z = np.array([0, 0, 0, 1, 1, 1])
        return Dataset(
            covariates=X, treatment=z, outcome=np.zeros(6), column_names=("a", "con")
        )

    def test_unweighted_smd_hand_value(self):
        d = self.make_data()
        report = compute_smd(d)
        # treated mean 20/3, control mean 2; variances (ddof=1): treated
        # var([4,7,9]) = 6.333..., control var([1,2,3]) = 1
        mean_diff = 20.0 / 3.0 - 2.0
        denom = np.sqrt((np.var([4.0, 7.0, 9.0], ddof=1) + 1.0) / 2.0)
        row = report.to_frame().set_index("covariate").loc["a"]
        assert row["smd_unweighted"] == pytest.approx(mean_diff / denom, rel=1e-12)

    def test_zero_variance_flagged_nan(self):
        d = self.make_data()
        report = compute_smd(d)
        assert report.zero_variance[report.covariates.index("con")]
        row = report.to_frame().set_index("covariate").loc["con"]
        assert np.isnan(row["smd_weighted"])
        # summary statistics ignore the NaN column
        assert np.isfinite(report.mean_abs_smd)

    def test_weighted_smd_moves_toward_balance(self):
        rng = np.random.default_rng(8)
        n = 400
        x = rng.normal(size=(n, 1))
        e = 1.0 / (1.0 + np.exp(-1.2 * x[:, 0]))
        z = (rng.uniform(size=n) < e).astype(np.int64)
        d = Dataset(
            covariates=x, treatment=z, outcome=np.zeros(n), column_names=("x",)
        )
        ws = compute_weights(np.clip(e, 1e-6, 1 - 1e-6), z, EstimandSpec(0.0, 0.0))
        before = compute_smd(d)
        after = compute_smd(d, ws)
        assert after.mean_abs_smd < before.mean_abs_smd

    def test_rows_sorted_by_weighted_magnitude(self):
        rng = np.random.default_rng(9)
        n = 60
        X = rng.normal(size=(n, 3))
        X[:, 2] += 2.5 * rng.permutation(np.repeat([0, 1], n // 2))
        z = np.repeat([0, 1], n // 2)
        d = Dataset(
            covariates=X, treatment=z, outcome=np.zeros(n), column_names=("a", "b", "c")
        )
        frame = compute_smd(d).to_frame()
        mags = frame["smd_weighted"].abs().to_numpy()
        finite = mags[np.isfinite(mags)]
        assert (np.diff(finite) <= 1e-15).all()

    def test_accepts_plain_array_weights(self):
        d = self.make_data()
        report = compute_smd(d, np.ones(6))
        frame_u = compute_smd(d).to_frame()
        frame_w = report.to_frame()
        a_u = frame_u.set_index("covariate").loc["a", "smd_unweighted"]
        a_w = frame_w.set_index("covariate").loc["a", "smd_weighted"]
        assert a_w == pytest.approx(a_u, rel=1e-12)
