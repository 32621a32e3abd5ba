"""Unit-level study data and covariate balance summaries.

A :class:`Dataset` is an immutable container holding a numeric covariate
matrix, a binary treatment vector, and an outcome vector.  CSV ingestion
handles categorical expansion and treatment/outcome recoding so that
everything downstream can assume clean float arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns onto treatment / outcome / covariate roles.

    Parameters
    ----------
    treatment : str
        Name of the treatment column.  Values must be binary, either as
        0/1 or as the two levels named in ``treatment_levels``.
    outcome : str
        Name of the (numeric) outcome column.
    covariates : tuple of str
        Covariate columns, in the order they should appear in the design.
    categorical : tuple of str
        Subset of ``covariates`` to expand into indicator columns.  Levels
        are sorted alphabetically by their string representation and the
        first level is dropped as the reference category.
    treatment_levels : (control, treated) or None
        Explicit coding for a non-0/1 treatment column.
    outcome_levels : (zero, one) or None
        Explicit coding for a two-level outcome column (e.g. survival
        recorded as "No"/"Yes").
    """

    treatment: str
    outcome: str
    covariates: tuple[str, ...]
    categorical: tuple[str, ...] = ()
    treatment_levels: tuple[str, str] | None = None
    outcome_levels: tuple[str, str] | None = None

    def __post_init__(self):
        missing = set(self.categorical) - set(self.covariates)
        if missing:
            raise DataError(
                f"categorical columns not listed as covariates: {sorted(missing)}"
            )
        if len(set(self.covariates)) != len(self.covariates):
            raise DataError("duplicate covariate names in schema")


@dataclass(frozen=True)
class Dataset:
    """Immutable unit-level sample.

    Attributes
    ----------
    covariates : ndarray, shape (n, p)
        Numeric covariate matrix (categoricals already expanded).
    treatment : ndarray, shape (n,)
        Binary treatment indicator (0 = control, 1 = treated).
    outcome : ndarray, shape (n,)
        Numeric outcome.
    column_names : tuple of str
        Names for the columns of ``covariates``.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.covariates, dtype=np.float64))
        z = np.asarray(self.treatment)
        y = np.asarray(self.outcome, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"covariates must be 2-D, got shape {X.shape}")
        n = X.shape[0]
        if z.shape != (n,) or y.shape != (n,):
            raise DataError(
                f"length mismatch: covariates {X.shape}, treatment {z.shape}, "
                f"outcome {y.shape}"
            )
        if n < 2:
            raise DataError(f"need at least 2 units, got {n}")
        if len(self.column_names) != X.shape[1]:
            raise DataError(
                f"{len(self.column_names)} column names for {X.shape[1]} columns"
            )
        if not np.isfinite(X).all():
            raise DataError("non-finite values in covariates")
        if not np.isfinite(y).all():
            raise DataError("non-finite values in outcome")
        vals = np.unique(z)
        if not np.isin(vals, (0, 1)).all():
            raise DataError(f"treatment must be coded 0/1, found values {vals}")
        z = z.astype(np.int64)
        if z.sum() == 0 or z.sum() == n:
            raise DataError("both treatment arms must be non-empty")
        for arr in (X, z, y):
            arr.setflags(write=False)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "treatment", z)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_treated(self) -> int:
        return int(self.treatment.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    @property
    def treated_mask(self) -> np.ndarray:
        return self.treatment == 1

    def subset(self, indices: np.ndarray) -> "Dataset":
        """Row subset (used by the bootstrap); validates arms stay non-empty."""
        idx = np.asarray(indices)
        return Dataset(
            covariates=self.covariates[idx],
            treatment=self.treatment[idx],
            outcome=self.outcome[idx],
            column_names=self.column_names,
        )

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.column_names.index(name)
        except ValueError:
            raise DataError(f"no covariate column named {name!r}") from None
        return self.covariates[:, j]


def _recode_binary(values: pd.Series, levels: tuple[str, str], what: str) -> np.ndarray:
    """Map a two-level column onto 0/1 using string comparison."""
    as_str = values.astype(str).str.strip()
    lo, hi = (str(v) for v in levels)
    out = np.full(len(as_str), -1, dtype=np.int64)
    out[(as_str == lo).to_numpy()] = 0
    out[(as_str == hi).to_numpy()] = 1
    bad = np.unique(as_str.to_numpy()[out < 0])
    if bad.size:
        raise DataError(
            f"{what} column has values {bad.tolist()} outside declared levels "
            f"({lo!r}, {hi!r})"
        )
    return out


def ingest_csv(path: str | Path, schema: ColumnSchema) -> Dataset:
    """Read a CSV into a :class:`Dataset` according to ``schema``.

    Rows with missing entries in any used column are dropped (never
    imputed) and the drop count is logged.  Categorical covariates are
    expanded into indicators named ``col=level``, alphabetical level
    order, first level dropped.  Non-numeric covariates that were not
    declared categorical are an error.
    """
    path = Path(path)
    used = [schema.treatment, schema.outcome, *schema.covariates]
    seen = set()
    for col in used:
        if col in seen:
            raise DataError(f"column {col!r} used in more than one role")
        seen.add(col)
    try:
        frame = pd.read_csv(path, usecols=used)
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None

    n_raw = len(frame)
    frame = frame.dropna(axis=0, subset=used)
    n_dropped = n_raw - len(frame)
    if n_dropped:
        logger.warning("dropped %d of %d rows with missing values", n_dropped, n_raw)
    if len(frame) == 0:
        raise DataError(f"{path}: no complete rows after dropping missing values")

    if schema.treatment_levels is not None:
        z = _recode_binary(frame[schema.treatment], schema.treatment_levels, "treatment")
    else:
        z = pd.to_numeric(frame[schema.treatment], errors="coerce").to_numpy()
        if np.isnan(z).any():
            raise DataError("treatment column is non-numeric; declare treatment_levels")

    if schema.outcome_levels is not None:
        y = _recode_binary(frame[schema.outcome], schema.outcome_levels, "outcome").astype(
            np.float64
        )
    else:
        y = pd.to_numeric(frame[schema.outcome], errors="coerce").to_numpy()
        if np.isnan(y).any():
            raise DataError("outcome column is non-numeric; declare outcome_levels")

    blocks: list[np.ndarray] = []
    names: list[str] = []
    categorical = set(schema.categorical)
    for col in schema.covariates:
        raw = frame[col]
        if col in categorical:
            levels = sorted(raw.astype(str).str.strip().unique())
            if len(levels) < 2:
                raise DataError(f"categorical column {col!r} has a single level")
            as_str = raw.astype(str).str.strip().to_numpy()
            for level in levels[1:]:  # first level is the reference
                blocks.append((as_str == level).astype(np.float64))
                names.append(f"{col}={level}")
        else:
            numeric = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
            if np.isnan(numeric).any():
                raise DataError(
                    f"covariate {col!r} is non-numeric; declare it categorical"
                )
            blocks.append(numeric)
            names.append(col)

    X = np.column_stack(blocks)
    return Dataset(covariates=X, treatment=z, outcome=y, column_names=tuple(names))


@dataclass(frozen=True)
class BalanceReport:
    """Per-covariate standardized mean differences, before and after weighting.

    Rows are sorted by ``|smd_weighted|`` descending, with zero-variance
    covariates (flagged, SMD undefined) last.  ``mean_abs_smd`` and
    ``max_abs_smd`` summarize the weighted column over well-defined rows.
    """

    covariates: tuple[str, ...]
    smd_unweighted: np.ndarray
    smd_weighted: np.ndarray
    zero_variance: np.ndarray
    mean_abs_smd: float
    max_abs_smd: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "covariate": self.covariates,
                "smd_unweighted": self.smd_unweighted,
                "smd_weighted": self.smd_weighted,
                "zero_variance": self.zero_variance,
            }
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False)


def _smd(X: np.ndarray, treated: np.ndarray, w: np.ndarray):
    """Weighted SMD per column: weighted mean difference over the unweighted
    pooled standard deviation sqrt((s1^2 + s0^2) / 2)."""
    Xt, Xc = X[treated], X[~treated]
    wt, wc = w[treated], w[~treated]
    mean_t = (wt @ Xt) / wt.sum()
    mean_c = (wc @ Xc) / wc.sum()
    # denominators always use unweighted arm variances so that the scale is
    # comparable across weighting schemes
    var_t = Xt.var(axis=0, ddof=1)
    var_c = Xc.var(axis=0, ddof=1)
    pooled = np.sqrt((var_t + var_c) / 2.0)
    zero = pooled == 0.0
    smd = np.full(X.shape[1], np.nan)
    np.divide(mean_t - mean_c, pooled, out=smd, where=~zero)
    return smd, zero


def compute_smd(data: Dataset, weights=None) -> BalanceReport:
    """Standardized mean differences for every covariate.

    Parameters
    ----------
    data : Dataset
    weights : WeightSet, ndarray, or None
        Balancing weights for the "after" column.  ``None`` means unit
        weights, in which case the two SMD columns coincide.
    """
    if weights is None:
        w = np.ones(data.n)
    elif hasattr(weights, "w"):
        w = np.asarray(weights.w, dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64)
    if w.shape != (data.n,):
        raise DataError(f"weights shape {w.shape} does not match n={data.n}")
    if (w < 0).any() or not np.isfinite(w).all():
        raise DataError("weights must be finite and non-negative")

    treated = data.treated_mask
    unit = np.ones(data.n)
    smd_un, zero_un = _smd(data.covariates, treated, unit)
    smd_w, zero_w = _smd(data.covariates, treated, w)
    zero = zero_un | zero_w

    sort_key = np.where(np.isnan(smd_w), -np.inf, np.abs(smd_w))
    order = np.argsort(-sort_key, kind="stable")
    ok = ~zero[order] & ~np.isnan(smd_w[order])
    finite = smd_w[order][ok]
    return BalanceReport(
        covariates=tuple(data.column_names[i] for i in order),
        smd_unweighted=smd_un[order],
        smd_weighted=smd_w[order],
        zero_variance=zero[order],
        mean_abs_smd=float(np.abs(finite).mean()) if finite.size else float("nan"),
        max_abs_smd=float(np.abs(finite).max()) if finite.size else float("nan"),
    )
