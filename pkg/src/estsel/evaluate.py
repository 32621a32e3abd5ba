"""Grid evaluation: every candidate estimand priced on one dataset.

This is the pipeline stage between raw data and the decision surfaces:
fit the propensity model once, build balancing weights for every (c, d)
on the grid, and score each candidate with the effect estimate, both
permutation diagnostics, and a bootstrap standard error.  All the
expensive machinery (permutation nulls, bootstrap refits, distance
matrices) is shared across the grid rather than recomputed per spec.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .energy import (
    DistanceMatrix,
    MismatchTester,
    StatBiasTester,
    covariate_distances,
    score_distances,
)
from .errors import DataError
from .estimands import (
    BootstrapEngine,
    EstimandSpec,
    WeightSet,
    build_grid,
    estimate_tau,
    weight_matrix,
)
from .propensity import DesignSpec, PropensityModel, fit_propensity

_CSV_COLUMNS = (
    "c", "d", "tau_hat", "p_mismatch", "p_statbias", "se_boot",
    "n_eff_treated", "n_eff_control",
)


@dataclass(frozen=True)
class GridEvaluation:
    """Per-spec results over a full (c, d) lattice, in row-major spec order."""

    c_values: np.ndarray
    d_values: np.ndarray
    specs: tuple[EstimandSpec, ...]
    tau: np.ndarray
    p_mismatch: np.ndarray
    p_statbias: np.ndarray
    se_boot: np.ndarray
    n_eff_treated: np.ndarray
    n_eff_control: np.ndarray
    model: PropensityModel | None = None

    def lattice(self, which: str) -> np.ndarray:
        """Reshape a per-spec column to the (len(c), len(d)) lattice."""
        arr = getattr(self, which)
        return np.asarray(arr).reshape(self.c_values.size, self.d_values.size)

    def spec_index(self, spec: EstimandSpec) -> int:
        for s, candidate in enumerate(self.specs):
            if candidate.c == spec.c and candidate.d == spec.d:
                return s
        raise DataError(f"spec {spec} is not on the evaluated grid")

    def to_csv(self, path: str | Path) -> None:
        """Write the grid table; floats via repr for byte-stable output."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for s, spec in enumerate(self.specs):
                writer.writerow(
                    [
                        repr(float(spec.c)),
                        repr(float(spec.d)),
                        repr(float(self.tau[s])),
                        repr(float(self.p_mismatch[s])),
                        repr(float(self.p_statbias[s])),
                        repr(float(self.se_boot[s])),
                        repr(float(self.n_eff_treated[s])),
                        repr(float(self.n_eff_control[s])),
                    ]
                )


def read_grid_csv(path: str | Path) -> GridEvaluation:
    """Load a grid table written by :meth:`GridEvaluation.to_csv`.

    Validates that the rows form a complete row-major lattice, which is
    what the surface stages require.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            rows.append([float(row[k]) for k in _CSV_COLUMNS])
    if not rows:
        raise DataError(f"{path}: empty grid table")
    arr = np.array(rows)
    c_values = np.unique(arr[:, 0])
    d_values = np.unique(arr[:, 1])
    if arr.shape[0] != c_values.size * d_values.size:
        raise DataError(f"{path}: rows do not form a complete (c, d) lattice")
    expect_c = np.repeat(c_values, d_values.size)
    expect_d = np.tile(d_values, c_values.size)
    if not (np.array_equal(arr[:, 0], expect_c) and np.array_equal(arr[:, 1], expect_d)):
        raise DataError(f"{path}: rows are not in row-major lattice order")
    specs = tuple(EstimandSpec(c, d) for c, d in zip(arr[:, 0], arr[:, 1]))
    return GridEvaluation(
        c_values=c_values,
        d_values=d_values,
        specs=specs,
        tau=arr[:, 2],
        p_mismatch=arr[:, 3],
        p_statbias=arr[:, 4],
        se_boot=arr[:, 5],
        n_eff_treated=arr[:, 6],
        n_eff_control=arr[:, 7],
    )


def _resolve_grid(grid) -> tuple[np.ndarray, np.ndarray, list[EstimandSpec]]:
    if grid is None:
        specs = build_grid()
    elif isinstance(grid, tuple) and len(grid) == 2:
        specs = build_grid(grid[0], grid[1])
    else:
        specs = list(grid)
        if not specs:
            raise DataError("empty spec grid")
    c_values = np.unique([s.c for s in specs])
    d_values = np.unique([s.d for s in specs])
    if len(specs) != c_values.size * d_values.size:
        raise DataError("specs do not form a complete (c, d) lattice")
    expected = [(c, d) for c in c_values for d in d_values]
    if [(s.c, s.d) for s in specs] != expected:
        raise DataError("specs are not in row-major lattice order")
    return c_values, d_values, specs


def evaluate_grid(
    data: Dataset,
    *,
    design: DesignSpec | None = None,
    grid=None,
    B: int = 1000,
    B_boot: int | None = None,
    seed: int = 0,
    standardize: bool = True,
    refit_bootstrap: bool = True,
    ridge: float = 0.0,
    with_mismatch: bool = True,
    with_statbias: bool = True,
    with_bootstrap: bool = True,
    dist_cov: DistanceMatrix | None = None,
) -> GridEvaluation:
    """Evaluate every estimand on the grid against one dataset.

    Parameters
    ----------
    data : Dataset
    design : DesignSpec, optional
        Propensity model design (default: all covariates, no polynomials).
    grid : None, (c_values, d_values), or list of EstimandSpec
        Candidate lattice; default is the 21 x 21 grid with spacing 0.05.
    B, B_boot : int
        Permutation replicates for both tests, bootstrap replicates
        (defaults to ``B``).
    seed : int
        Master seed; the permutation tests and the bootstrap each derive
        their own stream, so single-spec calls to the standalone ops with
        the same seed reproduce the grid's entries.
    standardize : bool
        Standardize covariate columns before computing energy distances.
    with_mismatch, with_statbias, with_bootstrap : bool
        Skip components (their columns become NaN); scenario studies that
        only need a subset of the pipeline use these to save time.
    dist_cov : DistanceMatrix, optional
        Precomputed covariate distances (must match ``standardize``).

    Returns
    -------
    GridEvaluation
    """
    c_values, d_values, specs = _resolve_grid(grid)
    if B_boot is None:
        B_boot = B
    model = fit_propensity(data, design, ridge=ridge)
    scores = model.fitted_scores
    z = data.treatment
    S = len(specs)

    W = weight_matrix(scores, z, specs, normalize=True)
    tau = np.empty(S)
    n_eff_t = np.empty(S)
    n_eff_c = np.empty(S)
    for s, spec in enumerate(specs):
        treated = z == 1
        w = W[:, s]
        est = estimate_tau(
            data,
            WeightSet(
                w=w, spec=spec, normalized=True,
                arm_totals=(float(w[~treated].sum()), float(w[treated].sum())),
            ),
        )
        tau[s] = est.tau_hat
        n_eff_t[s] = est.n_eff_treated
        n_eff_c[s] = est.n_eff_control

    p_mismatch = np.full(S, np.nan)
    if with_mismatch:
        if dist_cov is None:
            dist_cov = covariate_distances(data, standardize=standardize)
        tester = MismatchTester(dist_cov, z, B=B, seed=seed)
        p_mismatch, _, _ = tester.pvalue_matrix(W)

    p_statbias = np.full(S, np.nan)
    if with_statbias:
        sb = StatBiasTester(scores, z, B=B, seed=seed, dist=score_distances(scores))
        p_statbias = sb.pvalue_matrix(W)

    se_boot = np.full(S, np.nan)
    if with_bootstrap:
        engine = BootstrapEngine(
            data, design, B=B_boot, seed=seed, refit=refit_bootstrap, ridge=ridge
        )
        se_boot = engine.ses(specs)

    return GridEvaluation(
        c_values=c_values,
        d_values=d_values,
        specs=tuple(specs),
        tau=tau,
        p_mismatch=p_mismatch,
        p_statbias=p_statbias,
        se_boot=se_boot,
        n_eff_treated=n_eff_t,
        n_eff_control=n_eff_c,
        model=model,
    )
