"""Weighted energy distances and the two permutation diagnostics.

Two questions are asked of every candidate estimand, and both are framed
as energy distances between weighted empirical distributions:

* **Estimand mismatch** -- does arm z, reweighted by the candidate's
  balancing weights, still look like the pooled sample?  The statistic is
  the weighted energy distance between the weighted arm distribution and
  the pooled empirical distribution of the covariates; the null is built
  by drawing size-n_z subsets of all units at random and attaching the
  arm's weight values to them, which preserves the weight multiset while
  breaking any covariate-weight relationship.

* **Statistical bias** -- after weighting, do the treated and control
  propensity-score distributions coincide?  The statistic is the weighted
  two-sample energy distance between arms on the fitted scores; the null
  permutes treatment labels and recomputes the unweighted two-sample
  distance.

Both tests report the fraction of null replicates at least as large as
the observed statistic, with no continuity correction, so p = 0 is
attainable.  The tester classes precompute the replicate plans once and
evaluate entire grids of candidate weights against the shared nulls.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import _streams
from .data import Dataset
from .errors import ConfigError, DataError, NumericalError
from .estimands import EstimandSpec, WeightSet, compute_weights

#: relative slack allowed when validating that weights sum to arm sizes
_NORMALIZATION_RTOL = 1e-8


class DistanceMatrix:
    """Immutable pairwise-distance matrix with cached marginals.

    Row sums and the grand total are computed through the same BLAS
    reductions used by the energy formulas, so that degenerate identities
    (e.g. the full sample against itself) hold exactly in floating point.
    """

    def __init__(self, values: np.ndarray):
        D = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise DataError(f"distance matrix must be square, got shape {D.shape}")
        if not np.isfinite(D).all():
            raise DataError("non-finite distances")
        if (np.diag(D) != 0.0).any():
            raise DataError("distance matrix must have an exactly zero diagonal")
        if D.size and D.min() < 0.0:
            raise DataError("negative distances")
        scale = D.max() if D.size else 0.0
        if not np.allclose(D, D.T, rtol=0.0, atol=1e-12 * max(scale, 1.0)):
            raise DataError("distance matrix must be symmetric")
        D.setflags(write=False)
        self.values = D
        ones = np.ones(D.shape[0])
        self.row_sums = D @ ones
        self.row_sums.setflags(write=False)
        self.total = float(self.row_sums @ ones)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def pairwise_distances(points: np.ndarray) -> DistanceMatrix:
    """Euclidean distance matrix from an (n, p) array (or a 1-D vector)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise DataError(f"points must be 1-D or 2-D, got shape {pts.shape}")
    if pts.shape[0] < 2:
        raise DataError("need at least 2 points")
    return DistanceMatrix(squareform(pdist(pts)))


def covariate_distances(data: Dataset, standardize: bool = True) -> DistanceMatrix:
    """Distances between units in covariate space.

    With ``standardize=True`` (default) columns are centered and scaled to
    unit variance first; energy distance is scale-sensitive, and raw
    scales would let wide columns dominate mixed continuous/binary data.
    Zero-variance columns are left centered only.
    """
    X = data.covariates
    if standardize:
        sd = X.std(axis=0, ddof=0)
        sd = np.where(sd == 0.0, 1.0, sd)
        X = (X - X.mean(axis=0)) / sd
    return pairwise_distances(X)


def score_distances(scores: np.ndarray) -> DistanceMatrix:
    """|e_i - e_j| distances between fitted propensity scores."""
    return pairwise_distances(np.asarray(scores, dtype=np.float64))


def _check_weights(w: np.ndarray, m: int, expected_sum: float, what: str) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (m,):
        raise DataError(f"{what}: weight shape {w.shape}, expected ({m},)")
    if not np.isfinite(w).all() or (w < 0).any():
        raise DataError(f"{what}: weights must be finite and non-negative")
    total = w.sum()
    if abs(total - expected_sum) > _NORMALIZATION_RTOL * max(expected_sum, 1.0):
        raise DataError(
            f"{what}: weights sum to {total:.12g}, expected {expected_sum:.12g} "
            "(normalize within arms first)"
        )
    return w


def _group_pooled_stat(
    dist: DistanceMatrix, idx: np.ndarray, W: np.ndarray
) -> np.ndarray:
    """Energy distance between a weighted group and the pooled sample.

    ``W`` has one weight column per candidate; returns one statistic per
    column.  This is the workhorse for both the observed statistics and
    the permutation nulls of the mismatch test.
    """
    n = dist.n
    m = idx.shape[0]
    Dsub = dist.values[np.ix_(idx, idx)]
    t1 = (2.0 / (m * n)) * (dist.row_sums[idx] @ W)
    t2 = dist.total / (n * n)
    t3 = (W * (Dsub @ W)).sum(axis=0) / (m * m)
    return t1 - t2 - t3


def energy_group_vs_pooled(
    dist: DistanceMatrix, group_mask: np.ndarray, group_weights: np.ndarray
) -> float:
    """Weighted energy distance between one group and the pooled sample.

    ``group_weights`` aligns with the group members in index order and
    must sum to the group size (the arm-normalized scale).  Zero exactly
    when the group is the full sample with unit weights.
    """
    mask = np.asarray(group_mask)
    if mask.dtype == bool:
        if mask.shape != (dist.n,):
            raise DataError(f"group mask shape {mask.shape}, expected ({dist.n},)")
        idx = np.flatnonzero(mask)
    else:
        idx = mask.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= dist.n):
            raise DataError("group indices out of range")
    if idx.size == 0:
        raise DataError("empty group")
    w = _check_weights(group_weights, idx.size, float(idx.size), "group weights")
    return float(_group_pooled_stat(dist, idx, w[:, None])[0])


def _two_sample_stat(
    dist: DistanceMatrix, cidx: np.ndarray, tidx: np.ndarray, W0: np.ndarray, W1: np.ndarray
) -> np.ndarray:
    """Weighted two-sample energy distance, one value per weight column."""
    n0, n1 = cidx.shape[0], tidx.shape[0]
    D = dist.values
    cross = (W0 * (D[np.ix_(cidx, tidx)] @ W1)).sum(axis=0) * (2.0 / (n0 * n1))
    within0 = (W0 * (D[np.ix_(cidx, cidx)] @ W0)).sum(axis=0) / (n0 * n0)
    within1 = (W1 * (D[np.ix_(tidx, tidx)] @ W1)).sum(axis=0) / (n1 * n1)
    return cross - within0 - within1


def energy_treated_vs_control(
    dist: DistanceMatrix, treatment: np.ndarray, weights: WeightSet
) -> float:
    """Weighted energy distance between the treated and control arms.

    Requires arm-normalized weights (each arm sums to its size).  With
    unit weights this is the classical two-sample energy distance.
    """
    z = np.asarray(treatment)
    if z.shape != (dist.n,):
        raise DataError(f"treatment shape {z.shape}, expected ({dist.n},)")
    w = np.asarray(weights.w, dtype=np.float64)
    tidx = np.flatnonzero(z == 1)
    cidx = np.flatnonzero(z != 1)
    if tidx.size == 0 or cidx.size == 0:
        raise DataError("both arms must be non-empty")
    w0 = _check_weights(w[cidx], cidx.size, float(cidx.size), "control weights")
    w1 = _check_weights(w[tidx], tidx.size, float(tidx.size), "treated weights")
    return float(_two_sample_stat(dist, cidx, tidx, w0[:, None], w1[:, None])[0])


def _write_null_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for b in range(columns[0].size):
            writer.writerow([b] + [repr(float(col[b])) for col in columns])


@dataclass(frozen=True)
class PermutationTestResult:
    """Observed statistic, p-value, and (optionally) the null replicates."""

    statistic: float
    p_value: float
    B: int
    null_statistics: np.ndarray | None = None

    def null_to_csv(self, path) -> None:
        """Dump the retained null statistics for diagnostics."""
        if self.null_statistics is None:
            raise ConfigError("null statistics were not retained; pass keep_null=True")
        _write_null_csv(path, ["replicate", "null_statistic"], [self.null_statistics])


@dataclass(frozen=True)
class MismatchResult:
    """Per-arm mismatch statistics; the test's p-value is min(p0, p1)."""

    p_value: float
    p_control: float
    p_treated: float
    statistic_control: float
    statistic_treated: float
    B: int
    null_control: np.ndarray | None = None
    null_treated: np.ndarray | None = None

    def null_to_csv(self, path) -> None:
        """Dump the retained per-arm null statistics for diagnostics."""
        if self.null_control is None or self.null_treated is None:
            raise ConfigError("null statistics were not retained; pass keep_null=True")
        _write_null_csv(
            path,
            ["replicate", "null_control", "null_treated"],
            [self.null_control, self.null_treated],
        )


class MismatchTester:
    """Estimand-mismatch permutation test with nulls shared across a grid.

    The null replicate plan -- which units are drawn and how the arm's
    weight values are paired to them -- depends only on (n, arm sizes, B,
    seed), never on the candidate estimand, so a single tester prices an
    entire grid of weight columns against one set of replicates.  This is
    what makes 441-point grids affordable: each replicate touches the
    distance submatrix once and multiplies it against all candidates.
    """

    def __init__(
        self, dist: DistanceMatrix, treatment: np.ndarray, *, B: int = 1000, seed: int = 0
    ):
        if B < 100:
            raise NumericalError(f"permutation test needs B >= 100, got {B}")
        z = np.asarray(treatment)
        if z.shape != (dist.n,):
            raise DataError(f"treatment shape {z.shape}, expected ({dist.n},)")
        self.dist = dist
        self.B = B
        self.seed = seed
        self._arm_idx = (np.flatnonzero(z != 1), np.flatnonzero(z == 1))
        if min(a.size for a in self._arm_idx) == 0:
            raise DataError("both arms must be non-empty")
        n = dist.n
        self._plans = []
        for arm, idx in enumerate(self._arm_idx):
            rng = _streams.rng_for(seed, _streams.MISMATCH_STREAM, arm)
            nz = idx.size
            subsets = np.empty((B, nz), dtype=np.int32)
            pairings = np.empty((B, nz), dtype=np.int32)
            for b in range(B):
                subsets[b] = rng.choice(n, size=nz, replace=False)
                pairings[b] = rng.permutation(nz)
            self._plans.append((subsets, pairings))

    def observed(self, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Observed per-arm statistics for each weight column."""
        return tuple(
            _group_pooled_stat(self.dist, idx, W[idx]) for idx in self._arm_idx
        )

    def pvalue_matrix(self, W: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """p-values for every weight column of ``W`` (shape (n, S)).

        Returns ``(min(p0, p1), p0, p1)``.  Each weight column must be
        arm-normalized.
        """
        W = np.asarray(W, dtype=np.float64)
        n = self.dist.n
        for arm, idx in enumerate(self._arm_idx):
            sums = W[idx].sum(axis=0)
            if np.abs(sums - idx.size).max() > _NORMALIZATION_RTOL * idx.size:
                raise DataError(f"arm {arm} weights are not arm-normalized")
        e_obs = self.observed(W)
        counts = [np.zeros(W.shape[1], dtype=np.int64) for _ in range(2)]
        for arm, (subsets, pairings) in enumerate(self._plans):
            arm_w = np.ascontiguousarray(W[self._arm_idx[arm]])
            for b in range(self.B):
                null_b = _group_pooled_stat(
                    self.dist, subsets[b], arm_w[pairings[b]]
                )
                counts[arm] += e_obs[arm] <= null_b
        p0, p1 = (c / self.B for c in counts)
        return np.minimum(p0, p1), p0, p1

    def pvalue(self, weights: WeightSet, keep_null: bool = False) -> MismatchResult:
        """Full per-arm result for one weight set."""
        W = np.asarray(weights.w, dtype=np.float64)[:, None]
        e_obs = [float(e[0]) for e in self.observed(W)]
        nulls = []
        for arm, (subsets, pairings) in enumerate(self._plans):
            arm_w = np.ascontiguousarray(W[self._arm_idx[arm]])
            null = np.empty(self.B)
            for b in range(self.B):
                null[b] = _group_pooled_stat(
                    self.dist, subsets[b], arm_w[pairings[b]]
                )[0]
            nulls.append(null)
        p0, p1 = (float((e <= null).mean()) for e, null in zip(e_obs, nulls))
        return MismatchResult(
            p_value=min(p0, p1),
            p_control=p0,
            p_treated=p1,
            statistic_control=e_obs[0],
            statistic_treated=e_obs[1],
            B=self.B,
            null_control=nulls[0] if keep_null else None,
            null_treated=nulls[1] if keep_null else None,
        )


def _sorted_pair_abs_sum(u: np.ndarray) -> float:
    """Sum of |u_i - u_j| over ALL ordered pairs, for ascending ``u``."""
    m = u.shape[0]
    coef = 2.0 * np.arange(m) - (m - 1)
    return float(2.0 * (coef @ u))


class StatBiasTester:
    """Statistical-bias permutation test on the fitted propensity scores.

    The null replicates permute treatment labels and compute the
    *unweighted* two-sample energy distance, which does not depend on the
    candidate estimand at all -- so the null distribution is computed once
    and reused for the whole grid.  Because scores are scalar, each null
    replicate reduces to prefix sums over the sorted scores (O(n) after
    one sort) instead of touching the distance matrix.
    """

    def __init__(
        self,
        scores: np.ndarray,
        treatment: np.ndarray,
        *,
        B: int = 1000,
        seed: int = 0,
        dist: DistanceMatrix | None = None,
    ):
        if B < 100:
            raise NumericalError(f"permutation test needs B >= 100, got {B}")
        e = np.asarray(scores, dtype=np.float64)
        z = np.asarray(treatment)
        if e.shape != z.shape or e.ndim != 1:
            raise DataError("scores and treatment must be 1-D of equal length")
        self.dist = dist if dist is not None else score_distances(e)
        if self.dist.n != e.shape[0]:
            raise DataError("distance matrix size does not match scores")
        self.B = B
        self.seed = seed
        self._tidx = np.flatnonzero(z == 1)
        self._cidx = np.flatnonzero(z != 1)
        if self._tidx.size == 0 or self._cidx.size == 0:
            raise DataError("both arms must be non-empty")
        n0, n1 = self._cidx.size, self._tidx.size
        n = n0 + n1

        order = np.argsort(e, kind="stable")
        v = e[order]
        total_pairs = _sorted_pair_abs_sum(v)
        rng = _streams.rng_for(seed, _streams.STATBIAS_STREAM)
        null = np.empty(B)
        base = np.asarray(z == 1)
        for b in range(B):
            lab = rng.permutation(base)
            mask = lab[order]
            s1 = _sorted_pair_abs_sum(v[mask])
            s0 = _sorted_pair_abs_sum(v[~mask])
            cross = (total_pairs - s0 - s1) / 2.0
            null[b] = 2.0 * cross / (n0 * n1) - s0 / (n0 * n0) - s1 / (n1 * n1)
        self.null_statistics = null
        self._null_sorted = np.sort(null)

    def observed(self, W: np.ndarray) -> np.ndarray:
        """Observed weighted two-sample statistics per weight column."""
        W = np.asarray(W, dtype=np.float64)
        W0 = np.ascontiguousarray(W[self._cidx])
        W1 = np.ascontiguousarray(W[self._tidx])
        for arm_w, size, what in ((W0, self._cidx.size, "control"), (W1, self._tidx.size, "treated")):
            if np.abs(arm_w.sum(axis=0) - size).max() > _NORMALIZATION_RTOL * size:
                raise DataError(f"{what} weights are not arm-normalized")
        return _two_sample_stat(self.dist, self._cidx, self._tidx, W0, W1)

    def pvalue_matrix(self, W: np.ndarray) -> np.ndarray:
        e_obs = self.observed(W)
        # count of nulls >= observed, via one searchsorted on the sorted nulls
        below = np.searchsorted(self._null_sorted, e_obs, side="left")
        return (self.B - below) / self.B

    def pvalue(self, weights: WeightSet, keep_null: bool = False) -> PermutationTestResult:
        W = np.asarray(weights.w, dtype=np.float64)[:, None]
        stat = float(self.observed(W)[0])
        p = float(self.pvalue_matrix(W)[0])
        return PermutationTestResult(
            statistic=stat,
            p_value=p,
            B=self.B,
            null_statistics=self.null_statistics if keep_null else None,
        )


def mismatch_pvalue(
    data: Dataset,
    dist: DistanceMatrix,
    spec: EstimandSpec,
    scores: np.ndarray,
    *,
    B: int = 1000,
    seed: int = 0,
) -> float:
    """Estimand-mismatch permutation p-value, min over the two arms.

    A small p-value says that at least one weighted arm no longer
    resembles the pooled covariate distribution -- i.e. the weights have
    tilted the sample away from the population the candidate claims to
    describe.  Reproduces the corresponding entry of a grid evaluation
    run with the same seed.
    """
    w = compute_weights(scores, data.treatment, spec, normalize=True)
    tester = MismatchTester(dist, data.treatment, B=B, seed=seed)
    return tester.pvalue(w).p_value


def statbias_pvalue(
    data: Dataset,
    dist_ps: DistanceMatrix,
    spec: EstimandSpec,
    scores: np.ndarray,
    weights: WeightSet | None = None,
    *,
    B: int = 1000,
    seed: int = 0,
) -> float:
    """Statistical-bias permutation p-value on the propensity scores.

    A small p-value says the weighted arms still differ in their score
    distributions, so the weighted contrast retains confounding bias.
    ``weights`` defaults to the balancing weights of ``spec``; passing an
    explicit weight set supports diagnostics such as unit-weight nulls.
    """
    if weights is None:
        weights = compute_weights(scores, data.treatment, spec, normalize=True)
    tester = StatBiasTester(scores, data.treatment, B=B, seed=seed, dist=dist_ps)
    return tester.pvalue(weights).p_value
