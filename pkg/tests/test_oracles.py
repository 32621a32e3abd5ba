"""Independent oracles for the optimized numeric kernels.

Each oracle recomputes a quantity from its defining formula with naive
loops (or an independently assembled linear system) and must agree with
the production implementation to tight tolerances.  These tests are the
ground truth for the vectorized code paths; they were written against
the definitions before the implementations were tuned.
"""

import numpy as np
import pytest

from estsel import (
    MismatchTester,
    StatBiasTester,
    compute_weights,
    energy_group_vs_pooled,
    energy_treated_vs_control,
    fit_propensity,
    krige_se,
    pairwise_distances,
)
from estsel._streams import STATBIAS_STREAM, rng_for
from estsel.data import Dataset
from estsel.energy import _sorted_pair_abs_sum


def naive_group_pooled(D: np.ndarray, idx: np.ndarray, w: np.ndarray) -> float:
    """Defining double-loop formula for the group-vs-pooled energy distance."""
    n = D.shape[0]
    m = idx.size
    t1 = 0.0
    for a, i in enumerate(idx):
        for j in range(n):
            t1 += w[a] * D[i, j]
    t2 = sum(D[i, j] for i in range(n) for j in range(n))
    t3 = 0.0
    for a, i in enumerate(idx):
        for b, j in enumerate(idx):
            t3 += w[a] * w[b] * D[i, j]
    return 2.0 * t1 / (m * n) - t2 / (n * n) - t3 / (m * m)


def naive_two_sample(D, cidx, tidx, w0, w1) -> float:
    """Defining double-loop formula for the two-sample energy distance."""
    n0, n1 = cidx.size, tidx.size
    cross = sum(
        w0[a] * w1[b] * D[i, j]
        for a, i in enumerate(cidx)
        for b, j in enumerate(tidx)
    )
    within0 = sum(
        w0[a] * w0[b] * D[i, j]
        for a, i in enumerate(cidx)
        for b, j in enumerate(cidx)
    )
    within1 = sum(
        w1[a] * w1[b] * D[i, j]
        for a, i in enumerate(tidx)
        for b, j in enumerate(tidx)
    )
    return 2.0 * cross / (n0 * n1) - within0 / (n0 * n0) - within1 / (n1 * n1)


def random_fixture(rng, max_n: int = 50):
    """A small dataset with weights normalized the way the tests expect."""
    n = int(rng.integers(6, max_n + 1))
    X = rng.normal(size=(n, int(rng.integers(1, 4))))
    z = np.zeros(n, dtype=np.int64)
    z[rng.choice(n, size=int(rng.integers(2, n - 1)), replace=False)] = 1
    dist = pairwise_distances(X)
    w = rng.uniform(0.1, 2.0, size=n)
    for mask in (z == 1, z != 1):
        w[mask] *= mask.sum() / w[mask].sum()
    return dist, z, w


class TestEnergyOracles:
    def test_group_vs_pooled_matches_double_loop_on_50_fixtures(self):
        rng = np.random.default_rng(101)
        for _ in range(50):
            dist, z, w = random_fixture(rng)
            for arm in (z == 1, z != 1):
                idx = np.flatnonzero(arm)
                fast = energy_group_vs_pooled(dist, arm, w[idx])
                slow = naive_group_pooled(dist.values, idx, w[idx])
                assert fast == pytest.approx(slow, abs=1e-10, rel=1e-10)

    def test_two_sample_matches_double_loop_on_50_fixtures(self):
        rng = np.random.default_rng(202)
        for _ in range(50):
            dist, z, w = random_fixture(rng)
            ws = compute_weights(
                np.clip(rng.uniform(0.05, 0.95, size=dist.n), 1e-6, 1 - 1e-6),
                z,
                spec=__import__("estsel").EstimandSpec(0.5, 0.5),
            )
            fast = energy_treated_vs_control(dist, z, ws)
            cidx, tidx = np.flatnonzero(z != 1), np.flatnonzero(z == 1)
            slow = naive_two_sample(dist.values, cidx, tidx, ws.w[cidx], ws.w[tidx])
            assert fast == pytest.approx(slow, abs=1e-10, rel=1e-10)

    def test_sorted_prefix_identity_matches_double_loop(self):
        rng = np.random.default_rng(303)
        for _ in range(20):
            u = np.sort(rng.normal(size=int(rng.integers(2, 40))))
            naive = sum(abs(a - b) for a in u for b in u)
            assert _sorted_pair_abs_sum(u) == pytest.approx(naive, rel=1e-12)

    def test_mismatch_null_replicates_match_double_loop(self):
        """The batched GEMM null statistics equal the naive formula."""
        rng = np.random.default_rng(404)
        dist, z, w = random_fixture(rng, max_n=30)
        tester = MismatchTester(dist, z, B=100, seed=9)
        W = w[:, None]
        _, p0, p1 = tester.pvalue_matrix(W)
        # recompute each arm's null set and p-value naively
        for arm, idx in enumerate(tester._arm_idx):
            subsets, pairings = tester._plans[arm]
            arm_w = w[idx]
            obs = naive_group_pooled(dist.values, idx, arm_w)
            count = 0
            for b in range(tester.B):
                null_b = naive_group_pooled(
                    dist.values, subsets[b], arm_w[pairings[b]]
                )
                count += obs <= null_b + 1e-15  # guard pure float noise
            p_naive = count / tester.B
            p_fast = (p0 if arm == 0 else p1)[0]
            assert p_fast == pytest.approx(p_naive, abs=1.5 / tester.B)

    def test_statbias_null_replicates_match_double_loop(self):
        rng = np.random.default_rng(505)
        n = 24
        e = rng.uniform(0.1, 0.9, size=n)
        z = np.zeros(n, dtype=np.int64)
        z[rng.choice(n, size=10, replace=False)] = 1
        tester = StatBiasTester(e, z, B=100, seed=7)
        # independently replay the label stream and recompute every null
        replay = rng_for(7, STATBIAS_STREAM)
        D = np.abs(e[:, None] - e[None, :])
        base = z == 1
        ones0 = np.ones(n - 10)
        ones1 = np.ones(10)
        for b in range(tester.B):
            lab = replay.permutation(base)
            tidx, cidx = np.flatnonzero(lab), np.flatnonzero(~lab)
            slow = naive_two_sample(D, cidx, tidx, ones0, ones1)
            assert tester.null_statistics[b] == pytest.approx(
                slow, abs=1e-10, rel=1e-10
            )


class TestNewtonOracle:
    def test_logistic_fit_matches_independent_newton_on_20_rows(self):
        rng = np.random.default_rng(606)
        n, p = 20, 2
        X = rng.normal(size=(n, p))
        beta_true = np.array([0.3, -0.8])
        prob = 1.0 / (1.0 + np.exp(-(0.2 + X @ beta_true)))
        z = (rng.uniform(size=n) < prob).astype(np.int64)
        if z.sum() in (0, n):  # fixed seed keeps both arms populated
            pytest.fail("degenerate fixture")
        y = rng.normal(size=n)
        data = Dataset(
            covariates=X, treatment=z, outcome=y, column_names=("a", "b")
        )
        model = fit_propensity(data)

        # independent Newton iteration from a cold start
        Xd = np.column_stack([np.ones(n), X])
        beta = np.zeros(p + 1)
        for _ in range(200):
            eta = Xd @ beta
            mu = 1.0 / (1.0 + np.exp(-eta))
            grad = Xd.T @ (z - mu)
            H = Xd.T @ (Xd * (mu * (1 - mu))[:, None])
            step = np.linalg.solve(H, grad)
            beta = beta + step
            if np.abs(grad).max() < 1e-12:
                break
        assert np.abs(grad).max() < 1e-12, "oracle Newton did not converge"
        np.testing.assert_allclose(model.coefficients, beta, atol=1e-6)
        np.testing.assert_allclose(
            model.fitted_scores, 1.0 / (1.0 + np.exp(-(Xd @ beta))), atol=1e-6
        )


class _FakeGrid:
    """Duck-typed grid evaluation carrying only an SE lattice."""

    def __init__(self, c, d, se):
        self.c_values = np.asarray(c, dtype=np.float64)
        self.d_values = np.asarray(d, dtype=np.float64)
        self._se = np.asarray(se, dtype=np.float64)

    def lattice(self, which: str) -> np.ndarray:
        assert which == "se_boot"
        return self._se


class TestKrigingOracle:
    def test_3x3_fixture_matches_linear_system_oracle(self):
        """Hand-assembled ordinary-kriging system vs the production solver.

        The variogram parameters are pinned so both sides solve the same
        model; the oracle builds the classical per-point system
        [Gamma 1; 1' 0][lambda; mu] = [gamma(x0); 1] and predicts
        lambda'z.
        """
        axes = np.array([0.0, 0.5, 1.0])
        se = np.array(
            [[0.30, 0.25, 0.28], [0.26, 0.20, 0.24], [0.29, 0.27, 0.33]]
        )
        grid = _FakeGrid(axes, axes, se)
        params = (0.001, 0.015, 0.6)  # nugget, partial sill, range
        surface = krige_se(grid, resolution=5, variogram=params)
        assert surface.metadata["interpolator"] == "ordinary-kriging"
        assert surface.metadata["variogram_source"] == "fixed"

        nugget, psill, vrange = params

        def gamma(h):
            return nugget + psill * (1.0 - np.exp(-((h / vrange) ** 2)))

        pts = np.array([[ci, dj] for ci in axes for dj in axes])
        zv = se.ravel()
        m = pts.shape[0]
        G = gamma(
            np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
        )
        np.fill_diagonal(G, 0.0)
        A = np.ones((m + 1, m + 1))
        A[:m, :m] = G
        A[m, m] = 0.0

        fine = np.linspace(0.0, 1.0, 5)
        for i, ci in enumerate(fine):
            for j, dj in enumerate(fine):
                h = np.sqrt(((pts - np.array([ci, dj])) ** 2).sum(axis=1))
                b = np.append(gamma(h), 1.0)
                hit = h <= 1e-12
                if hit.any():
                    b[:m][hit] = 0.0  # zero-distance node, per exact interpolation
                lam = np.linalg.solve(A, b)[:m]
                oracle = lam @ zv
                assert surface.values[i, j] == pytest.approx(oracle, abs=1e-8)

        # node predictions reproduce the observations themselves
        for k, (ci, dj) in enumerate(pts):
            i = int(np.where(fine == ci)[0][0])
            j = int(np.where(fine == dj)[0][0])
            assert surface.values[i, j] == pytest.approx(zv[k], abs=1e-8)
