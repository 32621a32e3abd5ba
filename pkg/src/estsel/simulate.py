"""Synthetic data generator, Monte Carlo truth, and scenario studies.

The generating process has six covariates -- three standard normals and
three binary indicators, all built from an equicorrelated (rho = 0.5)
latent Gaussian -- a logistic treatment assignment whose slope vector is
scaled by a single overlap knob gamma (larger gamma, heavier propensity
tails, worse overlap), and a linear outcome with an additive treatment
effect that may vary with the true propensity score.  The logistic
intercept is solved numerically so the marginal treated fraction hits its
target regardless of gamma.

Truth values for any estimand in the family are plain Monte Carlo ratios
E[h(e) delta(e)] / E[h(e)] with delta-method standard errors, and the
variance-functional verifier checks which member of the family minimizes
the large-sample variance bound under a caller-specified heteroscedastic
variance structure.
"""

from __future__ import annotations

import csv
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import _streams
from .data import Dataset
from .errors import ConfigError, DataError, NumericalError
from .estimands import EstimandSpec, compute_weights, estimate_tau
from .evaluate import GridEvaluation, evaluate_grid
from .propensity import DesignSpec
from .surfaces import default_levels, krige_se, select_estimands, smooth_pvalues

logger = logging.getLogger(__name__)

#: logistic slope pattern, scaled by gamma
_ALPHA_SLOPES = np.array([0.15, 0.3, 0.3, -0.2, -0.25, -0.25])
#: outcome model: intercept then one coefficient per covariate
_BETA0 = 0.0
_BETA = np.array([-0.5, -0.5, -1.5, 0.8, 0.8, 1.0])

_HETEROGENEITY = ("constant", "linear", "medium", "high")

_MC_DEFAULT = 1_000_000


@dataclass(frozen=True)
class SimConfig:
    """One simulation scenario.

    ``gamma`` scales the logistic slopes (0 = randomized, larger = less
    overlap); ``treated_fraction`` is the target marginal treated share;
    ``heterogeneity`` picks the treatment-effect curve delta(e):
    ``constant`` (= ``delta_constant``), ``linear`` (a + b e, from
    ``delta_linear``), ``medium`` (8 e (1-e)), or ``high`` (16 e (1-e) - 1).
    """

    gamma: float = 1.0
    treated_fraction: float = 0.5
    heterogeneity: str = "medium"
    n: int = 1000
    seed: int = 0
    delta_constant: float = 1.0
    delta_linear: tuple[float, float] = (0.0, 4.0)

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"gamma must be non-negative, got {self.gamma}")
        if not (0.0 < self.treated_fraction < 1.0):
            raise ConfigError(
                f"treated_fraction must lie in (0, 1), got {self.treated_fraction}"
            )
        if self.heterogeneity not in _HETEROGENEITY:
            raise ConfigError(
                f"heterogeneity must be one of {_HETEROGENEITY}, got "
                f"{self.heterogeneity!r}"
            )
        if self.n < 10:
            raise ConfigError(f"n must be at least 10, got {self.n}")
        object.__setattr__(self, "delta_linear", tuple(self.delta_linear))


def delta_fn(cfg: SimConfig):
    """Treatment-effect curve delta(e) for the scenario."""
    if cfg.heterogeneity == "constant":
        k = float(cfg.delta_constant)
        return lambda e: np.full_like(np.asarray(e, dtype=np.float64), k)
    if cfg.heterogeneity == "linear":
        a, b = cfg.delta_linear
        return lambda e: a + b * np.asarray(e, dtype=np.float64)
    if cfg.heterogeneity == "medium":
        return lambda e: 8.0 * e * (1.0 - e)
    return lambda e: 16.0 * e * (1.0 - e) - 1.0


def draw_covariates(rng: np.random.Generator, n: int) -> np.ndarray:
    """Six covariates from an equicorrelated latent Gaussian.

    One shared factor gives every latent pair correlation 0.5; the first
    three covariates are the latents themselves, the last three are their
    negativity indicators.
    """
    w = rng.standard_normal((n, 7))
    latent = np.sqrt(0.5) * w[:, :1] + np.sqrt(0.5) * w[:, 1:]
    X = np.empty((n, 6))
    X[:, :3] = latent[:, :3]
    X[:, 3:] = (latent[:, 3:] < 0.0).astype(np.float64)
    return X


_ALPHA0_CACHE: dict[tuple[float, float], float] = {}
_ALPHA0_LOCK = threading.Lock()


def solve_alpha0(cfg: SimConfig, mc_samples: int = _MC_DEFAULT) -> float:
    """Logistic intercept hitting the target treated fraction.

    Bisection on a fixed Monte Carlo covariate sample (internal seed, so
    the intercept is a deterministic function of gamma and the target),
    run until the achieved fraction is within 1e-3 of the target.
    """
    key = (float(cfg.gamma), float(cfg.treated_fraction))
    with _ALPHA0_LOCK:
        if key in _ALPHA0_CACHE:
            return _ALPHA0_CACHE[key]
    rng = _streams.rng_for(_streams.ALPHA0_SEED)
    X = draw_covariates(rng, mc_samples)
    xa = X @ (cfg.gamma * _ALPHA_SLOPES)
    target = cfg.treated_fraction

    def frac(a0: float) -> float:
        return float(expit(a0 + xa).mean())

    lo, hi = -40.0, 40.0
    if not (frac(lo) < target < frac(hi)):
        raise NumericalError(
            f"treated fraction {target} unreachable for gamma={cfg.gamma}"
        )
    mid = 0.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    achieved = frac(mid)
    if abs(achieved - target) > 1e-3:
        raise NumericalError(
            f"intercept search achieved fraction {achieved:.4f}, "
            f"target {target:.4f}"
        )
    with _ALPHA0_LOCK:
        _ALPHA0_CACHE[key] = mid
    return mid


@dataclass(frozen=True)
class SimulatedDraw:
    """A simulated dataset plus its generating-process side information."""

    data: Dataset
    true_scores: np.ndarray
    cate: np.ndarray
    alpha0: float


def simulate_dataset(cfg: SimConfig, rep: int = 0) -> SimulatedDraw:
    """One synthetic dataset; ``rep`` selects an independent sub-stream."""
    rng = _streams.rng_for(cfg.seed, _streams.SIM_STREAM, rep)
    alpha0 = solve_alpha0(cfg)
    X = draw_covariates(rng, cfg.n)
    e = expit(alpha0 + X @ (cfg.gamma * _ALPHA_SLOPES))
    z = rng.binomial(1, e)
    for _ in range(100):
        if 0 < z.sum() < cfg.n:
            break
        z = rng.binomial(1, e)
    else:
        raise DataError(
            f"simulated treatment degenerate for gamma={cfg.gamma}, "
            f"fraction={cfg.treated_fraction}, n={cfg.n}"
        )
    delta = delta_fn(cfg)(e)
    y = _BETA0 + X @ _BETA + delta * z + rng.standard_normal(cfg.n)
    data = Dataset(
        covariates=X,
        treatment=z,
        outcome=y,
        column_names=tuple(f"x{j}" for j in range(1, 7)),
    )
    return SimulatedDraw(data=data, true_scores=e, cate=delta, alpha0=alpha0)


@dataclass(frozen=True)
class TruthRecord:
    """Monte Carlo value of one estimand under the generating process."""

    spec: EstimandSpec
    value: float
    mc_se: float
    mc_samples: int


def _ratio_and_se(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Mean ratio E[num]/E[den] with its delta-method standard error."""
    m = num.shape[0]
    a, b = float(num.mean()), float(den.mean())
    ratio = a / b
    cov = np.cov(num, den, ddof=1)
    var = (cov[0, 0] - 2.0 * ratio * cov[0, 1] + ratio**2 * cov[1, 1]) / (b**2 * m)
    return ratio, float(np.sqrt(max(var, 0.0)))


def _true_score_sample(
    cfg: SimConfig, mc_samples: int, seed: int
) -> np.ndarray:
    rng = _streams.rng_for(_streams.TRUTH_STREAM, seed)
    X = draw_covariates(rng, mc_samples)
    return expit(solve_alpha0(cfg) + X @ (cfg.gamma * _ALPHA_SLOPES))


def true_estimand(
    cfg: SimConfig,
    spec: EstimandSpec,
    mc_samples: int = _MC_DEFAULT,
    seed: int = 0,
) -> TruthRecord:
    """True value of the estimand: E[h(e) delta(e)] / E[h(e)] by Monte Carlo."""
    if mc_samples < 10_000:
        raise ConfigError(f"mc_samples must be >= 10000, got {mc_samples}")
    e = _true_score_sample(cfg, mc_samples, seed)
    h = np.power(e, spec.c) * np.power(1.0 - e, spec.d)
    delta = delta_fn(cfg)(e)
    value, se = _ratio_and_se(h * delta, h)
    return TruthRecord(spec=spec, value=value, mc_se=se, mc_samples=mc_samples)


class _TruthOracle:
    """Shared-draw truth values for many (c, d) points in one scenario."""

    def __init__(self, cfg: SimConfig, mc_samples: int = _MC_DEFAULT, seed: int = 0):
        self._e = _true_score_sample(cfg, mc_samples, seed)
        self._delta = delta_fn(cfg)(self._e)
        self._cache: dict[tuple[float, float], float] = {}

    def value(self, c: float, d: float) -> float:
        key = (float(c), float(d))
        if key not in self._cache:
            h = np.power(self._e, c) * np.power(1.0 - self._e, d)
            self._cache[key] = float((h * self._delta).mean() / h.mean())
        return self._cache[key]


# ---------------------------------------------------------------------------
# scenario studies


@dataclass(frozen=True)
class SelectedPick:
    """One selection-entry outcome inside one scenario replicate."""

    rep: int
    band_lower: float
    band_upper: float
    c: float
    d: float
    tau_hat: float
    recommended: bool


@dataclass(frozen=True)
class ScenarioResult:
    """Replicate-level results of one simulation scenario."""

    config: SimConfig
    replicates: int
    n_ok: int
    failures: tuple[tuple[int, str], ...]
    tau_true_ate: float
    tau_true_ato: float
    c_values: np.ndarray
    d_values: np.ndarray
    mean_p_mismatch: np.ndarray | None
    mean_p_statbias: np.ndarray | None
    corner_estimates: dict[str, np.ndarray]
    picks: tuple[SelectedPick, ...]
    truth_of: dict[tuple[float, float], float]

    def lattice(self, which: str) -> np.ndarray:
        arr = {"p_mismatch": self.mean_p_mismatch, "p_statbias": self.mean_p_statbias}[
            which
        ]
        if arr is None:
            raise DataError(f"{which} was not computed for this scenario")
        return arr.reshape(self.c_values.size, self.d_values.size)

    def summary_rows(self) -> list[dict]:
        """One row per estimator: the fixed corners plus each mismatch band.

        Bias and MSE are against the true ATE (the common yardstick across
        estimators); percent statistical bias is against each estimator's
        own estimand value, 100 |mean - truth| / |truth|.
        """
        rows = []

        def pct_bias(mean_est: float, truth: float) -> float:
            return 100.0 * abs(mean_est - truth) / abs(truth) if truth != 0 else np.nan

        for name, spec in (("ate", (0.0, 0.0)), ("ato", (1.0, 1.0))):
            est = self.corner_estimates.get(name)
            if est is None or est.size == 0:
                continue
            truth_own = self.tau_true_ate if name == "ate" else self.tau_true_ato
            rows.append(
                {
                    "estimator": name,
                    "band_lower": np.nan,
                    "band_upper": np.nan,
                    "n": int(est.size),
                    "mean_estimate": float(est.mean()),
                    "bias_vs_ate": float(est.mean() - self.tau_true_ate),
                    "sd": float(est.std(ddof=0)),
                    "mse_vs_ate": float(((est - self.tau_true_ate) ** 2).mean()),
                    "pct_stat_bias_own": pct_bias(float(est.mean()), truth_own),
                    "mean_c": spec[0],
                    "mean_d": spec[1],
                }
            )
        by_band: dict[tuple[float, float], list[SelectedPick]] = {}
        for pick in self.picks:
            by_band.setdefault((pick.band_lower, pick.band_upper), []).append(pick)
        for (lo, hi), picks in sorted(by_band.items()):
            est = np.array([p.tau_hat for p in picks])
            truths = np.array([self.truth_of[(p.c, p.d)] for p in picks])
            mean_truth = float(truths.mean())
            rows.append(
                {
                    "estimator": f"selected({lo:g},{hi:g}]",
                    "band_lower": lo,
                    "band_upper": hi,
                    "n": int(est.size),
                    "mean_estimate": float(est.mean()),
                    "bias_vs_ate": float(est.mean() - self.tau_true_ate),
                    "sd": float(est.std(ddof=0)),
                    "mse_vs_ate": float(((est - self.tau_true_ate) ** 2).mean()),
                    "pct_stat_bias_own": (
                        100.0 * abs(float((est - truths).mean())) / abs(mean_truth)
                        if mean_truth != 0
                        else np.nan
                    ),
                    "mean_c": float(np.mean([p.c for p in picks])),
                    "mean_d": float(np.mean([p.d for p in picks])),
                }
            )
        return rows

    def to_csv(self, path: str | Path) -> None:
        rows = self.summary_rows()
        cols = (
            "estimator", "band_lower", "band_upper", "n", "mean_estimate",
            "bias_vs_ate", "sd", "mse_vs_ate", "pct_stat_bias_own",
            "mean_c", "mean_d",
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in rows:
                writer.writerow([row[k] for k in cols])


def _eval_seed(seed: int, rep: int) -> int:
    return int(
        np.random.SeedSequence((seed, _streams.SIM_STREAM, rep)).generate_state(
            1, np.uint64
        )[0]
        >> 1
    )


def run_scenario(
    cfg: SimConfig,
    *,
    replicates: int,
    grid=None,
    B: int = 500,
    B_boot: int | None = None,
    seed: int | None = None,
    levels=None,
    resolution: int = 500,
    refit_bootstrap: bool = True,
    with_mismatch: bool = True,
    with_statbias: bool = True,
    with_bootstrap: bool = True,
    with_selection: bool = True,
    design: DesignSpec | None = None,
    mc_truth: int = _MC_DEFAULT,
    threads: int = 1,
) -> ScenarioResult:
    """Run one scenario end to end over independent replicates.

    Each replicate simulates a dataset, evaluates the estimand grid, and
    (if ``with_selection``) smooths the surfaces and runs the contour
    selection, recording the exact effect estimate at each selected point.
    Failed replicates are logged and excluded; their count is reported.
    """
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    if with_selection and not (with_mismatch and with_statbias and with_bootstrap):
        raise ConfigError("selection requires mismatch, statbias, and bootstrap")
    if seed is None:
        seed = cfg.seed
    if levels is None:
        levels = default_levels()
    solve_alpha0(cfg)  # warm the cache before any thread pool

    tau_true_ate = true_estimand(cfg, EstimandSpec(0, 0), mc_truth).value
    tau_true_ato = true_estimand(cfg, EstimandSpec(1, 1), mc_truth).value

    def one(rep: int):
        draw = simulate_dataset(replace(cfg, seed=seed), rep=rep)
        ge = evaluate_grid(
            draw.data,
            design=design,
            grid=grid,
            B=B,
            B_boot=B_boot,
            seed=_eval_seed(seed, rep),
            refit_bootstrap=refit_bootstrap,
            with_mismatch=with_mismatch,
            with_statbias=with_statbias,
            with_bootstrap=with_bootstrap,
        )
        picks = []
        if with_selection:
            selection = select_estimands(
                smooth_pvalues(ge, "mismatch", resolution),
                smooth_pvalues(ge, "statbias", resolution),
                krige_se(ge, resolution),
                mismatch_levels=levels,
            )
            scores = ge.model.fitted_scores
            for entry in selection.entries:
                w = compute_weights(scores, draw.data.treatment, entry.spec)
                tau_hat = estimate_tau(draw.data, w).tau_hat
                picks.append(
                    SelectedPick(
                        rep=rep,
                        band_lower=entry.mismatch_lower,
                        band_upper=entry.mismatch_upper,
                        c=entry.spec.c,
                        d=entry.spec.d,
                        tau_hat=tau_hat,
                        recommended=entry.recommended,
                    )
                )
        return ge, picks

    results: list = [None] * replicates
    failures: list[tuple[int, str]] = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(one, r): r for r in range(replicates)}
            for fut, r in futures.items():
                try:
                    results[r] = fut.result()
                except Exception as exc:  # noqa: BLE001 -- per-replicate isolation
                    failures.append((r, f"{type(exc).__name__}: {exc}"))
    else:
        for r in range(replicates):
            try:
                results[r] = one(r)
            except Exception as exc:  # noqa: BLE001 -- per-replicate isolation
                failures.append((r, f"{type(exc).__name__}: {exc}"))
    for r, msg in failures:
        logger.warning("replicate %d failed: %s", r, msg)

    ok = [res for res in results if res is not None]
    if not ok:
        raise NumericalError("every scenario replicate failed")
    ge0: GridEvaluation = ok[0][0]
    S = len(ge0.specs)

    def mean_over(field: str) -> np.ndarray | None:
        stack = np.stack([getattr(ge, field) for ge, _ in ok])
        return stack.mean(axis=0) if np.isfinite(stack).all() else None

    corner = {}
    for name, cd in (("ate", (0.0, 0.0)), ("ato", (1.0, 1.0))):
        matches = [s for s, spec in enumerate(ge0.specs) if (spec.c, spec.d) == cd]
        if matches:
            corner[name] = np.array([ge.tau[matches[0]] for ge, _ in ok])

    picks = tuple(p for _, reps in ok for p in reps)
    oracle = _TruthOracle(cfg, mc_truth)
    truth_of = {(p.c, p.d): oracle.value(p.c, p.d) for p in picks}

    return ScenarioResult(
        config=cfg,
        replicates=replicates,
        n_ok=len(ok),
        failures=tuple(failures),
        tau_true_ate=tau_true_ate,
        tau_true_ato=tau_true_ato,
        c_values=ge0.c_values,
        d_values=ge0.d_values,
        mean_p_mismatch=mean_over("p_mismatch") if with_mismatch else None,
        mean_p_statbias=mean_over("p_statbias") if with_statbias else None,
        corner_estimates=corner,
        picks=picks,
        truth_of=truth_of,
    )


# ---------------------------------------------------------------------------
# variance-functional verification


@dataclass(frozen=True)
class VarianceRow:
    """Variance-bound value for one candidate tilting function."""

    label: str
    variance: float
    variance_simplified: float
    mc_se: float


@dataclass(frozen=True)
class VarianceVerification:
    """Monte Carlo check of which tilting function minimizes the bound."""

    rows: tuple[VarianceRow, ...]
    minimizer: str
    max_rel_gap: float
    mc_samples: int

    def to_json_dict(self) -> dict:
        return {
            "minimizer": self.minimizer,
            "max_rel_gap": self.max_rel_gap,
            "mc_samples": self.mc_samples,
            "rows": [
                {
                    "label": r.label,
                    "variance": r.variance,
                    "variance_simplified": r.variance_simplified,
                    "mc_se": r.mc_se,
                }
                for r in self.rows
            ],
        }


def _as_tilt(candidate):
    """(label, callable) from an EstimandSpec, a (label, fn) pair, or a fn."""
    if isinstance(candidate, EstimandSpec):
        return (
            f"({candidate.c:g},{candidate.d:g})",
            lambda e, c=candidate.c, d=candidate.d: np.power(e, c)
            * np.power(1.0 - e, d),
        )
    if isinstance(candidate, tuple) and len(candidate) == 2 and callable(candidate[1]):
        return str(candidate[0]), candidate[1]
    raise ConfigError(f"candidate {candidate!r} is not a spec or (label, fn) pair")


def verify_min_variance(
    cfg: SimConfig,
    h_star,
    k0,
    k1,
    v: float,
    candidates,
    mc_samples: int = _MC_DEFAULT,
    seed: int = 0,
) -> VarianceVerification:
    """Check the variance-optimality of a claimed tilting function h*.

    The large-sample variance bound of the weighted estimator for tilting
    function h is E[h(e)^2 (v1(e)/e + v0(e)/(1-e))] / E[h(e)]^2, evaluated
    under arm variances constructed so that h* is the claimed minimizer:

        v0 = v k0 (1-e) / (h* (k0+k1)),   v1 = v k1 e / (h* (k0+k1)).

    Under that construction the bound reduces to v E[h^2/h*] / E[h]^2;
    both forms are computed and their maximum relative gap reported as an
    internal consistency check.  ``candidates`` may mix EstimandSpec
    points and (label, callable) pairs; h*, k0, k1 are callables of e (an
    EstimandSpec is also accepted for h*).
    """
    if mc_samples < 10_000:
        raise ConfigError(f"mc_samples must be >= 10000, got {mc_samples}")
    if v <= 0:
        raise ConfigError(f"v must be positive, got {v}")
    if isinstance(h_star, EstimandSpec):
        _, h_star = _as_tilt(h_star)
    e = _true_score_sample(cfg, mc_samples, seed)
    hs = np.asarray(h_star(e), dtype=np.float64)
    if (hs <= 0).any():
        raise NumericalError("h* must be strictly positive on the score support")
    ksum = np.asarray(k0(e), dtype=np.float64) + np.asarray(k1(e), dtype=np.float64)
    if (ksum <= 0).any():
        raise NumericalError("k0 + k1 must be strictly positive")
    v0 = v * np.asarray(k0(e), dtype=np.float64) * (1.0 - e) / (hs * ksum)
    v1 = v * np.asarray(k1(e), dtype=np.float64) * e / (hs * ksum)
    g = v1 / e + v0 / (1.0 - e)

    rows = []
    for candidate in candidates:
        label, fn = _as_tilt(candidate)
        h = np.asarray(fn(e), dtype=np.float64)
        num = h * h * g
        a, b = float(num.mean()), float(h.mean())
        direct = a / (b * b)
        simplified = v * float((h * h / hs).mean()) / (b * b)
        # delta method for A/B^2 with A = mean(h^2 g), B = mean(h)
        cov = np.cov(num, h, ddof=1)
        grad_a, grad_b = 1.0 / b**2, -2.0 * a / b**3
        var = (
            grad_a**2 * cov[0, 0]
            + 2.0 * grad_a * grad_b * cov[0, 1]
            + grad_b**2 * cov[1, 1]
        ) / mc_samples
        rows.append(
            VarianceRow(
                label=label,
                variance=direct,
                variance_simplified=simplified,
                mc_se=float(np.sqrt(max(var, 0.0))),
            )
        )
    values = np.array([r.variance for r in rows])
    gaps = np.array(
        [
            abs(r.variance - r.variance_simplified) / max(abs(r.variance), 1e-300)
            for r in rows
        ]
    )
    return VarianceVerification(
        rows=tuple(rows),
        minimizer=rows[int(np.argmin(values))].label,
        max_rel_gap=float(gaps.max()),
        mc_samples=mc_samples,
    )
