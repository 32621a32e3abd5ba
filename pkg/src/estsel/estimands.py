"""The two-parameter estimand family and its balancing weights.

Every estimand in the family is indexed by a tilting function
``h(e) = e^c (1-e)^d`` of the propensity score e, with (c, d) in the unit
square.  The corners recover the classical targets -- ATE (0,0), ATT
(1,0), ATC (0,1), and the overlap-weighted ATO (1,1) -- and interior
points interpolate between them.  Balancing weights are h(e)/e for
treated units and h(e)/(1-e) for controls; the weighted difference in
outcome means (a Hajek-style ratio estimator) estimates the effect on the
population implicitly reweighted by h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError, NumericalError
from . import _streams
from .propensity import DesignSpec, fit_propensity

_ALIASES: dict[str, tuple[float, float]] = {
    "ate": (0.0, 0.0),
    "att": (1.0, 0.0),
    "atc": (0.0, 1.0),
    "ato": (1.0, 1.0),
}


@dataclass(frozen=True)
class EstimandSpec:
    """A point (c, d) in the estimand family, 0 <= c, d <= 1."""

    c: float
    d: float

    def __post_init__(self):
        c, d = float(self.c), float(self.d)
        if not (np.isfinite(c) and np.isfinite(d)):
            raise DataError(f"non-finite estimand parameters ({self.c}, {self.d})")
        if not (0.0 <= c <= 1.0 and 0.0 <= d <= 1.0):
            raise DataError(f"estimand parameters must lie in [0, 1]^2, got ({c}, {d})")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_alias(cls, name: str) -> "EstimandSpec":
        try:
            c, d = _ALIASES[name.strip().lower()]
        except KeyError:
            raise DataError(
                f"unknown estimand alias {name!r}; expected one of {sorted(_ALIASES)}"
            ) from None
        return cls(c, d)

    @property
    def alias(self) -> str | None:
        for name, cd in _ALIASES.items():
            if (self.c, self.d) == cd:
                return name
        return None

    def __str__(self) -> str:
        alias = self.alias
        tag = f" ({alias.upper()})" if alias else ""
        return f"h(e)=e^{self.c:g}(1-e)^{self.d:g}{tag}"


def h_value(e, spec: EstimandSpec):
    """Tilting function h(e) = e^c (1-e)^d, with the 0^0 = 1 convention.

    ``e`` may be a scalar or array and must lie strictly inside (0, 1).
    """
    e = np.asarray(e, dtype=np.float64)
    if e.size and (e.min() <= 0.0 or e.max() >= 1.0):
        raise DataError("propensity scores must lie strictly inside (0, 1)")
    # np.power(x, 0.0) == 1.0 exactly, which implements the 0^0 convention
    out = np.power(e, spec.c) * np.power(1.0 - e, spec.d)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class WeightSet:
    """Balancing weights for one estimand.

    ``arm_totals`` holds (sum over controls, sum over treated) of ``w`` as
    stored; after arm-wise normalization these equal the arm sizes.
    """

    w: np.ndarray
    spec: EstimandSpec | None
    normalized: bool
    arm_totals: tuple[float, float]


def weight_matrix(
    scores: np.ndarray,
    treatment: np.ndarray,
    specs: list[EstimandSpec],
    normalize: bool = True,
) -> np.ndarray:
    """Column s holds the balancing weights for ``specs[s]``; shape (n, S).

    Weights are computed as exp((c-1) log e + d log(1-e)) on the treated
    arm and exp(c log e + (d-1) log(1-e)) on controls, which keeps the
    family exact at the corners (the ATT leaves treated weights at 1), and
    evaluates the whole grid with two matrix products.
    """
    e = np.asarray(scores, dtype=np.float64)
    z = np.asarray(treatment)
    if e.shape != z.shape:
        raise DataError(f"scores shape {e.shape} != treatment shape {z.shape}")
    if e.size == 0:
        raise DataError("empty score vector")
    if e.min() <= 0.0 or e.max() >= 1.0:
        raise DataError("propensity scores must lie strictly inside (0, 1)")
    c = np.array([s.c for s in specs])
    d = np.array([s.d for s in specs])
    le = np.log(e)
    l1e = np.log1p(-e)
    treated = z == 1
    n = e.shape[0]
    W = np.empty((n, len(specs)))
    logs = np.column_stack([le, l1e])  # (n, 2)
    W[treated] = np.exp(logs[treated] @ np.vstack([c - 1.0, d]))
    W[~treated] = np.exp(logs[~treated] @ np.vstack([c, d - 1.0]))
    if normalize:
        for mask, nz in ((~treated, n - treated.sum()), (treated, treated.sum())):
            W[mask] *= nz / W[mask].sum(axis=0)
    return W


def compute_weights(
    scores: np.ndarray,
    treatment: np.ndarray,
    spec: EstimandSpec,
    normalize: bool = True,
) -> WeightSet:
    """Balancing weights h(e)/e (treated) and h(e)/(1-e) (control).

    With ``normalize=True`` (the default) weights are rescaled within each
    arm to sum to that arm's size, the scale expected by the energy-based
    diagnostics.
    """
    w = weight_matrix(scores, treatment, [spec], normalize=normalize)[:, 0]
    treated = np.asarray(treatment) == 1
    return WeightSet(
        w=w,
        spec=spec,
        normalized=normalize,
        arm_totals=(float(w[~treated].sum()), float(w[treated].sum())),
    )


@dataclass(frozen=True)
class EffectEstimate:
    """A weighted treatment-effect estimate and its provenance."""

    tau_hat: float
    estimand: EstimandSpec | None
    n_eff_control: float
    n_eff_treated: float
    se_boot: float | None = None


def _arm_mean(w: np.ndarray, y: np.ndarray, nz: int) -> float:
    # self-normalize to a canonical scale first so the estimate is invariant
    # to rescaling of w (exactly so for power-of-two rescalings)
    u = w * (nz / w.sum())
    return float((u @ y) / nz)


def _kish_ess(w: np.ndarray) -> float:
    return float(w.sum() ** 2 / (w @ w))


def estimate_tau(data: Dataset, weights: WeightSet) -> EffectEstimate:
    """Weighted difference in outcome means (ratio / Hajek form).

    Self-normalizing within arms, so any positive rescaling of the weights
    -- jointly or per arm -- leaves the estimate unchanged.
    """
    w = np.asarray(weights.w, dtype=np.float64)
    if w.shape != (data.n,):
        raise DataError(f"weights shape {w.shape} does not match n={data.n}")
    if (w <= 0).any() or not np.isfinite(w).all():
        raise NumericalError("balancing weights must be finite and positive")
    treated = data.treated_mask
    tau = _arm_mean(w[treated], data.outcome[treated], data.n_treated) - _arm_mean(
        w[~treated], data.outcome[~treated], data.n_control
    )
    return EffectEstimate(
        tau_hat=tau,
        estimand=weights.spec,
        n_eff_control=_kish_ess(w[~treated]),
        n_eff_treated=_kish_ess(w[treated]),
    )


def build_grid(
    c_values: np.ndarray | None = None, d_values: np.ndarray | None = None
) -> list[EstimandSpec]:
    """Row-major (c outer, d inner) grid of estimand specs.

    Defaults to the 21 x 21 lattice with spacing 0.05 on each axis.
    """
    if c_values is None:
        c_values = np.linspace(0.0, 1.0, 21)
    if d_values is None:
        d_values = np.linspace(0.0, 1.0, 21)
    c_values = np.asarray(c_values, dtype=np.float64)
    d_values = np.asarray(d_values, dtype=np.float64)
    for name, ax in (("c", c_values), ("d", d_values)):
        if ax.ndim != 1 or ax.size == 0:
            raise DataError(f"{name}_values must be a non-empty 1-D sequence")
        if (np.diff(ax) <= 0).any():
            raise DataError(f"{name}_values must be strictly increasing")
        if ax.min() < 0.0 or ax.max() > 1.0:
            raise DataError(f"{name}_values must lie within [0, 1]")
    return [EstimandSpec(c, d) for c in c_values for d in d_values]


class BootstrapEngine:
    """Shared nonparametric bootstrap for standard errors across a grid.

    Resampling (and, with ``refit=True``, the per-replicate propensity
    refit) does not depend on the estimand, so one set of B replicates
    serves every (c, d): the engine draws and fits once, then prices any
    spec against the stored replicates.

    Replicates whose resample leaves an arm empty or whose refit fails are
    redrawn; more than ``max_redraw_frac * B`` redraws in total aborts with
    an error, so systematic instability cannot hide inside the bootstrap.
    """

    def __init__(
        self,
        data: Dataset,
        design: DesignSpec | None = None,
        *,
        B: int = 1000,
        seed: int = 0,
        refit: bool = True,
        ridge: float = 0.0,
        max_redraw_frac: float = 0.1,
    ):
        if B < 2:
            raise NumericalError(f"bootstrap needs B >= 2 replicates, got {B}")
        self.data = data
        self.design = design
        self.B = B
        self.seed = seed
        self.refit = refit
        n = data.n
        self._idx = np.empty((B, n), dtype=np.int64)
        self._scores = np.empty((B, n))
        self.redraws = 0
        max_redraws = max_redraw_frac * B
        base_model = None
        if not refit:
            base_model = fit_propensity(data, design, ridge=ridge)
        for b in range(self.B):
            rng = _streams.rng_for(seed, _streams.BOOT_STREAM, b)
            while True:
                idx = rng.integers(0, n, size=n)
                zb = data.treatment[idx]
                nt = int(zb.sum())
                if 0 < nt < n:
                    try:
                        if refit:
                            sub = data.subset(idx)
                            scores = fit_propensity(sub, design, ridge=ridge).fitted_scores
                        else:
                            scores = base_model.fitted_scores[idx]
                        break
                    except NumericalError:
                        pass
                self.redraws += 1
                if self.redraws > max_redraws:
                    raise NumericalError(
                        f"bootstrap exceeded redraw budget: {self.redraws} failed "
                        f"replicates against a cap of {max_redraws:.0f} "
                        f"({max_redraw_frac:.0%} of B={B})"
                    )
            self._idx[b] = idx
            self._scores[b] = scores

    def estimate_matrix(self, specs: list[EstimandSpec]) -> np.ndarray:
        """Replicate-by-spec matrix of effect estimates, shape (B, S)."""
        out = np.empty((self.B, len(specs)))
        y = self.data.outcome
        z = self.data.treatment
        for b in range(self.B):
            idx = self._idx[b]
            W = weight_matrix(self._scores[b], z[idx], specs, normalize=False)
            yb = y[idx]
            tmask = z[idx] == 1
            Wt, Wc = W[tmask], W[~tmask]
            out[b] = (yb[tmask] @ Wt) / Wt.sum(axis=0) - (yb[~tmask] @ Wc) / Wc.sum(
                axis=0
            )
        return out

    def ses(self, specs: list[EstimandSpec]) -> np.ndarray:
        """Bootstrap standard errors (sample SD over replicates) per spec."""
        return self.estimate_matrix(specs).std(axis=0, ddof=1)

    def se(self, spec: EstimandSpec) -> float:
        return float(self.ses([spec])[0])


def bootstrap_se(
    data: Dataset,
    spec: EstimandSpec,
    design: DesignSpec | None = None,
    *,
    B: int = 1000,
    seed: int = 0,
    refit: bool = True,
    ridge: float = 0.0,
) -> float:
    """Bootstrap standard error of the effect estimate for one estimand.

    Each replicate resamples units with replacement and, by default,
    refits the propensity model so the SE carries design-stage
    uncertainty.  ``refit=False`` freezes the original fitted model and
    only resamples, which prices the weighting step alone.
    """
    engine = BootstrapEngine(
        data, design, B=B, seed=seed, refit=refit, ridge=ridge
    )
    return engine.se(spec)
