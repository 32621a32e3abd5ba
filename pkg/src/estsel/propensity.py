"""Propensity score estimation via logistic regression.

The fitter is plain Newton / iteratively reweighted least squares on the
logistic log-likelihood, with an optional ridge penalty on the slope
coefficients as an explicit opt-in for degenerate designs.  The maximum
likelihood problem itself is never silently altered: separation and rank
deficiency raise rather than returning a quietly regularized fit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit, logit

from .data import Dataset
from .errors import DataError, NumericalError, SeparationError, SingularDesignError

logger = logging.getLogger(__name__)

#: fitted and predicted scores are clipped into [SCORE_CLIP, 1 - SCORE_CLIP]
SCORE_CLIP = 1e-6

# scores within this distance of {0, 1} count as saturated when looking for
# separation (|eta| > ~23)
_SATURATION = 1e-10


@dataclass(frozen=True)
class DesignSpec:
    """Which covariates enter the logistic model, plus polynomial terms.

    ``columns=None`` means every covariate in the dataset.  ``poly`` lists
    ``(column, power)`` pairs appended after the base columns, named
    ``col^power``; e.g. ``(("age", 2),)`` adds an age-squared term.
    An intercept is always included by the fitter and is not part of the
    design matrix built here.
    """

    columns: tuple[str, ...] | None = None
    poly: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "poly", tuple((str(c), int(p)) for c, p in self.poly)
        )
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))
        for col, power in self.poly:
            if power < 2:
                raise DataError(f"polynomial power for {col!r} must be >= 2")

    def build_matrix(self, data: Dataset) -> tuple[np.ndarray, tuple[str, ...]]:
        """Design matrix (no intercept column) and term names."""
        base = self.columns if self.columns is not None else data.column_names
        cols = [data.column(c) for c in base]
        names = list(base)
        for col, power in self.poly:
            cols.append(data.column(col) ** power)
            names.append(f"{col}^{power}")
        if not cols:
            raise DataError("empty design: no covariate columns selected")
        return np.column_stack(cols), tuple(names)


@dataclass(frozen=True)
class PropensityModel:
    """Fitted logistic propensity model.

    ``coefficients[0]`` is the intercept, remaining entries align with
    ``term_names``.  ``fitted_scores`` are clipped into the open interval
    (0, 1) by ``SCORE_CLIP``; ``max_score_residual`` is the max-norm of the
    score equations X'(z - e) at the unclipped solution, recorded so users
    can audit convergence.
    """

    coefficients: np.ndarray
    design: DesignSpec
    term_names: tuple[str, ...]
    fitted_scores: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    max_score_residual: float
    ridge: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "coefficients": [float(b) for b in self.coefficients],
                "terms": ["(intercept)", *self.term_names],
                "design": {
                    "columns": None if self.design.columns is None else list(self.design.columns),
                    "poly": [list(t) for t in self.design.poly],
                },
                "converged": self.converged,
                "iterations": self.iterations,
                "deviance": self.deviance,
                "max_score_residual": self.max_score_residual,
                "ridge": self.ridge,
            },
            indent=2,
        )


def _deviance(eta: np.ndarray, z: np.ndarray) -> float:
    # -2 log-likelihood, computed stably:  log(1 + e^eta) = logaddexp(0, eta)
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - z * eta))


def fit_propensity(
    data: Dataset,
    design: DesignSpec | None = None,
    *,
    ridge: float = 0.0,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> PropensityModel:
    """Fit a logistic propensity model by Newton / IRLS.

    Parameters
    ----------
    data : Dataset
    design : DesignSpec, optional
        Defaults to all covariates, no polynomial terms.
    ridge : float
        L2 penalty on slope coefficients only (intercept unpenalized).
        Zero by default; degenerate designs then fail loudly instead of
        being silently regularized.
    max_iter, tol : int, float
        Iteration cap and relative-deviance convergence threshold.

    Raises
    ------
    SeparationError
        If the fit diverges with saturated scores (perfect separation).
    SingularDesignError
        If the (penalized) information matrix is singular.
    """
    if design is None:
        design = DesignSpec()
    if ridge < 0:
        raise NumericalError(f"ridge must be non-negative, got {ridge}")
    Xd, names = design.build_matrix(data)
    if not np.isfinite(Xd).all():
        raise DataError("non-finite values in design matrix")
    n, q = Xd.shape
    X = np.column_stack([np.ones(n), Xd])
    z = data.treatment.astype(np.float64)

    pen = np.zeros(q + 1)
    pen[1:] = ridge  # intercept unpenalized

    beta = np.zeros(q + 1)
    beta[0] = logit(z.mean())
    eta = X @ beta
    dev = _deviance(eta, z)
    converged = False
    iterations = 0
    prev_step_norm = np.inf

    for it in range(1, max_iter + 1):
        iterations = it
        mu = expit(eta)
        w = mu * (1.0 - mu)
        grad = X.T @ (z - mu) - pen * beta
        H = (X * w[:, None]).T @ X
        H[np.diag_indices_from(H)] += pen
        try:
            step = scipy.linalg.solve(H, grad, assume_a="pos")
        except scipy.linalg.LinAlgError:
            hint = "" if ridge > 0 else " (a ridge penalty can stabilize a collinear design)"
            raise SingularDesignError(
                f"singular information matrix at iteration {it}{hint}"
            ) from None
        if not np.isfinite(step).all():
            raise SingularDesignError(
                f"non-finite Newton step at iteration {it}; design is numerically singular"
            )
        beta = beta + step
        eta = X @ beta
        new_dev = _deviance(eta, z) + float(pen @ beta**2)

        mu_new = expit(eta)
        saturated = (mu_new < _SATURATION) | (mu_new > 1.0 - _SATURATION)
        step_norm = float(np.linalg.norm(step))
        if ridge == 0.0 and saturated.any() and it >= 3:
            # MLE diverging: scores pin to {0,1} while the Newton steps
            # stop shrinking (a convergent fit collapses them quadratically)
            marching = step_norm > 1e-3 and step_norm > 0.25 * prev_step_norm
            if marching:
                slope = beta[1:]
                nrm = np.linalg.norm(slope)
                direction = slope / nrm if nrm > 0 else slope
                worst = names[int(np.argmax(np.abs(direction)))] if q else None
                raise SeparationError(
                    "propensity fit diverged with fitted scores within "
                    f"{_SATURATION:g} of 0/1: data are (quasi-)separated "
                    f"along a direction dominated by {worst!r}",
                    direction=direction,
                    worst_column=worst,
                )
        prev_step_norm = step_norm

        if abs(new_dev - dev) <= tol * (abs(new_dev) + 1e-12):
            dev = new_dev
            converged = True
            break
        dev = new_dev

    mu = expit(eta)
    residual = float(np.max(np.abs(X.T @ (z - mu) - pen * beta)))
    if not converged:
        logger.warning(
            "propensity fit did not converge in %d iterations "
            "(max score residual %.3g)",
            max_iter,
            residual,
        )
    scores = np.clip(mu, SCORE_CLIP, 1.0 - SCORE_CLIP)
    return PropensityModel(
        coefficients=beta,
        design=design,
        term_names=names,
        fitted_scores=scores,
        converged=converged,
        iterations=iterations,
        deviance=float(_deviance(eta, z)),
        max_score_residual=residual,
        ridge=ridge,
    )


def predict_scores(model: PropensityModel, data: Dataset) -> np.ndarray:
    """Predicted propensity scores on new data, clipped away from {0, 1}."""
    Xd, names = model.design.build_matrix(data)
    if names != model.term_names:
        raise DataError(
            f"design mismatch: model terms {model.term_names} vs data terms {names}"
        )
    eta = model.coefficients[0] + Xd @ model.coefficients[1:]
    return np.clip(expit(eta), SCORE_CLIP, 1.0 - SCORE_CLIP)
