"""Shared numerics: resampling, error bars, and fit wrappers.

Thin, opinionated front-ends over numpy/scipy so the analysis modules agree
on conventions (counter-based resampling streams, scaled covariance, fixed
global-optimizer hyperparameters) instead of each picking their own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize


class FitError(RuntimeError):
    """A least-squares fit failed to converge or is degenerate."""


@dataclass(frozen=True)
class ResamplePlan:
    """How many synthetic datasets to draw and from which stream family."""

    n_samples: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


def _stream(seed: int, i: int) -> np.random.Generator:
    # One counter-based stream per resample index: reproducible regardless of
    # draw order and safe to shard across workers.
    return np.random.default_rng(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))


def multinomial_resample(probs: np.ndarray, n_shots: int, plan: ResamplePlan) -> np.ndarray:
    """Draw ``plan.n_samples`` multinomial frequency vectors of ``n_shots`` trials.

    Returns an array (n_samples, len(probs)) of relative frequencies.  Sample
    i is drawn from its own stream keyed (seed, i) so that subsets of the
    resample family are reproducible in isolation.
    """
    probs = np.asarray(probs, dtype=float).ravel()
    if np.any(probs < 0):
        raise ValueError("probabilities must be non-negative")
    total = probs.sum()
    if total <= 0:
        raise ValueError("probabilities sum to zero")
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    probs = probs / total
    out = np.empty((plan.n_samples, len(probs)))
    for i in range(plan.n_samples):
        out[i] = _stream(plan.seed, i).multinomial(n_shots, probs) / n_shots
    return out


def asymmetric_std(samples: np.ndarray, center: float | None = None) -> tuple[float, float]:
    """One-sided spreads (minus, plus) of a possibly skewed sample cloud.

    Each side's variance averages squared deviations of that side's points
    over the *full* sample count, doubled so that a symmetric cloud
    reproduces the ordinary standard deviation on both sides.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) == 0:
        raise ValueError("empty sample")
    mu = x.mean() if center is None else float(center)
    d = x - mu
    m = len(x)
    lower = np.sqrt(2.0 / m * np.sum(d[d < 0] ** 2))
    upper = np.sqrt(2.0 / m * np.sum(d[d > 0] ** 2))
    return float(lower), float(upper)


def depth_confidence(samples, level: float = 0.68) -> int:
    """Largest depth k such that at least ``level`` of the samples reach k."""
    if not 0 < level <= 1:
        raise ValueError("level must be in (0, 1]")
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) == 0:
        raise ValueError("empty sample")
    best = 0
    for k in range(1, int(x.max()) + 1):
        if np.mean(x >= k) >= level:
            best = k
    return best


def weighted_least_squares(model, x, y, p0, weights=None, bounds=None) -> tuple[np.ndarray, np.ndarray]:
    """Levenberg-Marquardt fit of ``model(x, params)`` to ``y``.

    ``weights`` multiply squared residuals (w = 1/sigma^2 for Gaussian
    errors).  Box ``bounds`` switch the solver to a trust-region reflective
    one, since plain LM cannot honor them.  Returns (params, covariance)
    with the covariance scaled by the reduced chi-square, matching the
    convention of textbook curve fitting.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    sw = np.ones_like(y) if weights is None else np.sqrt(np.asarray(weights, dtype=float))

    def residual(p):
        return sw * (model(x, p) - y)

    if bounds is None:
        res = scipy.optimize.least_squares(residual, p0, method="lm", max_nfev=20000)
    else:
        res = scipy.optimize.least_squares(residual, p0, method="trf", bounds=bounds, max_nfev=20000)
    if not res.success:
        raise FitError(f"least squares did not converge: {res.message}")
    dof = len(y) - len(p0)
    if dof <= 0:
        raise FitError("fewer data points than parameters")
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate fit: singular normal matrix") from exc
    cov = cov * 2.0 * res.cost / dof
    return res.x, cov


@dataclass(frozen=True)
class DEResult:
    x: np.ndarray
    fun: float
    converged: bool
    nfev: int
    message: str


def differential_evolution(func, bounds, budget: int = 200, seed: int = 0, workers: int = 1) -> DEResult:
    """Global minimization with fixed, reproducible hyperparameters.

    ``budget`` is the generation limit.  Non-convergence is reported through
    the result flag rather than an exception so callers can decide whether a
    best-effort optimum is still usable.
    """
    res = scipy.optimize.differential_evolution(
        func,
        bounds,
        strategy="rand1bin",
        maxiter=budget,
        popsize=15,
        tol=0.01,
        mutation=0.8,
        recombination=0.9,
        seed=seed,
        polish=True,
        init="latinhypercube",
        workers=workers,
        updating="deferred" if workers != 1 else "immediate",
    )
    return DEResult(
        x=np.asarray(res.x, dtype=float),
        fun=float(res.fun),
        converged=bool(res.success),
        nfev=int(res.nfev),
        message=str(res.message),
    )
