"""Mean-squared-error risk evaluation: exact, semi-analytic and Monte Carlo.

Monte Carlo loops draw in fixed-size chunks, each chunk on its own forked
RNG stream, so results are reproducible for a given SeededRng regardless
of chunk scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .estimators import (
    Bayes,
    EstimatorKind,
    GaussianPrior,
    MeanJs,
    Mle,
    NuJs,
    apply_estimator,
    mean_vector,
)
from .gauss_core import DimensionMismatch, SeededRng, SPDMatrix, rng_fork, spd_validate
from .sensing_models import ModelPoint

CHUNK = 1 << 15


class NonPositiveGap(ValueError):
    """A scaling fit was requested on advantages not strictly above 1."""


class RiskMethod(Enum):
    EXACT = "exact"
    SEMI_ANALYTIC = "semi_analytic"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class RiskEstimate:
    """A risk value with its Monte Carlo standard error.

    std_error is 0 exactly when the method is EXACT; reps records the
    number of draws behind a stochastic estimate (1 for exact values).
    """

    value: float
    std_error: float
    reps: int
    method: RiskMethod

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("risk cannot be negative")
        if (self.std_error == 0.0) != (self.method is RiskMethod.EXACT):
            raise ValueError("std_error must be 0 exactly for exact values")


@dataclass(frozen=True)
class ValueWithError:
    """A scalar statistic with a propagated standard error."""

    value: float
    std_error: float


@dataclass(frozen=True)
class AdvantageCurve:
    """One advantage-versus-resources curve on an ascending resource grid."""

    n_values: np.ndarray
    ad_values: np.ndarray
    se_values: np.ndarray
    label: str

    def __post_init__(self):
        n = np.asarray(self.n_values, dtype=int)
        ad = np.asarray(self.ad_values, dtype=float)
        se = np.asarray(self.se_values, dtype=float)
        if not (n.shape == ad.shape == se.shape) or n.ndim != 1:
            raise ValueError("curve arrays must share one-dimensional shape")
        if np.any(n[1:] <= n[:-1]) or np.any(n < 1):
            raise ValueError("resource grid must be ascending positive integers")
        for name, arr in (("n_values", n), ("ad_values", ad), ("se_values", se)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def _chunk_sizes(reps: int):
    full, rem = divmod(reps, CHUNK)
    sizes = [CHUNK] * full
    if rem:
        sizes.append(rem)
    return sizes


def risk_mle_exact(gamma: SPDMatrix) -> RiskEstimate:
    """MLE risk under N(theta, gamma): the trace of gamma, exactly."""
    return RiskEstimate(value=gamma.trace, std_error=0.0, reps=1, method=RiskMethod.EXACT)


def risk_mc(kind: EstimatorKind, point: ModelPoint, reps: int, rng: SeededRng) -> RiskEstimate:
    """Monte Carlo risk of an estimator at a model point.

    Draws Z ~ N(loc, gamma_n), applies the estimator, and averages the
    squared error against theta.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2 for a standard error")
    gamma = point.gamma_n
    s1 = 0.0
    s2 = 0.0
    for i, m in enumerate(_chunk_sizes(reps)):
        gen = rng_fork(rng, i).generator()
        z = point.loc + gen.standard_normal((m, gamma.dim)) @ gamma.factor.T
        est = apply_estimator(kind, z, gamma)
        err = np.sum((est - point.theta) ** 2, axis=-1)
        s1 += float(err.sum())
        s2 += float((err * err).sum())
    return _mc_estimate(s1, s2, reps, scale=1.0, base=0.0)


def _mc_estimate(s1, s2, reps, scale, base):
    # mean and SE of base + scale * sample_mean, from raw sums
    mean = s1 / reps
    var = max(s2 - reps * mean * mean, 0.0) / (reps - 1)
    return RiskEstimate(
        value=base + scale * mean,
        std_error=abs(scale) * float(np.sqrt(var / reps)),
        reps=reps,
        method=RiskMethod.MONTE_CARLO if base == 0.0 else RiskMethod.SEMI_ANALYTIC,
    )


def risk_js_semianalytic(
    theta, gamma: SPDMatrix, reps: int, rng: SeededRng, nu=None
) -> RiskEstimate:
    """Fixed-anchor James-Stein risk via its closed-form correction term.

    The risk is Tr(gamma) - (n-2)^2 E[1/((Z-nu)^T gamma^{-2} (Z-nu))] with
    Z ~ N(theta, gamma); only the expectation is sampled, which gives far
    smaller variance than squared-error sampling at equal reps.
    """
    theta = np.asarray(theta, dtype=float)
    n = gamma.dim
    if n < 3:
        raise ValueError(f"fixed-anchor shrinkage risk needs n >= 3, got {n}")
    if theta.shape != (n,):
        raise DimensionMismatch(f"theta of shape {theta.shape} against matrix of dim {n}")
    if reps < 2:
        raise ValueError("reps must be >= 2 for a standard error")
    if nu is None:
        nu = np.zeros(n)
    nu = np.asarray(nu, dtype=float)
    return _mc_estimate_qf(theta, gamma, gamma, lambda z: nu, (n - 2) ** 2, reps, rng)


def risk_mjs_semianalytic(theta, gamma: SPDMatrix, reps: int, rng: SeededRng) -> RiskEstimate:
    """Mean-anchored James-Stein risk via its closed-form correction term.

    Same structure as the fixed-anchor case with anchor mean_vector(Z) and
    coefficient (n-3)^2; requires n >= 4.
    """
    theta = np.asarray(theta, dtype=float)
    n = gamma.dim
    if n < 4:
        raise ValueError(f"mean-anchored shrinkage risk needs n >= 4, got {n}")
    if theta.shape != (n,):
        raise DimensionMismatch(f"theta of shape {theta.shape} against matrix of dim {n}")
    if reps < 2:
        raise ValueError("reps must be >= 2 for a standard error")
    return _mc_estimate_qf(theta, gamma, gamma, mean_vector, (n - 3) ** 2, reps, rng)


def advantage(risk_a: RiskEstimate, risk_b: RiskEstimate) -> ValueWithError:
    """Risk ratio risk_b / risk_a: how much estimator/strategy a beats b.

    Values above 1 favor a. The standard error combines both inputs by
    the delta method, treating them as independent.
    """
    if risk_a.value == 0.0:
        raise ZeroDivisionError("advantage undefined against a zero risk")
    va, vb = risk_a.value, risk_b.value
    ratio = vb / va
    se = float(np.sqrt((risk_b.std_error / va) ** 2 + (vb * risk_a.std_error / va**2) ** 2))
    return ValueWithError(value=ratio, std_error=se)


def bayes_risk_mc(
    kind: EstimatorKind, prior: GaussianPrior, gamma: SPDMatrix, reps: int, rng: SeededRng
) -> RiskEstimate:
    """Monte Carlo Bayes risk: theta ~ prior, Z ~ N(theta, gamma), squared error."""
    if gamma.dim != prior.xi.dim:
        raise DimensionMismatch(
            f"data covariance dim {gamma.dim} against prior dim {prior.xi.dim}"
        )
    if reps < 2:
        raise ValueError("reps must be >= 2 for a standard error")
    n = gamma.dim
    s1 = 0.0
    s2 = 0.0
    for i, m in enumerate(_chunk_sizes(reps)):
        gen = rng_fork(rng, i).generator()
        theta = prior.theta0 + gen.standard_normal((m, n)) @ prior.xi.factor.T
        z = theta + gen.standard_normal((m, n)) @ gamma.factor.T
        est = apply_estimator(kind, z, gamma)
        err = np.sum((est - theta) ** 2, axis=-1)
        s1 += float(err.sum())
        s2 += float((err * err).sum())
    return _mc_estimate(s1, s2, reps, scale=1.0, base=0.0)


def bayes_risk_table(
    kind: EstimatorKind, gamma: SPDMatrix, prior: GaussianPrior, reps: int, rng: SeededRng
) -> RiskEstimate:
    """Closed-form Bayes risk for MLE, fixed-anchor JS, mean JS, or posterior mean.

    MLE and posterior mean are exact; both James-Stein rows reduce to an
    expectation over the marginal law Z ~ N(theta0, gamma + xi), sampled
    semi-analytically.
    """
    if gamma.dim != prior.xi.dim:
        raise DimensionMismatch(
            f"data covariance dim {gamma.dim} against prior dim {prior.xi.dim}"
        )
    n = gamma.dim
    if isinstance(kind, Mle):
        return risk_mle_exact(gamma)
    if isinstance(kind, Bayes):
        total = np.linalg.solve(gamma.entries + prior.xi.entries, gamma.entries)
        value = gamma.trace - float(np.trace(gamma.entries @ total))
        return RiskEstimate(value=value, std_error=0.0, reps=1, method=RiskMethod.EXACT)
    if isinstance(kind, (NuJs, MeanJs)):
        marginal = spd_validate(gamma.entries + prior.xi.entries)
        if isinstance(kind, NuJs):
            if n < 3:
                raise ValueError(f"fixed-anchor shrinkage risk needs n >= 3, got {n}")
            nu = np.zeros(n) if kind.nu is None else np.asarray(kind.nu, dtype=float)
            anchor, coeff = (lambda z: nu), (n - 2) ** 2
        else:
            if n < 4:
                raise ValueError(f"mean-anchored shrinkage risk needs n >= 4, got {n}")
            anchor, coeff = mean_vector, (n - 3) ** 2
        # the quadratic form keeps the data covariance gamma; only the
        # sampling law is the marginal
        return _mc_estimate_qf(prior.theta0, gamma, marginal, anchor, coeff, reps, rng)
    raise TypeError(f"unknown estimator kind: {kind!r}")


def _mc_estimate_qf(center, gamma, marginal, anchor_mean, coeff, reps, rng):
    s1 = 0.0
    s2 = 0.0
    n = gamma.dim
    for i, m in enumerate(_chunk_sizes(reps)):
        gen = rng_fork(rng, i).generator()
        z = center + gen.standard_normal((m, n)) @ marginal.factor.T
        d = z - anchor_mean(z)
        w = gamma.solve(d)
        qf = np.sum(w * w, axis=-1)
        inv = 1.0 / qf
        s1 += float(inv.sum())
        s2 += float((inv * inv).sum())
    return _mc_estimate(s1, s2, reps, scale=-coeff, base=gamma.trace)


def scaling_exponent(curve: AdvantageCurve) -> float:
    """Least-squares slope of log(AD_N - 1) against log N.

    Requires at least 5 grid points and advantages strictly above 1
    everywhere; raises NonPositiveGap otherwise.
    """
    if curve.n_values.shape[0] < 5:
        raise ValueError("scaling fit needs at least 5 grid points")
    gap = curve.ad_values - 1.0
    if np.any(gap <= 0):
        raise NonPositiveGap("advantages must exceed 1 everywhere for a log-log fit")
    slope = np.polyfit(np.log(curve.n_values.astype(float)), np.log(gap), 1)[0]
    return float(slope)
