"""Point estimators for a Gaussian location model Z ~ N(theta, cov).

All estimators accept a single observation of shape (n,) or a batch of
shape (reps, n) and return estimates of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gauss_core import DimensionMismatch, SPDMatrix, spd_validate


class DimensionTooSmall(ValueError):
    """Estimator requires a larger dimension than the data provides."""


# Below this value of the shrinkage quadratic form the correction term is
# treated as degenerate and the observation is returned unshrunk.
DEGENERATE_QF = 1e-30


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian prior N(theta0, xi) over the location parameter."""

    theta0: np.ndarray
    xi: SPDMatrix

    def __post_init__(self):
        t0 = np.asarray(self.theta0, dtype=float)
        if t0.ndim != 1 or t0.shape[0] != self.xi.dim:
            raise DimensionMismatch(
                f"prior mean of shape {t0.shape} against matrix of dim {self.xi.dim}"
            )
        t0.flags.writeable = False
        object.__setattr__(self, "theta0", t0)


@dataclass(frozen=True)
class Mle:
    """Identity estimator: the observation itself."""


@dataclass(frozen=True)
class NuJs:
    """James-Stein shrinkage toward a fixed anchor nu (default: the origin)."""

    nu: np.ndarray | None = None


@dataclass(frozen=True)
class MeanJs:
    """James-Stein shrinkage toward the observation's component mean."""


@dataclass(frozen=True)
class Bayes:
    """Posterior-mean estimator under a Gaussian prior."""

    prior: GaussianPrior


EstimatorKind = Mle | NuJs | MeanJs | Bayes


def estimate_mle(z) -> np.ndarray:
    """Maximum-likelihood estimate: the observation unchanged."""
    return np.array(z, dtype=float)


def estimate_nu_js(z, cov: SPDMatrix, nu=None) -> np.ndarray:
    """James-Stein estimate shrinking toward the anchor nu.

    Computes z - (n-2) cov^{-1}(z - nu) / ((z - nu)^T cov^{-2} (z - nu)).
    Requires n >= 3; when the quadratic form is degenerate (z == nu to
    round-off) the observation is returned unshrunk.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    if n < 3:
        raise DimensionTooSmall(f"shrinkage toward a fixed anchor needs n >= 3, got {n}")
    if n != cov.dim:
        raise DimensionMismatch(f"data of dim {n} against matrix of dim {cov.dim}")
    if nu is None:
        nu = np.zeros(n)
    nu = np.asarray(nu, dtype=float)
    d = z - nu
    w = cov.solve(d)
    qf = np.sum(w * w, axis=-1)
    return _shrink(z, w, qf, n - 2)


def mean_vector(z) -> np.ndarray:
    """Component mean of z broadcast back to z's shape."""
    z = np.asarray(z, dtype=float)
    return np.broadcast_to(z.mean(axis=-1, keepdims=True), z.shape).copy()


def estimate_mjs(z, cov: SPDMatrix) -> np.ndarray:
    """James-Stein estimate shrinking toward the observation's component mean.

    Same form as the fixed-anchor rule with the anchor replaced by
    mean_vector(z) and coefficient n - 3. Requires n >= 4.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    if n < 4:
        raise DimensionTooSmall(f"shrinkage toward the mean needs n >= 4, got {n}")
    if n != cov.dim:
        raise DimensionMismatch(f"data of dim {n} against matrix of dim {cov.dim}")
    d = z - mean_vector(z)
    w = cov.solve(d)
    qf = np.sum(w * w, axis=-1)
    return _shrink(z, w, qf, n - 3)


def _shrink(z, w, qf, coeff):
    if np.ndim(qf) == 0:
        if qf < DEGENERATE_QF:
            return z.copy()
        return z - (coeff / qf) * w
    out = z - coeff * w / np.where(qf < DEGENERATE_QF, np.inf, qf)[..., None]
    bad = qf < DEGENERATE_QF
    if np.any(bad):
        out[bad] = z[bad]
    return out


def estimate_bayes(z, gamma: SPDMatrix, prior: GaussianPrior) -> np.ndarray:
    """Posterior mean under prior N(theta0, xi) and likelihood N(theta, gamma).

    Evaluated as xi (gamma + xi)^{-1} z + gamma (gamma + xi)^{-1} theta0,
    which needs a single SPD factorization of gamma + xi.
    """
    z = np.asarray(z, dtype=float)
    if gamma.dim != prior.xi.dim:
        raise DimensionMismatch(
            f"data covariance dim {gamma.dim} against prior dim {prior.xi.dim}"
        )
    if z.shape[-1] != gamma.dim:
        raise DimensionMismatch(f"data of dim {z.shape[-1]} against matrix of dim {gamma.dim}")
    total = spd_validate(gamma.entries + prior.xi.entries)
    data_part = total.solve(z) @ prior.xi.entries
    prior_part = gamma.entries @ total.solve(prior.theta0)
    return data_part + prior_part


def apply_estimator(kind: EstimatorKind, z, gamma: SPDMatrix) -> np.ndarray:
    """Dispatch on the estimator kind; gamma is the data covariance."""
    if isinstance(kind, Mle):
        return estimate_mle(z)
    if isinstance(kind, NuJs):
        return estimate_nu_js(z, gamma, kind.nu)
    if isinstance(kind, MeanJs):
        return estimate_mjs(z, gamma)
    if isinstance(kind, Bayes):
        return estimate_bayes(z, gamma, kind.prior)
    raise TypeError(f"unknown estimator kind: {kind!r}")
