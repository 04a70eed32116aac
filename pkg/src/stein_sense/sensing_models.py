"""Gaussian measurement models for the four probe-usage strategies.

Each strategy consumes N applications of a theta-dependent shift and
yields an effective observation Z ~ N(theta, gamma_n), where gamma_n is
the per-strategy effective covariance:

    separate,   noiseless:  sigma / N
    sequential, noiseless:  sigma / N^2
    separate,   noisy:      (sigma + delta) / N
    sequential, noisy:      sigma / N^2 + delta / N
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .gauss_core import DimensionMismatch, SPDMatrix, spd_validate


class MissingNoiseMatrix(ValueError):
    """A noisy strategy was requested without its noise covariance."""


class Strategy(Enum):
    SEPARATE_NOISELESS = "separate_noiseless"
    SEQUENTIAL_NOISELESS = "sequential_noiseless"
    SEPARATE_NOISY = "separate_noisy"
    SEQUENTIAL_NOISY = "sequential_noisy"

    @property
    def is_noisy(self) -> bool:
        return self in (Strategy.SEPARATE_NOISY, Strategy.SEQUENTIAL_NOISY)

    @property
    def is_sequential(self) -> bool:
        return self in (Strategy.SEQUENTIAL_NOISELESS, Strategy.SEQUENTIAL_NOISY)


@dataclass(frozen=True)
class GaussianState:
    """Gaussian probe state with the given mean and covariance."""

    mean: np.ndarray
    cov: SPDMatrix

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 1 or mean.shape[0] != self.cov.dim:
            raise DimensionMismatch(
                f"mean of shape {mean.shape} against matrix of dim {self.cov.dim}"
            )
        mean.flags.writeable = False
        object.__setattr__(self, "mean", mean)


@dataclass(frozen=True)
class ModelPoint:
    """Effective Gaussian law of one strategy at one resource count.

    The observation is distributed as N(loc, gamma_n); n_resources is the
    number of shift applications the point consumed.
    """

    theta: np.ndarray
    loc: np.ndarray
    gamma_n: SPDMatrix
    n_resources: int

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        loc = np.asarray(self.loc, dtype=float)
        for name, v in (("theta", theta), ("loc", loc)):
            if v.ndim != 1 or v.shape[0] != self.gamma_n.dim:
                raise DimensionMismatch(
                    f"{name} of shape {v.shape} against matrix of dim {self.gamma_n.dim}"
                )
        if self.n_resources < 1:
            raise ValueError("n_resources must be >= 1")
        theta.flags.writeable = False
        loc.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "loc", loc)


def model_distribution(
    strategy: Strategy,
    theta,
    sigma: SPDMatrix,
    delta: SPDMatrix | None,
    n_resources: int,
) -> ModelPoint:
    """Effective observation law of a strategy after n_resources applications.

    delta must be present exactly when the strategy is noisy.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != sigma.dim:
        raise DimensionMismatch(
            f"theta of shape {theta.shape} against matrix of dim {sigma.dim}"
        )
    if n_resources < 1:
        raise ValueError("n_resources must be >= 1")
    if strategy.is_noisy:
        if delta is None:
            raise MissingNoiseMatrix(f"{strategy.value} requires a noise covariance")
        if delta.dim != sigma.dim:
            raise DimensionMismatch(
                f"noise matrix of dim {delta.dim} against sigma of dim {sigma.dim}"
            )
    elif delta is not None:
        raise ValueError(f"{strategy.value} takes no noise covariance")

    n = float(n_resources)
    if strategy is Strategy.SEPARATE_NOISELESS:
        entries = sigma.entries / n
    elif strategy is Strategy.SEQUENTIAL_NOISELESS:
        entries = sigma.entries / n**2
    elif strategy is Strategy.SEPARATE_NOISY:
        entries = (sigma.entries + delta.entries) / n
    else:
        entries = sigma.entries / n**2 + delta.entries / n
    return ModelPoint(
        theta=theta, loc=theta.copy(), gamma_n=spd_validate(entries), n_resources=n_resources
    )


def apply_noise_channel(state: GaussianState, theta, delta: SPDMatrix) -> GaussianState:
    """One noisy application: shift the mean by theta, add delta to the covariance."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != state.mean.shape:
        raise DimensionMismatch(
            f"shift of shape {theta.shape} against state of shape {state.mean.shape}"
        )
    if delta.dim != state.cov.dim:
        raise DimensionMismatch(
            f"noise matrix of dim {delta.dim} against state of dim {state.cov.dim}"
        )
    return GaussianState(
        mean=state.mean + theta, cov=spd_validate(state.cov.entries + delta.entries)
    )


def measurement_distribution(a: SPDMatrix, a_anc: SPDMatrix, theta) -> ModelPoint:
    """Law of the displacement readout on a probe/ancilla covariance pair.

    The readout is unbiased with covariance a + a_anc, independent of the
    split between the two matrices.
    """
    if a.dim != a_anc.dim:
        raise DimensionMismatch(f"probe dim {a.dim} against ancilla dim {a_anc.dim}")
    theta = np.asarray(theta, dtype=float)
    return ModelPoint(
        theta=theta,
        loc=theta.copy(),
        gamma_n=spd_validate(a.entries + a_anc.entries),
        n_resources=1,
    )


def lemma1_check(a: SPDMatrix, a_anc: SPDMatrix) -> float:
    """Max elementwise discrepancy among the four readout weight matrices.

    Computes, from their definitions, the four matrices that weight the
    readout statistic and returns the largest absolute deviation from
    (a + a_anc)^{-1}; analytically all four coincide with it.
    """
    if a.dim != a_anc.dim:
        raise DimensionMismatch(f"probe dim {a.dim} against ancilla dim {a_anc.dim}")
    ai = np.linalg.inv(a.entries)
    bi = np.linalg.inv(a_anc.entries)
    s = np.linalg.inv(ai + bi)
    m1 = ai - ai @ s @ ai
    m2 = bi - bi @ s @ bi
    m3 = bi @ s @ ai
    m4 = ai @ s @ bi
    target = np.linalg.inv(a.entries + a_anc.entries)
    return float(max(np.max(np.abs(m - target)) for m in (m1, m2, m3, m4)))
