"""Seedable randomness and small SPD linear algebra shared by every module."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve


class NotSymmetric(ValueError):
    """Matrix is not square or not symmetric within tolerance."""


class NotPositiveDefinite(ValueError):
    """Cholesky factorization found a non-positive pivot."""


class DimensionMismatch(ValueError):
    """Vector and matrix dimensions disagree."""


# Relative asymmetry tolerated by spd_validate.
SYMMETRY_RTOL = 1e-12

_U64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class SPDMatrix:
    """Symmetric positive-definite matrix with a cached Cholesky factor.

    Instances are immutable and safe to share across threads; obtain one
    through `spd_validate`, which symmetrizes, factorizes and freezes the
    entries. `factor` is lower triangular with entries == factor @ factor.T.
    """

    dim: int
    entries: np.ndarray
    factor: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve entries @ x = b along the last axis of b.

        Uses the cached factor (one forward and one back substitution);
        the explicit inverse is never formed.
        """
        b = np.asarray(b, dtype=float)
        if b.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"vector of length {b.shape[-1]} against matrix of dim {self.dim}"
            )
        if b.ndim == 1:
            return cho_solve((self.factor, True), b)
        flat = b.reshape(-1, self.dim)
        return cho_solve((self.factor, True), flat.T).T.reshape(b.shape)

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))


def spd_validate(raw) -> SPDMatrix:
    """Check symmetry and positive definiteness, returning an SPDMatrix.

    Raises NotSymmetric for non-square or asymmetric input (relative
    tolerance 1e-12) and NotPositiveDefinite when the Cholesky
    factorization fails.
    """
    m = np.asarray(raw, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(float(np.max(np.abs(m))), 1e-300)
    asym = float(np.max(np.abs(m - m.T)))
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(
            f"asymmetry {asym:.3e} exceeds {SYMMETRY_RTOL:.0e} relative tolerance"
        )
    sym = (m + m.T) / 2.0
    try:
        factor = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    sym.flags.writeable = False
    factor.flags.writeable = False
    return SPDMatrix(dim=sym.shape[0], entries=sym, factor=factor)


@dataclass(frozen=True)
class SeededRng:
    """Value-semantics RNG handle: a (seed, stream) pair.

    A given handle always reproduces the same draws, so functions taking a
    SeededRng are pure. Independent streams come from `rng_fork`, never
    from sharing a handle between consumers.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh PCG64 generator keyed by (seed, stream)."""
        seq = np.random.SeedSequence(
            entropy=self.seed & _U64, spawn_key=(self.stream & _U64,)
        )
        return np.random.Generator(np.random.PCG64(seq))


def _mix64(x: int) -> int:
    # splitmix64 finalizer: a bijection on 64-bit ints with good avalanche
    x &= _U64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64
    return (x ^ (x >> 31)) & _U64


def rng_fork(parent: SeededRng, child_index: int) -> SeededRng:
    """Derive the child_index-th independent substream of parent.

    Distinct child indices of one parent map to distinct streams (the
    final mix is a bijection applied to distinct inputs). The seed is
    carried through unchanged, so forks of different seeds never collide
    in output even if their stream labels coincide.
    """
    if child_index < 0:
        raise ValueError("child_index must be nonnegative")
    base = _mix64(parent.stream ^ _GOLDEN)
    return SeededRng(seed=parent.seed, stream=_mix64((base + child_index) & _U64))


def mvn_sample(mean, cov: SPDMatrix, rng: SeededRng, size: int | None = None):
    """Draw from N(mean, cov) via the cached Cholesky factor.

    Returns an (n,) vector when size is None, else a (size, n) array.
    """
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 1 or mean.shape[0] != cov.dim:
        raise DimensionMismatch(
            f"mean of shape {mean.shape} against matrix of dim {cov.dim}"
        )
    gen = rng.generator()
    if size is None:
        return mean + cov.factor @ gen.standard_normal(cov.dim)
    z = gen.standard_normal((size, cov.dim))
    return mean + z @ cov.factor.T


def quad_form_inv2(v, cov: SPDMatrix):
    """Quadratic form v^T cov^{-2} v, batched over leading axes of v.

    Computed as ||cov^{-1} v||^2 with the factored solve; no explicit
    inverse. Returns a float for a single vector, an array for a batch.
    """
    v = np.asarray(v, dtype=float)
    w = cov.solve(v)
    out = np.sum(w * w, axis=-1)
    if v.ndim == 1:
        return float(out)
    return out
