"""Postselective filtering of a Gaussian probe.

Covers the exact postselected position density, a rejection sampler for
it, the adaptive iterative estimation strategy built on the filter, and
the PAD statistic comparing the James-Stein advantage with and without
postselection.

Throughout, theta is the true location, theta0 the filter's current
guess, delta = theta - theta0, t in (0,1] the filter transmission and B
the probe width; an unfiltered position readout is N(theta, (B/4)I).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import MeanJs, Mle
from .gauss_core import DimensionMismatch, SeededRng, rng_fork, spd_validate
from .risk_engine import ValueWithError, advantage, risk_mjs_semianalytic, risk_mle_exact

# Default floor for the filter transmission during a strategy run.
T_MIN = 1e-4

# Largest candidate block drawn per rejection round.
_BLOCK_CAP = 1 << 17


class MaxAttemptsExceeded(RuntimeError):
    """Rejection sampling hit its attempt budget; the (t, delta) pair is
    pathological and the caller should treat the run as failed."""


@dataclass(frozen=True)
class ProbeModel:
    """Gaussian probe of width B centered on a hidden location theta.

    The position density of one unfiltered probe is N(theta, (B/4)I).
    Requires dimension n >= 4 so the mean-anchored James-Stein estimator
    applies.
    """

    theta: np.ndarray
    B: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or theta.shape[0] < 4:
            raise ValueError(f"probe dimension must be >= 4, got shape {theta.shape}")
        if not self.B > 0:
            raise ValueError("B must be positive")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def C(self) -> float:
        """Normalization constant sqrt(2 / (pi B)) of the probe density."""
        return float(np.sqrt(2.0 / (np.pi * self.B)))


@dataclass
class FilterState:
    """Evolving state of the iterative strategy.

    Holds the current guess theta0, the transmission t, the
    per-measurement estimates collected so far, and the measurement
    counter k. t never increases over a run.
    """

    theta0: np.ndarray
    t: float
    estimates: list = field(default_factory=list)
    k: int = 0


@dataclass(frozen=True)
class StrategyTrace:
    """Per-measurement records of one strategy run.

    Arrays are indexed by measurement (entry j is measurement k = j + 1):
    t is the transmission in effect during the measurement, theta_bar the
    collated estimate, delta_hat the guess-error estimate (NaN at k = 1),
    risk the squared error of theta_bar, and attempts the number of
    filter-pass attempts the measurement consumed.
    """

    k: np.ndarray
    t: np.ndarray
    theta_bar: np.ndarray
    delta_hat: np.ndarray
    risk: np.ndarray
    attempts: np.ndarray


def overlap(theta, theta0, B: float) -> float:
    """Squared-exponential overlap exp(-||delta||^2 / (2B)) of two probes."""
    if not B > 0:
        raise ValueError("B must be positive")
    d = np.asarray(theta, dtype=float) - np.asarray(theta0, dtype=float)
    return float(np.exp(-np.dot(d, d) / (2.0 * B)))


def pass_probability(delta, t: float, B: float) -> float:
    """Exact probability 1 + (t^2 - 1) exp(-||delta||^2 / B) of passing the filter."""
    _check_t_B(t, B)
    d = np.asarray(delta, dtype=float)
    return float(1.0 + (t * t - 1.0) * np.exp(-np.dot(d, d) / B))


def pass_probability_small_delta(t: float) -> float:
    """Small-delta approximation of the pass probability: t^2."""
    return t * t


def _check_t_B(t, B):
    if not 0.0 < t <= 1.0:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    if not B > 0:
        raise ValueError("B must be positive")


def _component_pdf(x, center, B):
    # density of N(center, (B/4)I) at rows of x
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[-1]
    c = (2.0 / (np.pi * B)) ** (n / 2.0)
    sq = np.sum((x - center) ** 2, axis=-1)
    return c * np.exp(-2.0 * sq / B)


def postselected_pdf(x, theta, theta0, t: float, B: float):
    """Exact position density after the filter.

    Accepts a single point of shape (n,) or a batch of shape (m, n);
    returns a float or an (m,) array accordingly.
    """
    _check_t_B(t, B)
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[-1] != theta.shape[0] or theta.shape != theta0.shape:
        raise DimensionMismatch("x, theta and theta0 must share one dimension")
    n = theta.shape[0]
    d = theta - theta0
    half_overlap = np.exp(-np.dot(d, d) / (2.0 * B))
    a = np.exp(-np.sum((pts - theta) ** 2, axis=-1) / B)
    b = (1.0 - t) * half_overlap * np.exp(-np.sum((pts - theta0) ** 2, axis=-1) / B)
    c = (2.0 / (np.pi * B)) ** (n / 2.0)
    num = c * (a - b) ** 2
    den = 1.0 + (t * t - 1.0) * half_overlap**2
    out = num / den
    return float(out[0]) if single else out


def marginal_pdf(x, axis: int, theta, theta0, t: float, B: float):
    """One-dimensional marginal of the postselected density along axis.

    Each of the three product terms of the joint density integrates
    coordinate-wise, leaving a signed mixture of three N(., B/4)
    components centered at theta[axis], the midpoint, and theta0[axis].
    """
    _check_t_B(t, B)
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    d = theta - theta0
    e = np.exp(-np.dot(d, d) / B)
    den = 1.0 + (t * t - 1.0) * e
    c1 = np.sqrt(2.0 / (np.pi * B))

    def phi(center):
        return c1 * np.exp(-2.0 * (x - center) ** 2 / B)

    mid = 0.5 * (theta[axis] + theta0[axis])
    num = phi(theta[axis]) - 2.0 * (1.0 - t) * e * phi(mid) + (1.0 - t) ** 2 * e * phi(theta0[axis])
    return num / den


def envelope_constant(delta, t: float, B: float) -> float:
    """Rejection-sampling envelope constant M >= 1 for the postselected density."""
    _check_t_B(t, B)
    d = np.asarray(delta, dtype=float)
    e = float(np.exp(-np.dot(d, d) / B))
    return (1.0 + (1.0 - t) ** 2 * e) / (1.0 + (t * t - 1.0) * e)


def mixture_weight(delta, t: float, B: float) -> float:
    """Weight p of the theta-centered component in the proposal mixture."""
    _check_t_B(t, B)
    d = np.asarray(delta, dtype=float)
    e = float(np.exp(-np.dot(d, d) / B))
    return 1.0 / (1.0 + (1.0 - t) ** 2 * e)


def _proposal_pdf(pts, theta, theta0, p, B):
    return p * _component_pdf(pts, theta, B) + (1.0 - p) * _component_pdf(pts, theta0, B)


def _draw_block(gen, count, theta, theta0, p, B):
    n = theta.shape[0]
    pick = gen.random(count) < p
    centers = np.where(pick[:, None], theta[None, :], theta0[None, :])
    return centers + gen.standard_normal((count, n)) * np.sqrt(B / 4.0)


def _accept_mask(gen, pts, theta, theta0, t, B, m_env, p):
    f = postselected_pdf(pts, theta, theta0, t, B)
    g = _proposal_pdf(pts, theta, theta0, p, B)
    return gen.random(pts.shape[0]) < f / (m_env * g)


def _draw_one(gen, theta, theta0, t, B, max_attempts):
    # one exact draw; returns (sample, attempts consumed)
    n = theta.shape[0]
    if t == 1.0:
        return theta + gen.standard_normal(n) * np.sqrt(B / 4.0), 1
    m_env = envelope_constant(theta - theta0, t, B)
    p = mixture_weight(theta - theta0, t, B)
    block = min(int(1.3 * m_env) + 8, _BLOCK_CAP)
    used = 0
    while used < max_attempts:
        count = min(block, max_attempts - used)
        pts = _draw_block(gen, count, theta, theta0, p, B)
        acc = _accept_mask(gen, pts, theta, theta0, t, B, m_env, p)
        hits = np.flatnonzero(acc)
        if hits.size:
            return pts[hits[0]], used + int(hits[0]) + 1
        used += count
    raise MaxAttemptsExceeded(
        f"no candidate accepted in {max_attempts} attempts (t={t}, ||delta||="
        f"{float(np.linalg.norm(theta - theta0)):.3g})"
    )


def sample_postselected(
    theta, theta0, t: float, B: float, rng: SeededRng, size: int | None = None,
    max_attempts: int = 10**6,
):
    """Exact draw(s) from the postselected density by rejection sampling.

    The proposal is the two-component mixture p N(theta, B/4 I) +
    (1-p) N(theta0, B/4 I); each attempt is accepted with probability
    f / (M g), so the per-attempt acceptance rate is 1/M. Returns an
    (n,) vector when size is None, else a (size, n) array. max_attempts
    bounds the total attempts of the call; exceeding it raises
    MaxAttemptsExceeded.
    """
    _check_t_B(t, B)
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    theta = np.asarray(theta, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if theta.shape != theta0.shape or theta.ndim != 1:
        raise DimensionMismatch("theta and theta0 must be vectors of one dimension")
    gen = rng.generator()
    if size is None:
        x, _ = _draw_one(gen, theta, theta0, t, B, max_attempts)
        return x
    n = theta.shape[0]
    if t == 1.0:
        return theta + gen.standard_normal((size, n)) * np.sqrt(B / 4.0)
    m_env = envelope_constant(theta - theta0, t, B)
    p = mixture_weight(theta - theta0, t, B)
    out = np.empty((size, n))
    filled = 0
    used = 0
    while filled < size:
        if used >= max_attempts:
            raise MaxAttemptsExceeded(
                f"{filled}/{size} samples after {max_attempts} attempts (t={t})"
            )
        want = size - filled
        count = min(max(int(1.3 * m_env * want) + 8, 64), _BLOCK_CAP, max_attempts - used)
        pts = _draw_block(gen, count, theta, theta0, p, B)
        acc = _accept_mask(gen, pts, theta, theta0, t, B, m_env, p)
        hits = pts[acc]
        take = min(hits.shape[0], want)
        out[filled : filled + take] = hits[:take]
        filled += take
        used += count
    return out


def acceptance_rate(theta, theta0, t: float, B: float, n_attempts: int, rng: SeededRng) -> float:
    """Empirical acceptance rate of the rejection sampler over fixed attempts.

    Draws n_attempts proposal candidates and accept-tests each once; the
    expected rate is 1 / envelope_constant.
    """
    _check_t_B(t, B)
    theta = np.asarray(theta, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    gen = rng.generator()
    m_env = envelope_constant(theta - theta0, t, B)
    p = mixture_weight(theta - theta0, t, B)
    accepted = 0
    left = n_attempts
    while left > 0:
        count = min(left, _BLOCK_CAP)
        pts = _draw_block(gen, count, theta, theta0, p, B)
        accepted += int(np.count_nonzero(_accept_mask(gen, pts, theta, theta0, t, B, m_env, p)))
        left -= count
    return accepted / n_attempts


def isotropy(theta) -> float:
    """Sum of squared deviations of theta's components from their mean."""
    theta = np.asarray(theta, dtype=float)
    return float(np.sum((theta - theta.mean()) ** 2))


def _mjs_iso(y, c, n):
    # mean-anchored shrinkage under isotropic covariance c*I; matches
    # estimate_mjs(y, c*I) to round-off
    d = y - y.mean()
    q = float(np.dot(d, d))
    if q / (c * c) < 1e-30:
        return y.copy()
    return y - ((n - 3) * c / q) * d


def run_iterative_strategy(
    probe: ProbeModel,
    n_measurements: int,
    estimator: Mle | MeanJs,
    rng: SeededRng,
    adaptive: bool = True,
    t_min: float = T_MIN,
    max_attempts: int = 10**6,
) -> StrategyTrace:
    """Run the adaptive postselected estimation strategy once.

    Starts from guess 0 and open filter t = 1. Each measurement draws a
    postselected position X_k, rescales it to Y_k = theta0 + t (X_k -
    theta0) so that Y_k is approximately N(theta, t^2 (B/4) I), and
    applies the per-measurement estimator under that covariance. The
    collated estimate is the mean of the per-measurement estimates; the
    guess error delta_hat estimates the distance ||theta_bar - theta|| as
    the sample standard deviation of the estimate vectors (root mean
    squared deviation from their mean) divided by sqrt(k). When that
    estimate falls below 0.3 t (checked from k = 2), the filter is
    tightened to t = 3 delta_hat (floored at t_min) and recentered on the
    collated estimate; t never increases. With adaptive=False the filter
    stays open (t = 1) throughout.
    """
    if n_measurements < 1:
        raise ValueError("n_measurements must be >= 1")
    if not isinstance(estimator, (Mle, MeanJs)):
        raise TypeError("estimator must be Mle or MeanJs")
    n = probe.n
    B = probe.B
    gen = rng.generator()
    state = FilterState(theta0=np.zeros(n), t=1.0)

    use_mjs = isinstance(estimator, MeanJs)
    sum_est = np.zeros(n)
    sum_sq = 0.0

    t_rec = np.empty(n_measurements)
    bar_rec = np.empty((n_measurements, n))
    dh_rec = np.empty(n_measurements)
    risk_rec = np.empty(n_measurements)
    att_rec = np.empty(n_measurements, dtype=int)

    for j in range(n_measurements):
        k = j + 1
        t = state.t
        x, att = _draw_one(gen, probe.theta, state.theta0, t, B, max_attempts)
        y = state.theta0 + t * (x - state.theta0)
        c = t * t * B / 4.0
        est = _mjs_iso(y, c, n) if use_mjs else y
        state.estimates.append(est)
        state.k = k
        sum_est += est
        sum_sq += float(np.dot(est, est))
        theta_bar = sum_est / k
        if k >= 2:
            # sum of squared deviations of the estimate vectors from their
            # mean, via running sums
            spread = max(sum_sq - k * float(np.dot(theta_bar, theta_bar)), 0.0)
            sigma_hat = np.sqrt(spread / (k - 1))
            delta_hat = sigma_hat / np.sqrt(k)
        else:
            delta_hat = np.nan

        t_rec[j] = t
        bar_rec[j] = theta_bar
        dh_rec[j] = delta_hat
        diff = theta_bar - probe.theta
        risk_rec[j] = float(np.dot(diff, diff))
        att_rec[j] = att

        if adaptive and k >= 2 and delta_hat < 0.3 * t:
            state.t = max(3.0 * delta_hat, t_min)
            state.theta0 = theta_bar.copy()

    return StrategyTrace(
        k=np.arange(1, n_measurements + 1),
        t=t_rec,
        theta_bar=bar_rec,
        delta_hat=dh_rec,
        risk=risk_rec,
        attempts=att_rec,
    )


def _strategy_risk_curves(probe, n_max, estimator, reps, rng, adaptive, max_attempts):
    # mean and SE of R_k over reps independent runs, for every k <= n_max
    s1 = np.zeros(n_max)
    s2 = np.zeros(n_max)
    for r in range(reps):
        trace = run_iterative_strategy(
            probe, n_max, estimator, rng_fork(rng, r), adaptive=adaptive,
            max_attempts=max_attempts,
        )
        s1 += trace.risk
        s2 += trace.risk**2
    mean = s1 / reps
    var = np.maximum(s2 - reps * mean * mean, 0.0) / (reps - 1)
    return mean, np.sqrt(var / reps)


def pad_curve(
    n_values,
    probe: ProbeModel,
    reps: int,
    rng: SeededRng,
    adaptive: bool = True,
    den_reps: int = 10**5,
    max_attempts: int = 10**6,
) -> list[ValueWithError]:
    """PAD at each resource count in n_values, from one shared set of runs.

    PAD(N) is the postselected James-Stein advantage divided by the plain
    one: the numerator compares mean strategy risks at measurement N over
    reps runs of the mean-JS and MLE strategy variants; the denominator
    is the risk-engine advantage of mean-JS over MLE on the unfiltered
    model of N averaged probes, N(theta, B/(4N) I).
    """
    n_values = [int(v) for v in n_values]
    if any(v < 1 for v in n_values):
        raise ValueError("resource counts must be >= 1")
    if reps < 100:
        raise ValueError("reps must be >= 100")
    n_max = max(n_values)
    mle_mean, mle_se = _strategy_risk_curves(
        probe, n_max, Mle(), reps, rng_fork(rng, 0), adaptive, max_attempts
    )
    mjs_mean, mjs_se = _strategy_risk_curves(
        probe, n_max, MeanJs(), reps, rng_fork(rng, 1), adaptive, max_attempts
    )
    den_rng = rng_fork(rng, 2)
    out = []
    for idx, n_res in enumerate(n_values):
        j = n_res - 1
        num = mle_mean[j] / mjs_mean[j]
        num_rel = (mle_se[j] / mle_mean[j]) ** 2 + (mjs_se[j] / mjs_mean[j]) ** 2
        gamma = spd_validate(np.eye(probe.n) * (probe.B / (4.0 * n_res)))
        den = advantage(
            risk_mjs_semianalytic(probe.theta, gamma, den_reps, rng_fork(den_rng, idx)),
            risk_mle_exact(gamma),
        )
        value = num / den.value
        rel = num_rel + (den.std_error / den.value) ** 2
        out.append(ValueWithError(value=float(value), std_error=float(value * np.sqrt(rel))))
    return out


def pad(
    n_resources: int,
    probe: ProbeModel,
    reps: int,
    rng: SeededRng,
    adaptive: bool = True,
    den_reps: int = 10**5,
) -> ValueWithError:
    """PAD at a single resource count; see pad_curve."""
    return pad_curve([n_resources], probe, reps, rng, adaptive=adaptive, den_reps=den_reps)[0]
