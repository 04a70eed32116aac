"""Acceptance gate: one test per top-level claim the library must reproduce.

Each test prints one PASS/FAIL-style line of evidence (visible with -v on
failure, or with -s always) before asserting.
"""

import shutil
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

from stein_sense.estimators import Bayes, GaussianPrior, MeanJs, Mle, NuJs
from stein_sense.gauss_core import SeededRng, rng_fork, spd_validate
from stein_sense.postselect import (
    ProbeModel,
    acceptance_rate,
    envelope_constant,
    marginal_pdf,
    pad_curve,
    run_iterative_strategy,
    sample_postselected,
)
from stein_sense.risk_engine import (
    advantage,
    bayes_risk_mc,
    bayes_risk_table,
    risk_js_semianalytic,
    risk_mle_exact,
)
from stein_sense.sensing_models import Strategy, lemma1_check, model_distribution

THETA_FIG1 = np.array([0.5, -0.2, 0.3, 0.1])
SIGMA_FIG1 = spd_validate(4.0 * np.eye(4))
THETA_FIG2 = np.array([1.0, -2.0, 3.0, 1.5]) / 30.0


def _report(name, ok, detail):
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")


def test_criterion_01_js_dominance():
    # 50 randomized instances, n in 3..8, ||theta|| <= 5: the fixed-anchor
    # JS risk sits below Tr(gamma) by at least 4 standard errors
    gen = np.random.default_rng(101)
    worst = np.inf
    for i in range(50):
        dim = int(gen.integers(3, 9))
        q = gen.standard_normal((dim, dim))
        gamma = spd_validate(q @ q.T / dim + 0.3 * np.eye(dim))
        theta = gen.standard_normal(dim)
        norm = float(np.linalg.norm(theta))
        if norm > 5.0:
            theta *= 5.0 / norm
        est = risk_js_semianalytic(theta, gamma, 10**5, SeededRng(seed=1000 + i))
        worst = min(worst, (gamma.trace - est.value) / est.std_error)
    ok = worst >= 4.0
    _report("criterion 1 (JS dominance, 50 instances)", ok, f"min margin {worst:.1f} se")
    assert ok


def test_criterion_02_sequential_factor_n():
    for n in range(1, 1001):
        sep = model_distribution(Strategy.SEPARATE_NOISELESS, THETA_FIG1, SIGMA_FIG1, None, n)
        seq = model_distribution(Strategy.SEQUENTIAL_NOISELESS, THETA_FIG1, SIGMA_FIG1, None, n)
        ratio = sep.gamma_n.trace / seq.gamma_n.trace
        assert ratio == pytest.approx(n, rel=1e-12)
    _report("criterion 2 (trace ratio equals N, N=1..1000)", True, "exact")


def _fig1_js_risk(strategy, n, reps, seed):
    noise = SIGMA_FIG1 if strategy.is_noisy else None
    point = model_distribution(strategy, THETA_FIG1, SIGMA_FIG1, noise, n)
    return point, risk_js_semianalytic(THETA_FIG1, point.gamma_n, reps, SeededRng(seed=seed))


def test_criterion_03a_sequential_vs_separate_headline():
    _, js_seq = _fig1_js_risk(Strategy.SEQUENTIAL_NOISY, 50, 10**6, 1101)
    _, js_sep = _fig1_js_risk(Strategy.SEPARATE_NOISY, 50, 10**6, 1102)
    ad = advantage(js_seq, js_sep)
    ok = 1.65 <= ad.value <= 1.95
    _report("criterion 3a (sequential-vs-separate JS at N=50 = 1.8 +/- 0.15)", ok,
            f"value {ad.value:.4f} +/- {ad.std_error:.4f}")
    assert ok


def test_criterion_03b_noisy_sequential_headline():
    point, js = _fig1_js_risk(Strategy.SEQUENTIAL_NOISY, 25, 10**6, 1103)
    ad = advantage(js, risk_mle_exact(point.gamma_n))
    ok = 1.07 <= ad.value <= 1.13
    _report("criterion 3b (noisy-sequential JS advantage at N=25 = 1.10 +/- 0.03)", ok,
            f"value {ad.value:.4f} +/- {ad.std_error:.4f}")
    assert ok


def test_criterion_03c_noiseless_sequential_headline():
    point, js = _fig1_js_risk(Strategy.SEQUENTIAL_NOISELESS, 25, 10**6, 1104)
    ad = advantage(js, risk_mle_exact(point.gamma_n))
    ok = 1.00 <= ad.value <= 1.02
    _report("criterion 3c (noiseless-sequential JS advantage at N=25 = 1.01 +/- 0.01)", ok,
            f"value {ad.value:.4f} +/- {ad.std_error:.4f}")
    assert ok


def test_criterion_04_scaling_exponents():
    grid = [8, 16, 32, 64, 128, 256, 512]
    root = SeededRng(seed=1200)
    slopes = {}
    for tag, strategy in (
        ("separate", Strategy.SEPARATE_NOISELESS),
        ("sequential", Strategy.SEQUENTIAL_NOISELESS),
    ):
        gaps = []
        base = rng_fork(root, 0 if tag == "separate" else 1)
        for i, n in enumerate(grid):
            point = model_distribution(strategy, THETA_FIG1, SIGMA_FIG1, None, n)
            js = risk_js_semianalytic(THETA_FIG1, point.gamma_n, 10**5, rng_fork(base, i))
            gaps.append(1.0 - js.value / point.gamma_n.trace)
        slopes[tag] = float(
            np.polyfit(np.log(np.array(grid, float)), np.log(np.array(gaps)), 1)[0]
        )
    ok = -1.3 <= slopes["separate"] <= -0.7 and -2.4 <= slopes["sequential"] <= -1.6
    _report("criterion 4 (risk-gap scaling exponents)", ok,
            f"separate {slopes['separate']:.3f}, sequential {slopes['sequential']:.3f}")
    assert ok


def test_criterion_05_noisy_constant_factor():
    n = 1000
    sep = model_distribution(Strategy.SEPARATE_NOISY, THETA_FIG1, SIGMA_FIG1, SIGMA_FIG1, n)
    seq = model_distribution(Strategy.SEQUENTIAL_NOISY, THETA_FIG1, SIGMA_FIG1, SIGMA_FIG1, n)
    ad = advantage(risk_mle_exact(seq.gamma_n), risk_mle_exact(sep.gamma_n))
    ok = abs(ad.value - 2.0) <= 0.01
    _report("criterion 5 (noisy MLE advantage -> 1 + Tr(S)/Tr(D) = 2)", ok,
            f"value at N=1000: {ad.value:.5f}")
    assert ok


def test_criterion_06_bayes_risk_table_and_ordering():
    gen = np.random.default_rng(606)
    resolved = 0
    cross_ok = True
    for i in range(20):
        dim = int(gen.integers(3, 7))
        q = gen.standard_normal((dim, dim))
        gamma = spd_validate(q @ q.T / dim + 0.3 * np.eye(dim))
        r = gen.standard_normal((dim, dim))
        xi = spd_validate(r @ r.T / dim + 0.3 * np.eye(dim))
        theta0 = 1.5 * gen.standard_normal(dim)
        prior = GaussianPrior(theta0=theta0, xi=xi)
        root = SeededRng(seed=200 + 3 * i)
        rows = {}
        for j, (tag, kind) in enumerate(
            [("mle", Mle()), ("js", NuJs()), ("bayes", Bayes(prior=prior))]
        ):
            closed = bayes_risk_table(kind, gamma, prior, 10**5, rng_fork(root, 2 * j))
            sampled = bayes_risk_mc(kind, prior, gamma, 10**5, rng_fork(root, 2 * j + 1))
            combined = float(np.hypot(closed.std_error, sampled.std_error))
            if abs(closed.value - sampled.value) > 4.0 * combined:
                cross_ok = False
            rows[tag] = closed
        se = rows["js"].std_error
        if (
            rows["mle"].value - rows["js"].value >= 4.0 * se
            and rows["js"].value - rows["bayes"].value >= 4.0 * se
        ):
            resolved += 1
    ok = cross_ok and resolved >= 18
    _report("criterion 6 (Bayes table vs MC, ordering)", ok,
            f"cross-checks {'ok' if cross_ok else 'FAILED'}, {resolved}/20 orderings resolved")
    assert ok


def test_criterion_07_lemma1_sweep():
    gen = np.random.default_rng(707)
    worst = 0.0
    for _ in range(100):
        dim = int(gen.integers(2, 9))
        qa = gen.standard_normal((dim, dim))
        qb = gen.standard_normal((dim, dim))
        a = spd_validate(qa @ qa.T / dim + 0.3 * np.eye(dim))
        b = spd_validate(qb @ qb.T / dim + 0.3 * np.eye(dim))
        worst = max(worst, lemma1_check(a, b))
    ok = worst <= 1e-9
    _report("criterion 7 (ancilla-measurement matrix identity)", ok, f"max deviation {worst:.2e}")
    assert ok


def test_criterion_08_rejection_sampler_exactness():
    m = 10**5
    gen = np.random.default_rng(808)
    configs = [(np.zeros(4), 0.5, 1.0)]
    for _ in range(4):
        delta = 0.3 * gen.standard_normal(4)
        configs.append((delta, float(gen.uniform(0.3, 0.9)), float(gen.uniform(0.5, 2.0))))

    rate_ok = True
    for i, (delta, t, B) in enumerate(configs):
        predicted = 1.0 / envelope_constant(delta, t, B)
        rate = acceptance_rate(delta, np.zeros(4), t, B, m, SeededRng(seed=1300 + i))
        se = float(np.sqrt(predicted * (1.0 - predicted) / m))
        if abs(rate - predicted) > 4.0 * se:
            rate_ok = False
        if i == 0 and abs(predicted - 0.2) > 1e-12:
            rate_ok = False

    ks_ok = True
    ks_bound = 3.0 * 1.36 / np.sqrt(m)
    worst_ks = 0.0
    for i, (delta, t, B) in enumerate(configs):
        theta0 = np.array([0.1, -0.05, 0.2, 0.0])
        theta = theta0 + delta
        draws = sample_postselected(theta, theta0, t, B, SeededRng(seed=1400 + i), size=m)
        span = 6.0 * np.sqrt(B)
        grid = np.linspace(min(theta[0], theta0[0]) - span, max(theta[0], theta0[0]) + span, 30001)
        cdf = cumulative_trapezoid(marginal_pdf(grid, 0, theta, theta0, t, B), grid, initial=0.0)
        cdf /= cdf[-1]
        xs = np.sort(draws[:, 0])
        model = np.interp(xs, grid, cdf)
        hi = np.arange(1, m + 1) / m
        lo = np.arange(0, m) / m
        ks = max(float(np.max(np.abs(hi - model))), float(np.max(np.abs(model - lo))))
        worst_ks = max(worst_ks, ks)
        if ks >= ks_bound:
            ks_ok = False
    ok = rate_ok and ks_ok
    _report("criterion 8 (rejection sampler exactness)", ok,
            f"rates {'ok' if rate_ok else 'FAILED'}, worst KS {worst_ks:.4f} vs bound {ks_bound:.4f}")
    assert ok


@pytest.fixture(scope="module")
def strategy_pad_points():
    probe = ProbeModel(theta=THETA_FIG2, B=1.0)
    return pad_curve([20, 35, 150], probe, reps=2000, rng=SeededRng(seed=909))


def test_criterion_09a_strategy_beats_plain_mle(request):
    probe = ProbeModel(theta=THETA_FIG2, B=1.0)
    reps = 2000
    root = SeededRng(seed=910)
    finals = np.empty(reps)
    for r in range(reps):
        finals[r] = run_iterative_strategy(probe, 100, Mle(), rng_fork(root, r)).risk[-1]
    mean = float(finals.mean())
    se = float(finals.std(ddof=1) / np.sqrt(reps))
    plain = 4.0 * 0.25 / 100.0
    ok = plain - mean >= 4.0 * se
    _report("criterion 9a (filtered MLE strategy risk below plain MLE at N=100)", ok,
            f"strategy {mean:.5f} +/- {se:.5f} vs plain {plain:.5f}")
    assert ok


def test_criterion_09b_pad_above_one_small_n(strategy_pad_points):
    pad20 = strategy_pad_points[0]
    ok = pad20.value - 1.0 >= 2.0 * pad20.std_error
    _report("criterion 9b (PAD(20) > 1)", ok, f"{pad20.value:.4f} +/- {pad20.std_error:.4f}")
    assert ok


def test_criterion_09c_pad_eventually_decreases(strategy_pad_points):
    pad35, pad150 = strategy_pad_points[1], strategy_pad_points[2]
    gap = pad35.value - pad150.value
    se = float(np.hypot(pad35.std_error, pad150.std_error))
    ok = gap >= 2.0 * se
    _report("criterion 9c (PAD(35) > PAD(150))", ok,
            f"{pad35.value:.4f} vs {pad150.value:.4f}, gap {gap:.4f} +/- {se:.4f}")
    assert ok


def test_criterion_10_cli_determinism(tmp_path):
    exe = shutil.which("stein-sense")
    base = [exe] if exe else [sys.executable, "-m", "stein_sense"]
    for sub in ("a", "b"):
        proc = subprocess.run(
            base + ["fig1", "--seed", "42", "--out", str(tmp_path / sub)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
    a = (tmp_path / "a" / "fig1.csv").read_bytes()
    b = (tmp_path / "b" / "fig1.csv").read_bytes()
    ok = a == b
    _report("criterion 10 (CLI byte-identical reruns)", ok, f"{len(a)} bytes compared")
    assert ok
