"""Experiment orchestration: curve computation, CSV tables, manifest."""

from __future__ import annotations

import json
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .estimators import Bayes, GaussianPrior, MeanJs, Mle, NuJs
from .gauss_core import SeededRng, rng_fork, spd_validate
from .postselect import (
    ProbeModel,
    acceptance_rate,
    envelope_constant,
    isotropy,
    run_iterative_strategy,
)
from .risk_engine import (
    advantage,
    bayes_risk_mc,
    bayes_risk_table,
    risk_js_semianalytic,
    risk_mjs_semianalytic,
    risk_mle_exact,
)
from .sensing_models import Strategy, lemma1_check, model_distribution


class SelfCheckFailure(RuntimeError):
    """One or more internal consistency checks failed."""


def _map_ordered(fn, jobs, threads: int) -> list:
    """Apply fn to each job; results keep job order regardless of threads."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _write_csv(path: Path, columns: list[str], rows: list[list]) -> None:
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row width {len(row)} against {len(columns)} columns")
        for col, value in zip(columns, row):
            if not isinstance(value, str) and not np.isfinite(value):
                raise ValueError(f"non-finite value in column {col!r}")
    lines = [",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _version() -> str:
    try:
        proc = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if proc.returncode == 0 and proc.stdout.strip():
            return proc.stdout.strip()
    except OSError:
        pass
    return __version__


def _with_se(names: list[str]) -> list[str]:
    return ["N"] + names + [f"{name}_se" for name in names]


def _fig1(config: ExperimentConfig, root: SeededRng):
    sigma = spd_validate(config.sigma)
    delta = spd_validate(config.delta)
    theta = config.theta

    def job(item):
        idx, n_res = item
        base = rng_fork(root, idx)
        points = {
            "sep_noisy": model_distribution(Strategy.SEPARATE_NOISY, theta, sigma, delta, n_res),
            "seq_noisy": model_distribution(Strategy.SEQUENTIAL_NOISY, theta, sigma, delta, n_res),
            "seq_clean": model_distribution(
                Strategy.SEQUENTIAL_NOISELESS, theta, sigma, None, n_res
            ),
        }
        js = {
            key: risk_js_semianalytic(theta, pt.gamma_n, config.reps, rng_fork(base, role))
            for role, (key, pt) in enumerate(points.items())
        }
        ads = [
            advantage(js["sep_noisy"], risk_mle_exact(points["sep_noisy"].gamma_n)),
            advantage(js["seq_noisy"], risk_mle_exact(points["seq_noisy"].gamma_n)),
            advantage(js["seq_clean"], risk_mle_exact(points["seq_clean"].gamma_n)),
            advantage(js["seq_noisy"], js["sep_noisy"]),
        ]
        row = [int(n_res)]
        row += [ad.value for ad in ads]
        row += [ad.std_error for ad in ads]
        return row

    rows = _map_ordered(job, list(enumerate(config.grid())), config.threads)
    names = ["ad_sep_noisy_js", "ad_seq_noisy_js", "ad_seq_noiseless_js", "ad_seq_vs_sep_js"]
    return [("fig1.csv", _with_se(names), rows)]


def _risk(config: ExperimentConfig, root: SeededRng):
    sigma = spd_validate(config.sigma)
    delta = spd_validate(config.delta) if config.delta is not None else None
    theta = config.theta
    strategies = [
        ("sep", Strategy.SEPARATE_NOISELESS, None),
        ("seq", Strategy.SEQUENTIAL_NOISELESS, None),
    ]
    if delta is not None:
        strategies += [
            ("sep_noisy", Strategy.SEPARATE_NOISY, delta),
            ("seq_noisy", Strategy.SEQUENTIAL_NOISY, delta),
        ]
    with_mjs = config.n >= 4

    def job(item):
        idx, n_res = item
        base = rng_fork(root, idx)
        values, errors = [], []
        role = 0
        for _, strategy, noise in strategies:
            gamma = model_distribution(strategy, theta, sigma, noise, n_res).gamma_n
            ests = [risk_mle_exact(gamma), risk_js_semianalytic(theta, gamma, config.reps, rng_fork(base, role))]
            role += 1
            if with_mjs:
                ests.append(risk_mjs_semianalytic(theta, gamma, config.reps, rng_fork(base, role)))
                role += 1
            values += [e.value for e in ests]
            errors += [e.std_error for e in ests]
        return [int(n_res)] + values + errors

    rows = _map_ordered(job, list(enumerate(config.grid())), config.threads)
    names = []
    for tag, _, _ in strategies:
        names += [f"risk_mle_{tag}", f"risk_js_{tag}"]
        if with_mjs:
            names.append(f"risk_mjs_{tag}")
    return [("risk.csv", _with_se(names), rows)]


def _bayes(config: ExperimentConfig, root: SeededRng):
    sigma = spd_validate(config.sigma)
    delta = spd_validate(config.delta) if config.delta is not None else None
    strategy = Strategy.SEPARATE_NOISY if delta is not None else Strategy.SEPARATE_NOISELESS
    prior = GaussianPrior(theta0=config.theta, xi=spd_validate(config.xi))
    kinds = [("mle", Mle()), ("js", NuJs())]
    if config.n >= 4:
        kinds.append(("mjs", MeanJs()))
    kinds.append(("bayes", Bayes(prior=prior)))

    def job(item):
        idx, n_res = item
        base = rng_fork(root, idx)
        gamma = model_distribution(strategy, config.theta, sigma, delta, n_res).gamma_n
        values, errors = [], []
        for role, (_, kind) in enumerate(kinds):
            closed = bayes_risk_table(kind, gamma, prior, config.reps, rng_fork(base, 2 * role))
            sampled = bayes_risk_mc(kind, prior, gamma, config.reps, rng_fork(base, 2 * role + 1))
            values += [closed.value, sampled.value]
            errors += [closed.std_error, sampled.std_error]
        return [int(n_res)] + values + errors

    rows = _map_ordered(job, list(enumerate(config.grid())), config.threads)
    names = []
    for tag, _ in kinds:
        names += [f"br_{tag}", f"br_{tag}_mc"]
    return [("bayes.csv", _with_se(names), rows)]


def _risk_matrix(probe, n_max, estimator, reps, rng, threads, max_attempts=10**6):
    """Squared collated error per (run, measurement count), threads-invariant."""

    def one(r):
        trace = run_iterative_strategy(
            probe, n_max, estimator, rng_fork(rng, r), max_attempts=max_attempts
        )
        return trace.risk

    results = _map_ordered(one, list(range(reps)), threads)
    return np.vstack(results)


def _reduce_runs(risks: np.ndarray):
    reps = risks.shape[0]
    mean = risks.mean(axis=0)
    var = risks.var(axis=0, ddof=1)
    return mean, np.sqrt(var / reps)


def _fig2a(config: ExperimentConfig, root: SeededRng):
    grid = config.grid()
    n_max = int(grid[-1])
    probe = ProbeModel(theta=config.theta, B=config.B)
    den_reps = max(10**5, config.reps)
    pmle_mean, pmle_se = _reduce_runs(
        _risk_matrix(probe, n_max, Mle(), config.reps, rng_fork(root, 0), config.threads)
    )
    pmjs_mean, pmjs_se = _reduce_runs(
        _risk_matrix(probe, n_max, MeanJs(), config.reps, rng_fork(root, 1), config.threads)
    )
    base_rng = rng_fork(root, 2)

    def job(item):
        idx, n_res = item
        j = n_res - 1
        gamma = spd_validate(np.eye(config.n) * (config.B / (4.0 * n_res)))
        mle = risk_mle_exact(gamma)
        mjs = risk_mjs_semianalytic(config.theta, gamma, den_reps, rng_fork(base_rng, idx))
        ad_plain = advantage(mjs, mle)
        ad_post = _ratio(pmle_mean[j], pmle_se[j], pmjs_mean[j], pmjs_se[j])
        values = [pmle_mean[j], pmjs_mean[j], mle.value, mjs.value, ad_post[0], ad_plain.value]
        errors = [pmle_se[j], pmjs_se[j], mle.std_error, mjs.std_error, ad_post[1], ad_plain.std_error]
        return [int(n_res)] + values + errors

    rows = _map_ordered(job, list(enumerate(grid)), config.threads)
    names = ["risk_pmle", "risk_pmjs", "risk_mle", "risk_mjs", "ad_pmjs_pmle", "ad_mjs_mle"]
    return [("fig2a.csv", _with_se(names), rows)]


def _ratio(num, num_se, den, den_se):
    value = num / den
    rel = (num_se / num) ** 2 + (den_se / den) ** 2
    return float(value), float(value * np.sqrt(rel))


_FIG2B_SCALES = (0.3, 1.0, 3.0, 10.0)


def _slug(value: float) -> str:
    return ("%.3g" % value).replace(".", "p").replace("-", "m")


def _fig2b(config: ExperimentConfig, root: SeededRng):
    grid = config.grid()
    n_max = int(grid[-1])
    den_reps = max(10**5, config.reps)
    base = config.theta
    bar = float(base.mean())
    columns = []
    per_theta = []
    for i, scale in enumerate(_FIG2B_SCALES):
        theta = bar + scale * (base - bar)
        name = f"pad_v{_slug(isotropy(theta))}"
        if name in columns:
            name = f"{name}_{i}"
        columns.append(name)
        probe = ProbeModel(theta=theta, B=config.B)
        pmle = _reduce_runs(
            _risk_matrix(probe, n_max, Mle(), config.reps, rng_fork(root, 3 * i), config.threads)
        )
        pmjs = _reduce_runs(
            _risk_matrix(probe, n_max, MeanJs(), config.reps, rng_fork(root, 3 * i + 1), config.threads)
        )
        per_theta.append((theta, pmle, pmjs, rng_fork(root, 3 * i + 2)))

    def job(item):
        idx, n_res = item
        j = n_res - 1
        row_vals, row_errs = [], []
        for theta, (pmle_mean, pmle_se), (pmjs_mean, pmjs_se), den_rng in per_theta:
            num, num_se = _ratio(pmle_mean[j], pmle_se[j], pmjs_mean[j], pmjs_se[j])
            gamma = spd_validate(np.eye(config.n) * (config.B / (4.0 * n_res)))
            den = advantage(
                risk_mjs_semianalytic(theta, gamma, den_reps, rng_fork(den_rng, idx)),
                risk_mle_exact(gamma),
            )
            value, err = _ratio(num, num_se, den.value, den.std_error)
            row_vals.append(value)
            row_errs.append(err)
        return [int(n_res)] + row_vals + row_errs

    rows = _map_ordered(job, list(enumerate(grid)), config.threads)
    return [("fig2b.csv", _with_se(columns), rows)]


def _random_spd(gen, dim):
    q = gen.standard_normal((dim, dim))
    return q @ q.T / dim + 0.3 * np.eye(dim)


def _selfcheck(config: ExperimentConfig, root: SeededRng):
    rows = []

    gen = rng_fork(root, 0).generator()
    worst = 0.0
    for _ in range(100):
        dim = int(gen.integers(2, 9))
        a = spd_validate(_random_spd(gen, dim))
        a_anc = spd_validate(_random_spd(gen, dim))
        worst = max(worst, lemma1_check(a, a_anc))
    rows.append(["lemma1_max_abs_dev", worst, 1e-9, "ok" if worst <= 1e-9 else "FAIL"])

    # acceptance-rate sweep: observed rate against 1/M within 4 binomial SE
    n_attempts = max(10**4, config.reps)
    cases = [
        (np.zeros(4), 0.5, 1.0),
        (np.full(4, 0.05), 0.3, 1.0),
        (np.array([0.2, 0.0, -0.2, 0.1]), 0.7, 2.0),
        (np.array([0.05, -0.05, 0.05, -0.05]), 0.9, 0.5),
        (np.full(4, 0.1), 1.0, 1.0),
    ]
    for i, (delta, t, B) in enumerate(cases):
        m_env = envelope_constant(delta, t, B)
        predicted = 1.0 / m_env
        rate = acceptance_rate(delta, np.zeros(4), t, B, n_attempts, rng_fork(root, 1 + i))
        gap = abs(rate - predicted)
        bound = 4.0 * float(np.sqrt(predicted * (1.0 - predicted) / n_attempts)) + 1e-12
        rows.append([f"accept_rate_case{i}", gap, bound, "ok" if gap <= bound else "FAIL"])

    # Bayes-risk ordering: posterior mean < mean-JS < MLE, resolved in SE units
    sweep_gen = rng_fork(root, 20).generator()
    min_margin = np.inf
    for i in range(10):
        dim = int(sweep_gen.integers(4, 9))
        gamma = spd_validate(_random_spd(sweep_gen, dim))
        xi = spd_validate(_random_spd(sweep_gen, dim))
        theta0 = 1.5 * sweep_gen.standard_normal(dim)
        prior = GaussianPrior(theta0=theta0, xi=xi)
        base = rng_fork(root, 21 + i)
        r_mle = bayes_risk_table(Mle(), gamma, prior, config.reps, rng_fork(base, 0))
        r_js = bayes_risk_table(MeanJs(), gamma, prior, config.reps, rng_fork(base, 1))
        r_bayes = bayes_risk_table(Bayes(prior=prior), gamma, prior, config.reps, rng_fork(base, 2))
        se = max(r_js.std_error, 1e-300)
        margin = min((r_mle.value - r_js.value) / se, (r_js.value - r_bayes.value) / se)
        min_margin = min(min_margin, margin)
    rows.append([
        "bayes_order_min_margin_sigmas",
        float(min_margin),
        4.0,
        "ok" if min_margin >= 4.0 else "FAIL",
    ])

    return [("selfcheck.csv", ["check", "value", "bound", "status"], rows)]


_RUNNERS = {
    "fig1": _fig1,
    "fig2a": _fig2a,
    "fig2b": _fig2b,
    "risk": _risk,
    "bayes": _bayes,
    "selfcheck": _selfcheck,
}


def run(config: ExperimentConfig) -> list[Path]:
    """Run one experiment: write its CSV tables and manifest.json.

    Returns the written paths. Raises SelfCheckFailure after writing if any
    selfcheck row failed.
    """
    started = datetime.now(timezone.utc)
    t0 = time.monotonic()
    root = SeededRng(seed=config.seed)
    tables = _RUNNERS[config.experiment](config, root)

    out_dir = config.out
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, columns, rows in tables:
        path = out_dir / name
        _write_csv(path, columns, rows)
        paths.append(path)

    manifest = {
        "config": config.to_manifest_dict(),
        "seed": config.seed,
        "version": _version(),
        "started_at": started.isoformat(),
        "duration_s": round(time.monotonic() - t0, 6),
        "outputs": [p.name for p in paths],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    paths.append(manifest_path)

    if config.experiment == "selfcheck":
        failed = [row[0] for row in tables[0][2] if row[3] != "ok"]
        if failed:
            raise SelfCheckFailure("failing checks: " + ", ".join(failed))
    return paths
