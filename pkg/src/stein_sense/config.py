"""Experiment configuration: flag/file parsing, defaults, validation."""

from __future__ import annotations

import argparse
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gauss_core import NotPositiveDefinite, NotSymmetric, spd_validate

EXPERIMENTS = ("fig1", "fig2a", "fig2b", "risk", "bayes", "selfcheck")

# Reference parameter sets used as defaults: a 4-dimensional location with
# isotropic state and noise covariances for the risk-curve experiments, and
# a nearly isotropic location with unit width for the postselection ones.
THETA_RISK = (0.5, -0.2, 0.3, 0.1)
COV_RISK_SCALE = 4.0
THETA_POST = (1.0 / 30.0, -2.0 / 30.0, 3.0 / 30.0, 1.5 / 30.0)
B_POST = 1.0


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved settings of one CLI invocation."""

    experiment: str
    theta: np.ndarray
    sigma: np.ndarray | None
    delta: np.ndarray | None
    xi: np.ndarray | None
    B: float | None
    n_min: int
    n_max: int
    n_points: int
    spacing: str
    reps: int
    seed: int
    out: Path
    threads: int

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def grid(self) -> np.ndarray:
        """Resource-count grid: unique ascending integers."""
        if self.spacing == "log":
            raw = np.logspace(np.log10(self.n_min), np.log10(self.n_max), self.n_points)
        else:
            raw = np.linspace(self.n_min, self.n_max, self.n_points)
        return np.unique(np.rint(raw).astype(int))

    def to_manifest_dict(self) -> dict:
        def mat(m):
            return None if m is None else [list(map(float, row)) for row in m]

        return {
            "experiment": self.experiment,
            "theta": [float(v) for v in self.theta],
            "sigma": mat(self.sigma),
            "delta": mat(self.delta),
            "xi": mat(self.xi),
            "B": self.B,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "n_points": self.n_points,
            "spacing": self.spacing,
            "reps": self.reps,
            "seed": self.seed,
            "out": str(self.out),
            "threads": self.threads,
        }


_MATRIX_SHORTHAND = re.compile(r"^\s*([^*\s]+)\s*\*\s*I\(\s*(\d+)\s*\)\s*$")


def parse_vector(text: str, field: str) -> np.ndarray:
    try:
        v = np.array([float(p) for p in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"{field}: expected comma-separated numbers, got {text!r}") from None
    if v.size == 0:
        raise ConfigError(f"{field}: empty vector")
    return v


def parse_matrix(text: str, field: str) -> np.ndarray:
    """Parse 'c*I(n)' shorthand or dense rows 'a,b;c,d'."""
    m = _MATRIX_SHORTHAND.match(text)
    if m:
        try:
            scale = float(m.group(1))
        except ValueError:
            raise ConfigError(f"{field}: bad scale in {text!r}") from None
        dim = int(m.group(2))
        if dim < 1:
            raise ConfigError(f"{field}: dimension must be >= 1 in {text!r}")
        return scale * np.eye(dim)
    try:
        rows = [[float(p) for p in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise ConfigError(
            f"{field}: expected 'c*I(n)' or ';'-separated rows, got {text!r}"
        ) from None
    lengths = {len(r) for r in rows}
    if len(lengths) != 1 or len(rows) != lengths.pop():
        raise ConfigError(f"{field}: rows do not form a square matrix in {text!r}")
    return np.array(rows, dtype=float)


def _coerce_vector(value, field):
    if isinstance(value, str):
        return parse_vector(value, field)
    try:
        return np.array([float(v) for v in value], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a numeric vector") from None


def _coerce_matrix(value, field):
    if value is None:
        return None
    if isinstance(value, str):
        return parse_matrix(value, field)
    try:
        return np.array([[float(v) for v in row] for row in value], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a matrix") from None


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stein-sense",
        description="Risk experiments for James-Stein estimation in Gaussian sensing",
    )
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON config file (a manifest.json also works)")
    p.add_argument("--theta", help="location vector, e.g. 0.5,-0.2,0.3,0.1")
    p.add_argument("--sigma", help="state covariance, e.g. 4*I(4) or dense rows a,b;c,d")
    p.add_argument("--delta", help="noise covariance per application, same formats")
    p.add_argument("--xi", help="prior covariance (bayes experiment), same formats")
    p.add_argument("--B", type=float, help="probe width (postselection experiments)")
    p.add_argument("--n-min", type=int, dest="n_min", help="smallest resource count")
    p.add_argument("--n-max", type=int, dest="n_max", help="largest resource count")
    p.add_argument("--n-points", type=int, dest="n_points", help="grid size")
    p.add_argument("--reps", type=int, help="Monte Carlo repetitions per point")
    p.add_argument("--seed", type=int, help="root RNG seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads (default: STEIN_SENSE_THREADS or 1)")
    return p


_DEFAULT_GRID = {
    "fig1": dict(n_min=8, n_max=512, n_points=7, spacing="log"),
    "risk": dict(n_min=8, n_max=512, n_points=7, spacing="log"),
    "bayes": dict(n_min=8, n_max=512, n_points=7, spacing="log"),
    "fig2a": dict(n_min=5, n_max=200, n_points=40, spacing="linear"),
    "fig2b": dict(n_min=5, n_max=200, n_points=40, spacing="linear"),
    "selfcheck": dict(n_min=1, n_max=1, n_points=1, spacing="linear"),
}

_DEFAULT_REPS = {
    "fig1": 10**5,
    "risk": 10**5,
    "bayes": 10**5,
    "fig2a": 2000,
    "fig2b": 2000,
    "selfcheck": 10**5,
}

# Flags that are meaningful per experiment; anything else given explicitly
# is rejected so typos fail loudly.
_ALLOWED = {
    "fig1": {"theta", "sigma", "delta", "n_min", "n_max", "n_points", "reps", "seed", "out", "threads"},
    "risk": {"theta", "sigma", "delta", "n_min", "n_max", "n_points", "reps", "seed", "out", "threads"},
    "bayes": {"theta", "sigma", "delta", "xi", "n_min", "n_max", "n_points", "reps", "seed", "out", "threads"},
    "fig2a": {"theta", "B", "n_min", "n_max", "n_points", "reps", "seed", "out", "threads"},
    "fig2b": {"theta", "B", "n_min", "n_max", "n_points", "reps", "seed", "out", "threads"},
    "selfcheck": {"reps", "seed", "out", "threads"},
}


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"--config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config: invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"--config: expected a JSON object in {path}")
    # a manifest.json carries the settings under its "config" key
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return data


def parse_config(argv: list[str]) -> ExperimentConfig:
    """Resolve flags, optional config file and defaults into a validated config.

    Precedence: command-line flags override config-file values, which
    override per-experiment defaults.
    """
    args = _build_parser().parse_args(argv)
    exp = args.experiment

    file_vals = _load_config_file(args.config) if args.config else {}
    known = {
        "experiment", "theta", "sigma", "delta", "xi", "B",
        "n_min", "n_max", "n_points", "spacing", "reps", "seed", "out", "threads",
    }
    for key in file_vals:
        if key not in known:
            raise ConfigError(f"--config: unknown field {key!r}")

    def pick(name):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag, True
        if name in file_vals and file_vals[name] is not None:
            return file_vals[name], True
        return None, False

    allowed = _ALLOWED[exp]
    for name in ("theta", "sigma", "delta", "xi", "B", "n_min", "n_max", "n_points", "reps"):
        value, given = pick(name)
        if given and name not in allowed:
            raise ConfigError(f"--{name.replace('_', '-')}: not used by experiment {exp!r}")

    theta_val, theta_given = pick("theta")
    if theta_given:
        theta = _coerce_vector(theta_val, "--theta")
    elif exp in ("fig2a", "fig2b"):
        theta = np.array(THETA_POST)
    else:
        theta = np.array(THETA_RISK)
    n = theta.shape[0]

    def matrix_field(name, default_scale=None):
        value, given = pick(name)
        if given:
            m = _coerce_matrix(value, f"--{name}")
        elif default_scale is not None and not theta_given:
            m = default_scale * np.eye(n)
        else:
            return None
        if m.shape != (n, n):
            raise ConfigError(
                f"--{name}: shape {m.shape} does not match theta dimension {n}"
            )
        try:
            spd_validate(m)
        except (NotSymmetric, NotPositiveDefinite) as exc:
            raise ConfigError(f"--{name}: {exc}") from None
        return m

    sigma = delta = xi = None
    if exp in ("fig1", "risk", "bayes"):
        if n < 3:
            raise ConfigError(
                f"--theta: shrinkage estimators need dimension >= 3, got {n}"
            )
        sigma = matrix_field("sigma", default_scale=COV_RISK_SCALE)
        if sigma is None:
            raise ConfigError("--sigma: required when theta overrides the default set")
        delta_default = COV_RISK_SCALE if exp in ("fig1", "risk") else None
        delta = matrix_field("delta", default_scale=delta_default)
        if exp == "fig1" and delta is None:
            raise ConfigError("--delta: required for fig1 (its curves include noisy strategies)")
    if exp == "bayes":
        xi = matrix_field("xi")
        if xi is None:
            raise ConfigError("--xi: required for the bayes experiment (prior covariance)")

    b_val, b_given = pick("B")
    if exp in ("fig2a", "fig2b"):
        B = float(b_val) if b_given else B_POST
        if not B > 0:
            raise ConfigError(f"--B: must be positive, got {B}")
        if n < 4:
            raise ConfigError(f"--theta: postselection experiments need dimension >= 4, got {n}")
    else:
        B = None

    grid_defaults = _DEFAULT_GRID[exp]
    n_min_val, g1 = pick("n_min")
    n_max_val, g2 = pick("n_max")
    n_points_val, g3 = pick("n_points")
    n_min = int(n_min_val) if g1 else grid_defaults["n_min"]
    n_max = int(n_max_val) if g2 else grid_defaults["n_max"]
    n_points = int(n_points_val) if g3 else grid_defaults["n_points"]
    spacing = file_vals.get("spacing", grid_defaults["spacing"])
    if spacing not in ("log", "linear"):
        raise ConfigError(f"spacing: must be 'log' or 'linear', got {spacing!r}")
    if n_min < 1 or n_max < n_min:
        raise ConfigError(f"--n-min/--n-max: need 1 <= n_min <= n_max, got {n_min}..{n_max}")
    if n_points < 1:
        raise ConfigError(f"--n-points: must be >= 1, got {n_points}")

    reps_val, reps_given = pick("reps")
    reps = int(reps_val) if reps_given else _DEFAULT_REPS[exp]
    if reps < 100:
        raise ConfigError(f"--reps: must be >= 100, got {reps}")

    seed_val, seed_given = pick("seed")
    seed = int(seed_val) if seed_given else 0

    out_val, out_given = pick("out")
    out = Path(out_val) if out_given else Path("out")

    threads_val, threads_given = pick("threads")
    if threads_given:
        threads = int(threads_val)
    else:
        env = os.environ.get("STEIN_SENSE_THREADS", "")
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"STEIN_SENSE_THREADS: not an integer: {env!r}") from None
    if threads < 1:
        raise ConfigError(f"--threads: must be >= 1, got {threads}")

    return ExperimentConfig(
        experiment=exp, theta=theta, sigma=sigma, delta=delta, xi=xi, B=B,
        n_min=n_min, n_max=n_max, n_points=n_points, spacing=spacing,
        reps=reps, seed=seed, out=out, threads=threads,
    )
