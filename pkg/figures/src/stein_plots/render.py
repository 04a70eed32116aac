"""Line-plot rendering of experiment CSVs.

Each input CSV holds an integer resource column ``N`` followed by value
columns and optional ``<name>_se`` columns. A figure draws one line per
value column, labeled with the column name, plus a shaded band of one
standard error on each side wherever the matching ``_se`` column exists.
Rendering is read-only over the CSV: deleting an image and re-rendering
reproduces the same curve data.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class MissingColumn(ValueError):
    """A CSV column the figure needs is absent."""


KINDS = ("fig1", "fig2a", "fig2b")

# Fixed names are the stable stein-sense schema for each figure. fig2b curve
# names encode the probe deviation strength, so only their prefix is fixed.
_REQUIRED = {
    "fig1": (
        "N",
        "ad_sep_noisy_js",
        "ad_seq_noisy_js",
        "ad_seq_noiseless_js",
        "ad_seq_vs_sep_js",
    ),
    "fig2a": (
        "N",
        "risk_pmle",
        "risk_pmjs",
        "risk_mle",
        "risk_mjs",
        "ad_pmjs_pmle",
        "ad_mjs_mle",
    ),
    "fig2b": ("N",),
}
_REQUIRED_PREFIX = {"fig2b": "pad_"}

# kind -> (xlabel, ylabel, xscale, yscale)
_AXES = {
    "fig1": ("resources N", "risk ratio", "log", "linear"),
    "fig2a": ("measurements N", "risk and risk ratio", "linear", "log"),
    "fig2b": ("measurements N", "postselected advantage ratio", "linear", "linear"),
}


@dataclass(frozen=True)
class FigureSpec:
    """One figure to render: input CSV, output image, and axis styling."""

    kind: str
    csv: Path
    out: Path
    xlabel: str
    ylabel: str
    xscale: str
    yscale: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")


def make_spec(kind, csv_path, out=None):
    """FigureSpec for `kind` with per-kind axis defaults.

    `out` defaults to `<kind>.png` in the CSV's directory, so images land
    alongside the data they render.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    csv_path = Path(csv_path)
    out = csv_path.with_name(f"{kind}.png") if out is None else Path(out)
    xlabel, ylabel, xscale, yscale = _AXES[kind]
    return FigureSpec(
        kind=kind,
        csv=csv_path,
        out=out,
        xlabel=xlabel,
        ylabel=ylabel,
        xscale=xscale,
        yscale=yscale,
    )


def read_table(path):
    """Header names and a rows-by-columns float array from a CSV file."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: empty CSV, no header row")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value in row") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return header, np.array(rows)


def _validate_columns(spec, header):
    for name in _REQUIRED[spec.kind]:
        if name not in header:
            raise MissingColumn(f"{spec.csv}: required column {name!r} not found")
    prefix = _REQUIRED_PREFIX.get(spec.kind)
    if prefix is not None:
        if not any(h.startswith(prefix) and not h.endswith("_se") for h in header):
            raise MissingColumn(f"{spec.csv}: no {prefix}* curve column found")


def curve_columns(header):
    """Value columns to draw: everything except N and the _se columns."""
    return [name for name in header if name != "N" and not name.endswith("_se")]


def build_figure(spec, header, data):
    """Matplotlib figure with one labeled line per value column."""
    index = {name: i for i, name in enumerate(header)}
    x = data[:, index["N"]]
    fig, ax = plt.subplots(figsize=(7.0, 4.5), layout="constrained")
    for name in curve_columns(header):
        y = data[:, index[name]]
        (line,) = ax.plot(x, y, marker="o", markersize=3, label=name)
        se_name = f"{name}_se"
        if se_name in index:
            se = data[:, index[se_name]]
            ax.fill_between(
                x, y - se, y + se, alpha=0.25, color=line.get_color(), linewidth=0
            )
    ax.set_xscale(spec.xscale)
    ax.set_yscale(spec.yscale)
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return fig


def render(spec):
    """Render `spec` and return the output path.

    Columns are validated before the output file is opened, so a failed
    render leaves no partial image behind.
    """
    header, data = read_table(spec.csv)
    _validate_columns(spec, header)
    fig = build_figure(spec, header, data)
    try:
        spec.out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out, dpi=150)
    finally:
        plt.close(fig)
    return spec.out
