"""Report emission: delimited tables, structured text, and rendered figures.

Every writer produces a plot-ready table (one row per repeat or per grid
cell) plus a PNG rendering next to it.  The structured-text format is
the same table behind ``# key: value`` provenance comments, so a single
loader reads both.  Wall-clock columns are informational and excluded
from determinism comparisons.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import CorruptFile, IoFailure
from .evaluation import CurveReport, EvalReport, SweepGrid

EVAL_COLUMNS = (
    "repeat,accuracy,c00,c01,c02,c10,c11,c12,c20,c21,c22,train_time_s"
)
CURVE_COLUMNS = "sup_iters,repeat,test_error"
SWEEP_COLUMNS = "n1,m1,n2,m2,repeat,accuracy,status,reason"


def _write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def _provenance(report) -> list[str]:
    lines = [f"# data_hash: {report.data_hash}"]
    lines.append(f"# config: {json.dumps(report.config, sort_keys=True)}")
    return lines


def _eval_rows(report: EvalReport) -> list[str]:
    rows = [EVAL_COLUMNS]
    for i, (acc, cm, t) in enumerate(zip(report.accuracies, report.confusions, report.train_times)):
        cells = ",".join(str(int(c)) for c in np.asarray(cm).ravel())
        rows.append(f"{i},{acc!r},{cells},{t!r}")
    rows.append(f"mean,{report.mean_accuracy!r},,,,,,,,,,")
    return rows


def _curve_rows(report: CurveReport) -> list[str]:
    rows = [CURVE_COLUMNS]
    for j, n_iter in enumerate(report.iters):
        for r in range(report.errors.shape[0]):
            rows.append(f"{n_iter},{r},{float(report.errors[r, j])!r}")
        rows.append(f"{n_iter},mean,{float(report.mean_errors[j])!r}")
    return rows


def _sweep_rows(grid: SweepGrid) -> list[str]:
    rows = [SWEEP_COLUMNS]
    for cell in grid.cells:
        if cell.failed:
            rows.append(f"{cell.n1},{cell.m1},{cell.n2},{cell.m2},,,failed,{cell.error}")
        else:
            for r, acc in enumerate(cell.accuracies):
                rows.append(f"{cell.n1},{cell.m1},{cell.n2},{cell.m2},{r},{acc!r},ok,")
    return rows


def _figure_eval(report: EvalReport, path: Path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = np.arange(len(report.accuracies))
    ax.bar(xs, report.accuracies, color="#4878d0")
    ax.axhline(report.mean_accuracy, color="#d65f5f", linestyle="--",
               label=f"mean = {report.mean_accuracy:.4f}")
    ax.set_xlabel("repeat")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(f"{report.model_kind}: accuracy per repeat")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _figure_curve(report: CurveReport, path: Path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for r in range(report.errors.shape[0]):
        ax.plot(report.iters, report.errors[r], color="#bbbbbb", linewidth=0.8)
    ax.plot(report.iters, report.mean_errors, color="#d65f5f", marker="o", label="mean")
    ax.set_xlabel("supervised iterations")
    ax.set_ylabel("test error")
    ax.set_title("error vs supervised iterations")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _figure_sweep(grid: SweepGrid, path: Path):
    # heatmap over the two widest axes, averaging the rest
    axis_names = [k for k, v in grid.axes.items() if len(v) > 1] or ["n1", "m1"]
    ax_y, ax_x = (axis_names + ["m1"])[:2]
    ys, xs = grid.axes[ax_y], grid.axes[ax_x]
    acc = np.full((len(ys), len(xs)), np.nan)
    for i, yv in enumerate(ys):
        for j, xv in enumerate(xs):
            vals = [
                np.mean(c.accuracies)
                for c in grid.cells
                if not c.failed and getattr(c, ax_y) == yv and getattr(c, ax_x) == xv
            ]
            if vals:
                acc[i, j] = float(np.mean(vals))
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(acc, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(xs)), [str(v) for v in xs])
    ax.set_yticks(range(len(ys)), [str(v) for v in ys])
    ax.set_xlabel(ax_x)
    ax.set_ylabel(ax_y)
    for i in range(len(ys)):
        for j in range(len(xs)):
            if np.isfinite(acc[i, j]):
                ax.text(j, i, f"{acc[i, j]:.3f}", ha="center", va="center",
                        color="white", fontsize=8)
    fig.colorbar(im, ax=ax, label="mean accuracy")
    ax.set_title("accuracy over windowing parameters")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(report, path, fmt: str = "csv", figures: bool = True) -> list[Path]:
    """Write a report or grid plus its rendered figure.

    ``fmt`` selects ``csv`` (bare table) or ``txt`` (the same table with
    provenance comments).  Returns the paths written.
    """
    path = Path(path)
    if isinstance(report, EvalReport):
        rows, make_figure, fig_suffix = _eval_rows(report), _figure_eval, "_accuracy.png"
    elif isinstance(report, CurveReport):
        rows, make_figure, fig_suffix = _curve_rows(report), _figure_curve, "_curve.png"
    elif isinstance(report, SweepGrid):
        rows, make_figure, fig_suffix = _sweep_rows(report), _figure_sweep, "_heatmap.png"
    else:
        raise TypeError(f"cannot write report of type {type(report).__name__}")
    if fmt not in ("csv", "txt"):
        raise IoFailure(f"unknown report format {fmt!r}")
    body = "\n".join(rows) + "\n"
    if fmt == "txt":
        body = "\n".join(_provenance(report)) + "\n" + body
    _write_text(path, body)
    written = [path]
    if figures:
        fig_path = path.with_name(path.stem + fig_suffix)
        try:
            make_figure(report, fig_path)
        except OSError as exc:
            raise IoFailure(f"cannot write {fig_path}: {exc}") from None
        written.append(fig_path)
    return written


def load_table(path) -> tuple[list[str], list[list[str]]]:
    """Read a report table back: (column names, rows of string fields).

    Provenance comment lines from the txt format are skipped, so both
    formats load identically.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise CorruptFile(f"{path} contains no table")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def load_eval_report(path) -> dict:
    """Numeric content of a written evaluation report."""
    header, rows = load_table(path)
    if header != EVAL_COLUMNS.split(","):
        raise CorruptFile(f"{path} is not an evaluation report")
    accuracies, confusions, times, mean_acc = [], [], [], None
    for row in rows:
        if row[0] == "mean":
            mean_acc = float(row[1])
            continue
        accuracies.append(float(row[1]))
        confusions.append(np.array([int(c) for c in row[2:11]]).reshape(3, 3))
        times.append(float(row[11]))
    return {
        "accuracies": accuracies,
        "confusions": confusions,
        "train_times": times,
        "mean_accuracy": mean_acc,
    }


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
