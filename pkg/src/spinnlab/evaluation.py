"""Error metric, evaluation reports, and figure/CSV export.

The report path renders matplotlib figures (SVG) next to the delimited
error-field CSV: a solution/error figure (line plots in 1-D, heatmaps in
2-D) and a loss-history figure.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ConfigurationError, UndefinedMetricError  # noqa: E402
from . import fdm  # noqa: E402
from .problems import ode_test_grid  # noqa: E402
from .training import history_rows  # noqa: E402


def relative_l2(predicted, truth):
    """sqrt( sum |pred - truth|^2 / sum |truth|^2 )."""
    predicted = np.asarray(predicted, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if predicted.shape != truth.shape or len(truth) < 1:
        raise ConfigurationError(
            f"length mismatch: {predicted.shape} vs {truth.shape}")
    denom = float(np.sum(truth * truth))
    if denom == 0.0:
        raise UndefinedMetricError("reference values are identically zero")
    return float(np.sqrt(np.sum((predicted - truth) ** 2) / denom))


@dataclass
class TestSet:
    """Evaluation points with reference values; 2-D sets keep grid axes so
    heatmaps can reshape the flattened field."""

    points: np.ndarray
    values: np.ndarray
    axes: tuple | None = None

    @property
    def grid_shape(self):
        return None if self.axes is None else tuple(len(a) for a in self.axes)


def build_test_set(problem, reference=None, n=1024, m=512):
    """Analytic grid for the 1-D problems, finite-difference grid otherwise.

    ``reference`` may carry a precomputed :class:`fdm.GridSolution`; without
    one the reference is solved here at (n, m).
    """
    if problem.input_dim == 1:
        pts, vals = ode_test_grid(problem)
        return TestSet(pts, vals)
    if reference is None:
        if problem.domain == "square":
            reference = fdm.solve_steady_2d(problem, n)
        else:
            reference = fdm.solve_parabolic(problem, n, m)
    pts, vals = reference.points_and_values()
    return TestSet(pts, vals, axes=reference.axes)


@dataclass
class EvalReport:
    problem: str
    model: str
    backbone: str
    relative_l2: float
    wall_seconds: float
    iterations: int
    seed: int
    files: list = field(default_factory=list)
    n_test: int = 0

    def to_dict(self):
        return asdict(self)


def evaluate(predict, problem, test_set, *, model="", backbone="",
             wall_seconds=0.0, iterations=0, seed=0):
    """Report plus pointwise error field for a prediction callable.

    ``predict`` maps an (n, d) point array to n values (injecting the exact
    solution or a closure over trained parameters both work).
    """
    if test_set is None or len(test_set.points) == 0:
        raise ConfigurationError(
            f"no test set for {problem.name}; generate the reference grid first")
    pred = np.asarray(predict(test_set.points), dtype=float).reshape(-1)
    rel = relative_l2(pred, test_set.values)
    report = EvalReport(problem.name, model, backbone, rel, wall_seconds,
                        iterations, seed, n_test=len(pred))
    names = {"interval": ("x",), "square": ("x", "y"), "slab": ("x", "t")}
    field_cols = {
        "points": test_set.points,
        "truth": test_set.values,
        "prediction": pred,
        "error": pred - test_set.values,
        "grid_shape": test_set.grid_shape,
        "coord_names": names[problem.domain],
    }
    return report, field_cols


def write_field_csv(path, field_cols):
    """(coordinates, truth, prediction, error) rows, lexicographically sorted
    by coordinates; floats print with full round-trip precision."""
    pts = np.asarray(field_cols["points"])
    order = np.lexsort(tuple(pts[:, j] for j in reversed(range(pts.shape[1]))))
    names = list(field_cols.get("coord_names") or
                 (["x"] if pts.shape[1] == 1 else ["x", "y"]))
    with open(path, "w") as fh:
        fh.write(",".join(names + ["truth", "prediction", "error"]) + "\n")
        for i in order:
            row = [*pts[i], field_cols["truth"][i], field_cols["prediction"][i],
                   field_cols["error"][i]]
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_field_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data


def solution_figure_1d(field_cols, title=""):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 3.6))
    x = field_cols["points"][:, 0]
    order = np.argsort(x)
    ax1.plot(x[order], field_cols["truth"][order], "k-", lw=1.2, label="reference")
    ax1.plot(x[order], field_cols["prediction"][order], "r--", lw=1.0, label="prediction")
    ax1.set_xlabel("x")
    ax1.set_ylabel("u")
    ax1.legend(frameon=False)
    ax2.semilogy(x[order], np.abs(field_cols["error"][order]) + 1e-300, "b-", lw=0.8)
    ax2.set_xlabel("x")
    ax2.set_ylabel("|error|")
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    return fig


def heatmap_figure_2d(field_cols, title=""):
    """Prediction and |error| heatmaps; returns (figure, heatmap shape)."""
    shape = field_cols["grid_shape"]
    if shape is None:
        raise ConfigurationError("2-D figure needs the reference grid shape")
    pred = field_cols["prediction"].reshape(shape)
    err = np.abs(field_cols["error"].reshape(shape))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 3.9))
    for ax, data, label in ((ax1, pred, "prediction"), (ax2, err, "|error|")):
        im = ax.imshow(data.T, origin="lower", extent=(0, 1, 0, 1),
                       aspect="auto", cmap="viridis")
        fig.colorbar(im, ax=ax, shrink=0.9)
        ax.set_title(label)
        ax.set_xlabel("x")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig, pred.shape


def loss_figure(history, iterations):
    """Loss components over training; the x-axis spans [0, iterations]."""
    rows = history_rows(history)
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    if len(rows):
        it = rows[:, 0]
        for col, label in ((4, "total"), (3, "residual"), (2, "boundary"), (1, "initial")):
            if np.any(rows[:, col] > 0):
                ax.semilogy(it, rows[:, col], lw=0.9, label=label)
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlim(0, iterations)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    fig.tight_layout()
    return fig


def export_plots(report, field_cols, history, out_dir, stem="solution"):
    """Error-field CSV plus SVG solution/heatmap and loss figures.

    Returns the written paths and appends them to ``report.files``.
    """
    csv_path = os.path.join(out_dir, "error_field.csv")
    write_field_csv(csv_path, field_cols)
    if field_cols["points"].shape[1] == 1:
        fig = solution_figure_1d(field_cols, title=report.problem)
    else:
        fig, _ = heatmap_figure_2d(field_cols, title=report.problem)
    sol_path = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(sol_path)
    plt.close(fig)
    fig = loss_figure(history, report.iterations)
    loss_path = os.path.join(out_dir, "loss.svg")
    fig.savefig(loss_path)
    plt.close(fig)
    paths = [csv_path, sol_path, loss_path]
    report.files.extend(os.path.basename(p) for p in paths)
    return paths
