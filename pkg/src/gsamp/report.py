"""Writers for Monte-Carlo reports: trajectory CSV, summary CSV, SVG chart, metadata."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .experiment import MseReport


def write_trajectories(report: MseReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "t", "mse_mean"])
        for name in report.estimators:
            for t, v in zip(report.t, report.mse_mean[name]):
                w.writerow([name, int(t), repr(float(v))])


def write_summary(report: MseReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "avg_mse"])
        for name in report.estimators:
            w.writerow([name, repr(report.avg_mse[name])])


def read_trajectories(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Inverse of :func:`write_trajectories`: estimator -> (t, mse_mean)."""
    rows: dict[str, list[tuple[int, float]]] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(row["estimator"], []).append((int(row["t"]), float(row["mse_mean"])))
    return {k: (np.array([a for a, _ in v]), np.array([b for _, b in v])) for k, v in rows.items()}


def read_summary(path) -> dict[str, float]:
    with Path(path).open(newline="") as fh:
        return {row["estimator"]: float(row["avg_mse"]) for row in csv.DictReader(fh)}


def plot_trajectories(report: MseReport, path, log_scale: bool = False, title: str | None = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name in report.estimators:
        ax.plot(report.t, report.mse_mean[name], label=name, linewidth=1.2)
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("MSE")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_metadata(report: MseReport, path) -> None:
    meta = dict(report.metadata)
    meta["diverged"] = {k: [list(x) for x in v] for k, v in report.diverged.items()}
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_report(
    report: MseReport,
    path_csv,
    path_svg,
    summary_csv=None,
    metadata_json=None,
    log_scale: bool = False,
) -> dict[str, Path]:
    """Write every artefact of a run and return the paths written.

    ``summary_csv`` and ``metadata_json`` default to siblings of ``path_csv``.
    """
    path_csv = Path(path_csv)
    summary_csv = Path(summary_csv) if summary_csv else path_csv.with_name(path_csv.stem + "_summary.csv")
    metadata_json = Path(metadata_json) if metadata_json else path_csv.with_name(path_csv.stem + "_metadata.json")
    write_trajectories(report, path_csv)
    write_summary(report, summary_csv)
    plot_trajectories(report, path_svg, log_scale=log_scale)
    write_metadata(report, metadata_json)
    return {"trajectories": path_csv, "summary": summary_csv, "chart": Path(path_svg), "metadata": metadata_json}


def format_table(rows, title: str | None = None) -> str:
    """Plain-text table of ``(estimator, avg_mse, marker)`` rows."""
    width = max([len("estimator")] + [len(r[0]) for r in rows])
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'estimator':<{width}}  {'avg MSE':>12}")
    lines.append("-" * (width + 14))
    for name, value, marker in rows:
        lines.append(f"{name:<{width}}  {value:>12.4g}{('  ' + marker) if marker else ''}")
    return "\n".join(lines)


def ranked_rows(avg_mse: dict[str, float], order) -> list[tuple[str, float, str]]:
    """Mark the best and second-best estimators like the reference table."""
    ranking = sorted(order, key=lambda n: avg_mse[n])
    marks = {ranking[0]: "best"}
    if len(ranking) > 1:
        marks[ranking[1]] = "second"
    return [(n, avg_mse[n], marks.get(n, "")) for n in order]
