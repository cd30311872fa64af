"""Plot-data emission and figure rendering.

CSV emission is plain text with a one-line header and fixed scientific
formatting, so identical runs produce byte-identical files.  Figures are
rendered with the Agg backend straight to PNG files alongside the
delimited output; figure rendering is a separate step from the CSV
writers and never feeds back into any computation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from typing import Iterable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17e")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path: str, payload: dict) -> str:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def sha256_of(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- CSV emitters ---------------------------------------------------------------


def emit_flow_trace(path: str, history: Sequence[tuple[float, float]],
                    residuals: Optional[Sequence[float]] = None) -> str:
    """Flow trace rows (t, f_p, residual)."""
    rows = []
    for i, (t, f) in enumerate(history):
        r = residuals[i] if residuals is not None else ""
        rows.append((t, f, r))
    return write_csv(path, ["t", "f_p", "residual"], rows)


def emit_chamber_scatter(path: str, images: np.ndarray,
                         labels: Optional[Sequence[str]] = None,
                         verdicts: Optional[Sequence[str]] = None) -> str:
    """Chamber cloud rows: sample id, sorted spectrum, stratum label,
    verdict."""
    n = images.shape[1]
    header = ["sample_id"] + [f"lambda_{i + 1}" for i in range(n)] + ["stratum", "verdict"]
    rows = []
    for i, row in enumerate(images):
        lab = labels[i] if labels is not None else ""
        ver = verdicts[i] if verdicts is not None else ""
        rows.append([i, *row, lab, ver])
    return write_csv(path, header, rows)


def emit_deficit_curve(path: str, deficits_by_size: Sequence[tuple[int, float]]) -> str:
    return write_csv(path, ["n_samples", "max_midpoint_deficit"],
                     [(n, d) for n, d in deficits_by_size])


def emit_weight_table(path: str, rows: Sequence[dict]) -> str:
    header = ["sample_id", "direction_id", "lambda_0", "lambda_limit", "energy",
              "t_reached", "converged"]
    return write_csv(path, header,
                     [(r["sample_id"], r["direction_id"], r["lambda_0"],
                       r["lambda_limit"], r["energy"], r["t_reached"],
                       int(r["converged"])) for r in rows])


def emit_verdicts(path: str, verdicts: Sequence) -> str:
    header = ["sample_id", "verdict", "f_p_limit", "min_lambda_sampled",
              "n_directions", "stabilizer_p_dim"]
    return write_csv(path, header,
                     [(v.point_id, v.verdict, v.f_p_limit, v.min_lambda_sampled,
                       v.n_directions, v.stabilizer_p_dim) for v in verdicts])


def emit_plotdata(report, outdir: str) -> list[str]:
    """Write the plot-data CSVs appropriate to a report object (flow
    result, chamber report, density report, or weight-sample list) into
    ``outdir``; plain CSV only, no plotting library invoked."""
    from .flows import FlowResult, WeightSample
    from .polytope import ChamberReport, DensityReport

    os.makedirs(outdir, exist_ok=True)
    paths = []
    if isinstance(report, FlowResult):
        paths.append(emit_flow_trace(os.path.join(outdir, "flow_trace.csv"),
                                     report.f_history))
    elif isinstance(report, ChamberReport):
        paths.append(emit_chamber_scatter(os.path.join(outdir, "chamber_cloud.csv"),
                                          report.points))
        paths.append(emit_deficit_curve(os.path.join(outdir, "deficit_curve.csv"),
                                        report.deficits_by_size))
    elif isinstance(report, DensityReport):
        paths.append(write_csv(os.path.join(outdir, "density_report.csv"),
                               ["n_samples", "semistable_fraction",
                                "knn_graph_connected", "k_neighbors",
                                "largest_component_fraction"],
                               [(report.n_samples, report.semistable_fraction,
                                 int(report.knn_graph_connected), report.k_neighbors,
                                 report.largest_component_fraction)]))
    elif isinstance(report, (list, tuple)) and report and isinstance(report[0], WeightSample):
        rows = [{"sample_id": i, "direction_id": 0, "lambda_0": w.lambda_0,
                 "lambda_limit": w.lambda_limit, "energy": w.energy,
                 "t_reached": w.t_reached, "converged": w.converged}
                for i, w in enumerate(report)]
        paths.append(emit_weight_table(os.path.join(outdir, "weights.csv"), rows))
    else:
        raise TypeError(f"no plot-data emitter for {type(report).__name__}")
    return paths


# -- figures ----------------------------------------------------------------------


def render_flow_figure(path: str, traces: Sequence[Sequence[tuple[float, float]]]) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for hist in traces:
        ts = [t for t, _ in hist]
        fs = [max(f, 1e-18) for _, f in hist]
        ax.semilogy(ts, fs, lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("f_p")
    ax.set_title("norm square along negative gradient flows")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_chamber_figure(path: str, images: np.ndarray,
                          hull_vertices: Optional[np.ndarray] = None) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 5))
    if images.shape[1] >= 2:
        gaps = np.diff(images, axis=1) * -1.0
        xs, ys = gaps[:, 0], gaps[:, 1] if gaps.shape[1] > 1 else np.zeros(len(gaps))
        ax.scatter(xs, ys, s=4, alpha=0.4, label="chamber images")
        if hull_vertices is not None and len(hull_vertices) > 1:
            hg = np.diff(hull_vertices, axis=1) * -1.0
            hx = hg[:, 0]
            hy = hg[:, 1] if hg.shape[1] > 1 else np.zeros(len(hg))
            ax.scatter(hx, hy, s=25, marker="x", color="crimson", label="hull vertices")
        ax.set_xlabel("first spectral gap")
        ax.set_ylabel("second spectral gap")
        ax.legend(loc="best", fontsize=8)
    ax.set_title("gradient-map chamber image")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_deficit_figure(path: str, deficits_by_size: Sequence[tuple[int, float]]) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ns = [n for n, _ in deficits_by_size]
    ds = [d for _, d in deficits_by_size]
    ax.plot(ns, ds, "o-")
    ax.set_xlabel("sample size")
    ax.set_ylabel("max midpoint deficit")
    ax.set_title("convexity surrogate vs sample size")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_density_figure(path: str, report) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bars = {
        "semistable": report.semistable_fraction,
        "largest knn comp.": report.largest_component_fraction,
    }
    ax.bar(list(bars), list(bars.values()), color=["steelblue", "darkseagreen"])
    ax.set_ylim(0, 1.05)
    ax.set_title(f"density scan (n={report.n_samples}, k={report.k_neighbors})")
    for i, v in enumerate(bars.values()):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
