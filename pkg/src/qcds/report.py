"""SVG figures from history and controller-curve CSVs."""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import PlotError  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "qcds"

PANELS = (("train_loss", "train loss"), ("train_acc", "train accuracy"),
          ("test_loss", "test loss"), ("test_acc", "test accuracy"))
CURVE_COLUMNS = ("loop", "controller_loss", "metric_value")


def read_csv_columns(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise PlotError(f"{path}: {exc}")
    if len(rows) < 2:
        raise PlotError(f"{path}: no data rows")
    header = rows[0]
    cols = {h: [] for h in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise PlotError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
        for h, v in zip(header, row):
            try:
                cols[h].append(float(v) if v != "" else float("nan"))
            except ValueError:
                raise PlotError(f"{path}: line {lineno}: non-numeric value {v!r} in {h}")
    return cols


def csv_kind(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
    except OSError as exc:
        raise PlotError(f"{path}: {exc}")
    if tuple(header) == CURVE_COLUMNS:
        return "curve"
    if "epoch" in header and all(p in header for p, _ in PANELS):
        return "history"
    raise PlotError(f"{path}: unrecognised CSV header {header}")


def _save(fig, out_path):
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_histories(paths, labels, out_path):
    """Four panels (train/test loss and accuracy against epoch), one series per file."""
    if not paths:
        raise PlotError("need at least one history CSV")
    data = [read_csv_columns(p) for p in paths]
    for p, d in zip(paths, data):
        missing = [c for c, _ in PANELS if c not in d] + ([] if "epoch" in d else ["epoch"])
        if missing:
            raise PlotError(f"{p}: missing columns {missing}")
    fig, axes = plt.subplots(1, 4, figsize=(16, 3.6))
    for ax, (col, title) in zip(axes, PANELS):
        for d, label in zip(data, labels):
            ax.plot(d["epoch"], d[col], label=label, linewidth=1.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel(title)
        ax.set_title(title)
    axes[-1].legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    _save(fig, out_path)
    return out_path


def plot_controller_curves(paths, labels, out_path):
    if not paths:
        raise PlotError("need at least one controller curve CSV")
    fig, ax = plt.subplots(figsize=(6, 4))
    for p, label in zip(paths, labels):
        d = read_csv_columns(p)
        if any(c not in d for c in CURVE_COLUMNS):
            raise PlotError(f"{p}: expected columns {CURVE_COLUMNS}")
        ax.plot(d["loop"], d["controller_loss"], label=label, linewidth=1.2)
    ax.set_xlabel("feedback loop")
    ax.set_ylabel("controller loss")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, out_path)
    return out_path


def plot(paths, out_dir, labels=None):
    """Route each CSV to its figure type; returns the SVG paths written."""
    if not labels:
        labels = [os.path.splitext(os.path.basename(p))[0] for p in paths]
        if len(set(labels)) < len(labels):
            # runs usually share file names, so fall back to the run directory
            labels = [os.path.basename(os.path.dirname(os.path.abspath(p))) for p in paths]
    if len(labels) != len(paths):
        raise PlotError("one label per CSV is required")
    groups = {"history": ([], []), "curve": ([], [])}
    for p, lab in zip(paths, labels):
        kind = csv_kind(p)
        groups[kind][0].append(p)
        groups[kind][1].append(lab)
    written = []
    if groups["history"][0]:
        written.append(plot_histories(*groups["history"], os.path.join(out_dir, "history.svg")))
    if groups["curve"][0]:
        written.append(plot_controller_curves(*groups["curve"], os.path.join(out_dir, "controller.svg")))
    return written
