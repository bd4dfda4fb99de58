"""Render estimator-log CSV files as figures.

The input schema is frozen: a "# estimator log v1" comment line, a header
row, then numeric rows.  Rendering is a pure function of the CSV bytes
and the figure spec, so repeated runs produce identical image bytes.
"""

from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

MAGIC = "# estimator log v1"

PANEL_COLUMNS = {
    "terms": ["zeta_S1", "zeta_S2", "zeta_S3", "zeta_S4", "zeta_T1", "zeta_T2"],
    "accumulated": ["zeta_S_acc", "zeta_T_acc", "zeta_full"],
}

LABELS = {
    "zeta_S1": r"$\zeta_{S_1}$", "zeta_S2": r"$\zeta_{S_2}$",
    "zeta_S3": r"$\zeta_{S_3}$", "zeta_S4": r"$\zeta_{S_4}$",
    "zeta_T1": r"$\zeta_{T_1}$", "zeta_T2": r"$\zeta_{T_2}$",
    "zeta_S_acc": r"$\zeta_{S,k}$", "zeta_T_acc": r"$\zeta_{T,k}$",
    "zeta_full": r"$\zeta_k$",
}


class SchemaError(Exception):
    pass


@dataclass
class FigureSpec:
    csv_path: str
    out_path: str
    panels: tuple = ("terms", "accumulated")
    logy: bool = False
    omit_full: bool = False        # drop zeta_k (exponential-growth cases)


def read_log(path):
    """Parse one estimator log into {column: array}."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != MAGIC:
        raise SchemaError(f"{path}: not an estimator log (missing '{MAGIC}')")
    if len(lines) < 2:
        raise SchemaError(f"{path}: empty data")
    cols = lines[1].split(",")
    rows = []
    for ln in lines[2:]:
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise SchemaError(f"{path}: row with {len(parts)} fields, "
                              f"expected {len(cols)}")
        rows.append([float(p) for p in parts])
    if not rows:
        raise SchemaError(f"{path}: empty data")
    data = np.array(rows)
    return {c: data[:, i] for i, c in enumerate(cols)}


def _require(data, names, path):
    missing = [n for n in names if n not in data]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")


def render(spec):
    """Draw the configured panels and write the image file."""
    for p in spec.panels:
        if p not in PANEL_COLUMNS:
            raise SchemaError(f"unknown panel {p!r} (choose from "
                              f"{', '.join(PANEL_COLUMNS)})")
    data = read_log(spec.csv_path)
    _require(data, ["t"], spec.csv_path)
    t = data["t"]

    fig, axes = plt.subplots(1, len(spec.panels),
                             figsize=(5.0 * len(spec.panels), 3.6))
    if len(spec.panels) == 1:
        axes = [axes]
    for ax, panel in zip(axes, spec.panels):
        names = list(PANEL_COLUMNS[panel])
        if spec.omit_full and "zeta_full" in names:
            names.remove("zeta_full")
        _require(data, names, spec.csv_path)
        for name in names:
            ax.plot(t, data[name], label=LABELS[name], linewidth=1.2)
        if spec.logy:
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_title("per-step terms" if panel == "terms" else "accumulated")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(spec.out_path, dpi=110, metadata={"Software": "figgen"})
    plt.close(fig)
    return spec.out_path
