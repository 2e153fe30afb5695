"""CSV and SVG output.

CSV: comma-separated, one header row, '.' decimal point, LF line endings,
values written with 17 significant digits so a round trip is exact.
"""
import csv

import numpy as np

from .analysis import ScanCurve
from .errors import InvalidArgument

SCAN_COLUMNS = ("tv_um", "rate", "stderr", "r2x2", "r_ab", "r_ac", "r_bc")


def _fmt(v):
    return format(float(v), ".17g")


def write_csv(path, columns):
    """Write ``{name: sequence}`` columns of equal length."""
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    lengths = {d.size for d in data}
    if len(lengths) > 1:
        raise InvalidArgument(f"columns have different lengths: {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Return ``{name: float array}`` in header order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidArgument(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise InvalidArgument(f"{path}: non-numeric or ragged data ({exc})") from None
    return {name: values[:, i] for i, name in enumerate(header)}


def write_curve(path, curve, x_name="tv_um", y_name="rate"):
    cols = {x_name: curve.x, y_name: curve.y}
    if curve.yerr is not None:
        cols["stderr"] = curve.yerr
    write_csv(path, cols)


def read_curve(path, x=None, y=None, yerr=None):
    """Load a ScanCurve; defaults: first column, ``rate`` (else second column), ``stderr`` if present."""
    cols = read_csv(path)
    names = list(cols)
    if len(names) < 2:
        raise InvalidArgument(f"{path}: need at least two columns")
    x = x or names[0]
    y = y or ("rate" if "rate" in cols else names[1])
    if yerr is None and "stderr" in cols:
        yerr = "stderr"
    for name in (x, y) + ((yerr,) if yerr else ()):
        if name not in cols:
            raise InvalidArgument(f"{path}: no column {name!r}")
    return ScanCurve(cols[x], cols[y], cols[yerr] if yerr else None)


def write_scan(path, scan):
    write_csv(path, {
        "tv_um": scan.fourfold.x,
        "rate": scan.fourfold.y,
        "stderr": scan.fourfold.yerr,
        "r2x2": scan.accidental.y,
        "r_ab": scan.two_fold["AB"].y,
        "r_ac": scan.two_fold["AC"].y,
        "r_bc": scan.two_fold["BC"].y,
    })


def plot_svg(path, x, series, xlabel, ylabel, title=None):
    """Static SVG; ``series`` is a list of ``(label, y, yerr_or_None, fmt)``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "noonproj", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, y, yerr, fmt in series:
            if yerr is not None:
                ax.errorbar(x, y, yerr=yerr, fmt=fmt, label=label, ms=4, capsize=0)
            else:
                ax.plot(x, y, fmt, label=label, ms=4)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
