"""Deterministic rendering of tables and plots.

Everything here is byte-stable: no timestamps, no hostnames, fixed float
formatting, so outputs can be golden-file tested and two runs with the
same inputs produce identical artifacts.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from smearkit.data import CLASSES
from smearkit.metrics import ClassScore, ConfusionMatrix, CountTable

CLASS_COLORS = {
    "rbc": "#4477aa",
    "leukocyte": "#66ccee",
    "gametocyte": "#228833",
    "ring": "#ccbb44",
    "trophozoite": "#ee6677",
    "schizont": "#aa3377",
    "difficult": "#bbbbbb",
}
_FALLBACK_COLORS = ("#000000", "#e69f00", "#56b4e9", "#009e73", "#cc79a7", "#d55e00")


def count_table_csv(table: CountTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("class",) + table.columns)
    for row, cells in zip(table.rows, table.values):
        writer.writerow((row,) + tuple(cells))
    return buffer.getvalue()


def read_count_table_csv(text: str) -> CountTable:
    """Parse a count-table CSV; cells stay strings so rendering is lossless."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[0] != "class" or len(header) < 2:
        raise ValueError("not a count table CSV: first header cell must be 'class'")
    columns = tuple(header[1:])
    rows = []
    values = []
    for line in reader:
        if not line:
            continue
        if len(line) != len(header):
            raise ValueError(f"count table row {line!r} does not match the header")
        rows.append(line[0])
        values.append(tuple(line[1:]))
    return CountTable(rows=tuple(rows), columns=columns, values=tuple(values))


def count_table_text(table: CountTable) -> str:
    """Fixed-width text rendering: class column left-aligned, counts right-aligned."""
    headers = ("class",) + table.columns
    grid = [[row, *map(str, cells)] for row, cells in zip(table.rows, table.values)]
    widths = [max(len(headers[j]), *(len(line[j]) for line in grid)) if grid else len(headers[j])
              for j in range(len(headers))]
    out = [
        "  ".join(
            headers[j].ljust(widths[j]) if j == 0 else headers[j].rjust(widths[j])
            for j in range(len(headers))
        ).rstrip()
    ]
    for line in grid:
        out.append(
            "  ".join(
                line[j].ljust(widths[j]) if j == 0 else line[j].rjust(widths[j])
                for j in range(len(headers))
            ).rstrip()
        )
    return "\n".join(out) + "\n"


def confusion_csv(cm: ConfusionMatrix) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("annotation\\prediction",) + cm.column_names)
    for i, row in enumerate(cm.row_names):
        writer.writerow((row,) + tuple(int(v) for v in cm.matrix[i]))
    return buffer.getvalue()


def scores_to_dict(scores: dict) -> dict:
    """JSON-ready mapping of per-class precision/recall/F1 (None stays null)."""
    out = {}
    for label in sorted(scores, key=lambda c: (CLASSES.index(c) if c in CLASSES else 99, c)):
        score = scores[label]
        if score is None:
            out[label] = None
        else:
            out[label] = {
                "precision": score.precision,
                "recall": score.recall,
                "f1": score.f1,
                "tp": score.tp,
                "fp": score.fp,
                "fn": score.fn,
            }
    return out


def f1_percent(score: ClassScore | None) -> str:
    """F1 as a whole percent, '--' when the class is absent."""
    if score is None:
        return "--"
    return str(int(np.floor(score.f1 * 100.0 + 0.5)))


def svg_scatter(coords: np.ndarray, labels, size: int = 640, margin: int = 40,
                point_radius: float = 3.0) -> str:
    """Scatter plot of 2-D coordinates, one color per label, with a legend.

    Label order in the legend is the canonical class order first, then any
    other labels sorted; colors are a fixed palette keyed by label.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError(f"coords must be (n, 2), got {coords.shape}")
    labels = ["unlabeled" if lab in (None, "") else str(lab) for lab in labels]
    if len(labels) != coords.shape[0]:
        raise ValueError(f"{len(labels)} labels for {coords.shape[0]} points")
    ordered = [c for c in CLASSES + ("difficult",) if c in set(labels)]
    ordered += sorted(set(labels) - set(ordered))
    colors = {}
    for i, label in enumerate(ordered):
        colors[label] = CLASS_COLORS.get(label, _FALLBACK_COLORS[i % len(_FALLBACK_COLORS)])

    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = size - 2 * margin

    def sx(v):
        return margin + (v - lo[0]) / span[0] * inner

    def sy(v):
        return margin + (1.0 - (v - lo[1]) / span[1]) * inner

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for (x, y), label in zip(coords, labels):
        lines.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="{point_radius}" '
            f'fill="{colors[label]}" fill-opacity="0.75"/>'
        )
    for i, label in enumerate(ordered):
        ly = margin + 18 * i
        lines.append(f'<circle cx="{size - margin - 110}" cy="{ly}" r="5" fill="{colors[label]}"/>')
        lines.append(
            f'<text x="{size - margin - 98}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
