"""SVG line plots of mean clustering error from a summary table.

One figure per (distribution, c, d, sweep) panel. The x-axis is the swept
size, the y-axis the mean error rate, and each line is one (algorithm, fixed
size) pair. Every line carries a ``gid`` of the form
``series|<algorithm>|<fixed>=<value>|x=<x1;x2;...>|y=<y1;y2;...>`` that shows
up as the ``id`` of its SVG group, so plotted values can be read back from
the file.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Mapping, Sequence

from matplotlib.figure import Figure

from .bench import SUMMARY_COLUMNS, read_summary
from .errors import FormatError

logger = logging.getLogger(__name__)

LINE_STYLES = {"tensor": "-", "baseline": "--", "tensor_init": ":"}
ALGORITHM_LABELS = {"tensor": "tensor (HOOI)", "tensor_init": "tensor (init only)", "baseline": "baseline"}
SERIES_RE = re.compile(r'id="(series\|[^"]+)"')


def panel_name(distribution: str, c: str, d: str, sweep: str) -> str:
    return f"{distribution}_c{float(c):+.4f}_d{float(d):+.4f}_vary{sweep}"


def _series(rows: Sequence[Mapping[str, str]]) -> dict[tuple[str, str, str, str], dict[tuple[str, int], list[tuple[int, float]]]]:
    panels: dict = {}
    for row in rows:
        if not row["mean_r_bl"]:
            continue
        panel = (row["distribution"], row["c"], row["d"], row["sweep"])
        fixed_name = "L" if row["sweep"] == "n" else "n"
        x = int(row[row["sweep"]])
        line = (row["algorithm"], int(row[fixed_name]))
        panels.setdefault(panel, {}).setdefault(line, []).append((x, float(row["mean_r_bl"])))
    return panels


def plot_summary(rows: Sequence[Mapping[str, str]], out_dir: Path) -> list[Path]:
    """Write one SVG per panel and return their paths."""
    if not rows:
        raise FormatError("summary has no rows to plot")
    missing = set(SUMMARY_COLUMNS) - set(rows[0])
    if missing:
        raise FormatError(f"summary is missing columns {sorted(missing)}")
    panels = _series(rows)
    if not panels:
        raise FormatError("summary has no successful cells to plot")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (distribution, c, d, sweep), lines in sorted(panels.items()):
        fixed_name = "L" if sweep == "n" else "n"
        fig = Figure(figsize=(6, 4.5))
        ax = fig.subplots()
        for (algorithm, fixed), points in sorted(lines.items()):
            points.sort()
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            gid = (
                f"series|{algorithm}|{fixed_name}={fixed}"
                f"|x={';'.join(str(x) for x in xs)}|y={';'.join(repr(y) for y in ys)}"
            )
            ax.plot(
                xs, ys,
                linestyle=LINE_STYLES.get(algorithm, "-"),
                marker="o",
                label=f"{ALGORITHM_LABELS.get(algorithm, algorithm)}, {fixed_name}={fixed}",
                gid=gid,
            )
        ax.set_xlabel(sweep)
        ax.set_ylabel("mean between-layer error")
        ax.set_title(f"{distribution}, c={float(c):g}, d={float(d):g}")
        ax.set_ylim(bottom=0.0)
        ax.grid(linestyle="--", alpha=0.6)
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = out_dir / f"{panel_name(distribution, c, d, sweep)}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        written.append(path)
        logger.info("Saved plot to %s", path)
    return written


def plot_summary_file(summary_path: Path, out_dir: Path) -> list[Path]:
    return plot_summary(read_summary(summary_path), out_dir)


def read_series(svg_path: Path) -> dict[tuple[str, str], tuple[list[int], list[float]]]:
    """Recover ``{(algorithm, "<fixed>=<value>"): (xs, ys)}`` from a plot written by :func:`plot_summary`."""
    text = Path(svg_path).read_text(encoding="utf-8")
    series = {}
    for gid in SERIES_RE.findall(text):
        _, algorithm, fixed, xs, ys = gid.split("|")
        series[(algorithm, fixed)] = (
            [int(v) for v in xs[2:].split(";")],
            [float(v) for v in ys[2:].split(";")],
        )
    return series
