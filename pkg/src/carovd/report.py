"""Report assembly: metrics + stratification as JSON/CSV plus SVG figures.

Figures are written with a small deterministic SVG emitter (fixed float
formatting, no timestamps), so identical inputs yield identical bytes at
any worker count. Each figure's underlying numbers are also emitted as a
delimiter-separated table next to it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .stats import (
    CONTINUOUS_FIELDS,
    EVENT_FIELDS,
    FLAG_FIELDS,
    AlignmentCurves,
    ConfusionMatrix,
    StratReport,
    accuracy,
    balanced_accuracy,
)


def _f(x: float) -> str:
    return f"{x:.2f}"


class SvgCanvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke="#444", width=1.0):
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(width)}"/>'
        )

    def polyline(self, points, stroke, width=1.5):
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_f(width)}"/>'
        )

    def text(self, x, y, content, size=11, anchor="start", fill="#222"):
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" '
            f'font-size="{size}" text-anchor="{anchor}" fill="{fill}">{content}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


GROUP_ORDER = ("dx+_highVD", "dx+_lowVD", "dx-_highVD", "dx-_lowVD")
GROUP_COLORS = {
    "dx+_highVD": "#b2182b",
    "dx+_lowVD": "#ef8a62",
    "dx-_highVD": "#67a9cf",
    "dx-_lowVD": "#2166ac",
}


def confusion_figure(m: ConfusionMatrix) -> str:
    svg = SvgCanvas(320, 300)
    cells = [("TN", m.tn, 0, 0), ("FP", m.fp, 1, 0), ("FN", m.fn, 0, 1), ("TP", m.tp, 1, 1)]
    peak = max(m.tp, m.fp, m.tn, m.fn, 1)
    size = 110
    x0, y0 = 70, 50
    for name, value, col, row in cells:
        shade = int(235 - 160 * value / peak)
        fill = f"rgb({shade},{shade},245)"
        svg.rect(x0 + col * size, y0 + row * size, size, size, fill, stroke="#333")
        svg.text(
            x0 + col * size + size / 2,
            y0 + row * size + size / 2 - 4,
            name,
            anchor="middle",
        )
        svg.text(
            x0 + col * size + size / 2,
            y0 + row * size + size / 2 + 14,
            str(value),
            anchor="middle",
        )
    svg.text(x0 + size, 30, "predicted", anchor="middle")
    svg.text(x0 + size / 2, 44, "LowVD", anchor="middle", size=10)
    svg.text(x0 + size * 1.5, 44, "HighVD", anchor="middle", size=10)
    svg.text(20, y0 + size / 2, "dx-", size=10)
    svg.text(20, y0 + size * 1.5, "dx+", size=10)
    return svg.render()


def prevalence_figure(report: StratReport) -> str:
    flags = list(FLAG_FIELDS)
    svg = SvgCanvas(980, 360)
    x0, y0, plot_h = 60, 20, 260
    band = (980 - x0 - 20) / len(flags)
    peak = max(
        (g.prevalence[f] for g in report.groups.values() for f in flags), default=0.0
    )
    peak = max(peak, 0.05)
    for i, flag in enumerate(flags):
        for j, gname in enumerate(GROUP_ORDER):
            value = report.groups[gname].prevalence[flag]
            bar_w = band / 5.5
            x = x0 + i * band + j * bar_w
            h = plot_h * value / peak
            svg.rect(x, y0 + plot_h - h, bar_w, h, GROUP_COLORS[gname])
        svg.text(x0 + i * band + band / 2 - 4, y0 + plot_h + 16, flag[:14], size=8, anchor="middle")
    svg.line(x0, y0 + plot_h, 960, y0 + plot_h)
    for j, gname in enumerate(GROUP_ORDER):
        svg.rect(x0 + j * 150, 330, 10, 10, GROUP_COLORS[gname])
        svg.text(x0 + j * 150 + 14, 339, gname, size=10)
    svg.text(12, y0 + 10, f"max {peak:.3f}", size=9)
    return svg.render()


def events_figure(report: StratReport) -> str:
    events = report.events
    svg = SvgCanvas(880, 420)
    if events is None:
        svg.text(20, 30, "no event data")
        return svg.render()
    panels = (("treated", 20), ("untreated", 220))
    peak = 1
    for ev in EVENT_FIELDS:
        for mk, _ in panels:
            for g in GROUP_ORDER:
                peak = max(peak, events.counts[ev][mk][g])
    x0, plot_h = 80, 140
    band = (880 - x0 - 20) / len(EVENT_FIELDS)
    for mk, y0 in panels:
        for i, ev in enumerate(EVENT_FIELDS):
            for j, gname in enumerate(GROUP_ORDER):
                value = events.counts[ev][mk][gname]
                bar_w = band / 5.5
                x = x0 + i * band + j * bar_w
                h = plot_h * value / peak
                svg.rect(x, y0 + plot_h - h, bar_w, h, GROUP_COLORS[gname])
            svg.text(
                x0 + i * band + band / 2, y0 + plot_h + 14, ev, size=9, anchor="middle"
            )
        svg.line(x0, y0 + plot_h, 860, y0 + plot_h)
        share = events.overall_share_high_vd[mk]
        share_text = f"{share:.3f}" if share is not None else "n/a"
        svg.text(x0, y0 - 6, f"{mk} (high-VD share {share_text})", size=11)
    for j, gname in enumerate(GROUP_ORDER):
        svg.rect(x0 + j * 150, 400, 10, 10, GROUP_COLORS[gname])
        svg.text(x0 + j * 150 + 14, 409, gname, size=10)
    return svg.render()


def alignment_figure(curves: AlignmentCurves) -> str:
    svg = SvgCanvas(720, 360)
    x0, y0, plot_w, plot_h = 60, 30, 620, 260
    grid = curves.grid
    peak = max(float(curves.density_aligned.max()), float(curves.density_other.max()), 1e-12)

    def x_at(age):
        return x0 + plot_w * (age - grid[0]) / (grid[-1] - grid[0])

    def y_density(d):
        return y0 + plot_h * (1.0 - d / peak)

    def y_prop(p):
        return y0 + plot_h * (1.0 - p)

    svg.polyline(
        [(x_at(a), y_density(d)) for a, d in zip(grid, curves.density_aligned)], "#2166ac"
    )
    svg.polyline(
        [(x_at(a), y_density(d)) for a, d in zip(grid, curves.density_other)], "#b2182b"
    )
    svg.polyline(
        [(x_at(a), y_prop(p)) for a, p in zip(grid, curves.proportion_aligned)],
        "#333333",
        width=2.0,
    )
    svg.line(x0, y0 + plot_h, x0 + plot_w, y0 + plot_h)
    for age in range(int(grid[0]) // 10 * 10 + 10, int(grid[-1]) + 1, 10):
        svg.text(x_at(age), y0 + plot_h + 16, str(age), size=9, anchor="middle")
    svg.text(x0, 20, "aligned density (blue), other density (red), aligned proportion (black)", size=10)
    svg.text(x0 + plot_w - 120, y0 + plot_h + 32, "age [years]", size=10)
    return svg.render()


@dataclass
class EvaluationReport:
    clip_confusion: ConfusionMatrix
    video_confusion: ConfusionMatrix
    individual_confusion: ConfusionMatrix
    stratification: StratReport
    alignment: AlignmentCurves
    counts: dict[str, int]

    def metrics_dict(self) -> dict:
        out = {}
        for level, matrix in (
            ("clip", self.clip_confusion),
            ("video", self.video_confusion),
            ("individual", self.individual_confusion),
        ):
            entry = {
                "tp": matrix.tp, "fp": matrix.fp, "tn": matrix.tn, "fn": matrix.fn,
                "accuracy": accuracy(matrix),
            }
            try:
                entry["balanced_accuracy"] = balanced_accuracy(matrix)
            except Exception:
                entry["balanced_accuracy"] = None
            out[level] = entry
        return out


def write_report(report: EvaluationReport, out_dir: str | Path) -> Path:
    """Write report.json, CSV tables, and the four SVG figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    body = {
        "counts": report.counts,
        "metrics": report.metrics_dict(),
        "stratification": report.stratification.to_json_dict(),
        "alignment": {
            "n_aligned": report.alignment.n_aligned,
            "n_other": report.alignment.n_other,
            "bandwidth_aligned": report.alignment.bandwidth_aligned,
            "bandwidth_other": report.alignment.bandwidth_other,
        },
    }
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", "utf-8")

    (out_dir / "fig_confusion.svg").write_text(
        confusion_figure(report.clip_confusion), "utf-8"
    )
    (out_dir / "fig_groups.svg").write_text(
        prevalence_figure(report.stratification), "utf-8"
    )
    (out_dir / "fig_events.svg").write_text(
        events_figure(report.stratification), "utf-8"
    )
    (out_dir / "fig_alignment.svg").write_text(
        alignment_figure(report.alignment), "utf-8"
    )

    strat = report.stratification
    with open(out_dir / "groups.csv", "w", encoding="utf-8") as fh:
        fh.write("group,n," + ",".join(FLAG_FIELDS) + "\n")
        for gname in GROUP_ORDER:
            g = strat.groups[gname]
            fh.write(
                f"{gname},{g.n},"
                + ",".join(f"{g.prevalence[f]:.6g}" for f in FLAG_FIELDS)
                + "\n"
            )
    with open(out_dir / "quartiles.csv", "w", encoding="utf-8") as fh:
        fh.write("group,variable,n,q25,median,q75\n")
        for gname in GROUP_ORDER:
            g = strat.groups[gname]
            for var in CONTINUOUS_FIELDS:
                q = g.quartile[var]
                row = (
                    f"{gname},{var},{g.n_observed[var]},,,"
                    if q is None
                    else f"{gname},{var},{g.n_observed[var]},"
                    f"{q[0]:.6g},{q[1]:.6g},{q[2]:.6g}"
                )
                fh.write(row + "\n")
    with open(out_dir / "alignment.csv", "w", encoding="utf-8") as fh:
        fh.write("age,density_aligned,density_other,proportion_aligned\n")
        for a, da, do, p in zip(
            report.alignment.grid,
            report.alignment.density_aligned,
            report.alignment.density_other,
            report.alignment.proportion_aligned,
        ):
            fh.write(f"{a:.6g},{da:.8g},{do:.8g},{p:.8g}\n")
    if strat.events is not None:
        with open(out_dir / "events.csv", "w", encoding="utf-8") as fh:
            fh.write("event,medication,group,count\n")
            for ev in EVENT_FIELDS:
                for mk in ("treated", "untreated"):
                    for gname in GROUP_ORDER:
                        fh.write(f"{ev},{mk},{gname},{strat.events.counts[ev][mk][gname]}\n")
    return report_path
