"""Per-epoch data-blending schedules and the learning-rate schedule.

w0(t) is the distilled-data weight at epoch t (0-indexed), w1(t) the
original-data weight. All kinds except all_blend keep w0 in [0, 1] with
w1 = 1 - w0; all_blend is the sentinel pair (1, 1) meaning "use both
datasets in full every epoch". Ratio-based kinds evaluate x = t/(T-1), so
they need T >= 2. Endpoint values of cosine and power are pinned to exact
0.0/1.0 rather than trusting trig rounding.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

KINDS = (
    "pure_distilled",
    "pure_original",
    "simple_mix",
    "sigmoid",
    "cosine",
    "power",
    "all_blend",
)

_RATIO_KINDS = ("sigmoid", "cosine", "power")


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    T: int
    k: float | None = None
    n: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.kind == "sigmoid":
            if self.k is None or self.k <= 0:
                raise ValueError("sigmoid schedule requires k > 0")
        elif self.k is not None:
            raise ValueError(f"k is only valid for sigmoid, not {self.kind}")
        if self.kind == "power":
            if self.n is None or self.n <= 0:
                raise ValueError("power schedule requires n > 0")
        elif self.n is not None:
            raise ValueError(f"n is only valid for power, not {self.kind}")

    def params_label(self) -> str:
        if self.kind == "sigmoid":
            return f"k={_num(self.k)}"
        if self.kind == "power":
            return f"n={_num(self.n)}"
        return ""

    def label(self) -> str:
        params = self.params_label()
        return f"{self.kind}({params})" if params else self.kind


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else str(x)


@dataclass(frozen=True)
class LrSpec:
    base_lr: float
    decay_factor: float = 1.0

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be > 0")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must be in (0, 1]")


def _check_epoch(spec: ScheduleSpec, t: int) -> None:
    if not 0 <= t < spec.T:
        raise ValueError(f"epoch {t} out of range [0, {spec.T})")
    if spec.kind in _RATIO_KINDS and spec.T < 2:
        raise ValueError(f"{spec.kind} schedule needs T >= 2, got T={spec.T}")


def _cos_pi(ratio: float) -> float:
    # exact at the quarter points; cos(pi*x) elsewhere
    if ratio == 0.0:
        return 1.0
    if ratio == 0.5:
        return 0.0
    if ratio == 1.0:
        return -1.0
    return math.cos(math.pi * ratio)


def w0(spec: ScheduleSpec, t: int) -> float:
    """Distilled-data weight at epoch t."""
    _check_epoch(spec, t)
    if spec.kind == "pure_distilled":
        return 1.0
    if spec.kind == "pure_original":
        return 0.0
    if spec.kind == "all_blend":
        return 1.0
    if spec.kind == "simple_mix":
        return 1.0 if 2 * t < spec.T else 0.0
    x = t / (spec.T - 1)
    if spec.kind == "sigmoid":
        return 1.0 - 1.0 / (1.0 + math.exp(-spec.k * (x - 0.5)))
    if spec.kind == "cosine":
        return 0.5 * (1.0 + _cos_pi(x))
    # power
    if t == spec.T - 1:
        return 0.0
    return 1.0 - x**spec.n


def w1(spec: ScheduleSpec, t: int) -> float:
    """Original-data weight at epoch t: 1 - w0, except all_blend's sentinel 1."""
    if spec.kind == "all_blend":
        _check_epoch(spec, t)
        return 1.0
    return 1.0 - w0(spec, t)


def lr_at_epoch(spec: LrSpec, t: int) -> float:
    if t < 0:
        raise ValueError("epoch must be >= 0")
    return spec.base_lr * spec.decay_factor**t


def paper_curve_family(T: int = 20) -> list[ScheduleSpec]:
    """The 14 decaying schedules studied: simple mix, five sigmoid steepness
    values, cosine, and seven power exponents."""
    specs = [ScheduleSpec("simple_mix", T)]
    specs += [ScheduleSpec("sigmoid", T, k=k) for k in (2, 4, 8, 16, 32)]
    specs.append(ScheduleSpec("cosine", T))
    specs += [ScheduleSpec("power", T, n=n) for n in (0.1, 0.2, 0.5, 1, 2, 5, 10)]
    return specs


def curve_points(spec: ScheduleSpec) -> list[tuple[int, float]]:
    return [(t, w0(spec, t)) for t in range(spec.T)]


def emit_curves(specs: Sequence[ScheduleSpec]) -> str:
    """CSV with columns (strategy, params, t, w0), one row per epoch per spec.

    w0 is written with repr so re-parsing reproduces the double exactly.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "params", "t", "w0"])
    for spec in specs:
        for t, value in curve_points(spec):
            writer.writerow([spec.kind, spec.params_label(), t, repr(value)])
    return buf.getvalue()


def parse_curves(text: str) -> list[tuple[str, str, int, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["strategy", "params", "t", "w0"]:
        raise ValueError(f"unexpected curve CSV header: {header}")
    return [(kind, params, int(t), float(v)) for kind, params, t, v in reader]


def render_curves_svg(specs: Sequence[ScheduleSpec], width: int = 640, height: int = 400) -> str:
    """Minimal standalone SVG plot of w0 against epoch for each spec."""
    margin = 50
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
               "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
               "#8c6d31", "#843c39"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 10}" font-size="12" text-anchor="middle">epoch</text>',
        f'<text x="14" y="{height // 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {height // 2})">w0</text>',
    ]
    for i, spec in enumerate(specs):
        points = curve_points(spec)
        denom = max(len(points) - 1, 1)
        coords = " ".join(
            f"{margin + plot_w * t / denom:.2f},{margin + plot_h * (1 - v):.2f}" for t, v in points
        )
        color = palette[i % len(palette)]
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{margin + 8}" y="{margin + 14 * i + 10}" font-size="10" fill="{color}">{spec.label()}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
