"""
Hand-written SVG charts with a fixed 800x500 viewBox.

Output is byte-for-byte deterministic for equal input. Every plotted mark
carries ``data-value`` (and ``data-x`` where x is data) holding the same
formatted number the accompanying CSV holds. The y axis always spans [0, 1];
every plotted metric is a rate.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from html import escape
from typing import Optional

from .summary import format_number

WIDTH = 800
HEIGHT = 500
MARGIN_LEFT = 70
MARGIN_RIGHT = 170
MARGIN_TOP = 50
MARGIN_BOTTOM = 60
PLOT_WIDTH = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
PLOT_HEIGHT = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

Y_TICKS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
)


@dataclass(frozen=True)
class Series:
    name: str
    points: Sequence[tuple[float, float]]
    # optional text drawn next to each point
    point_labels: Optional[Sequence[str]] = None


def _c(value: float) -> str:
    return f"{value:.2f}"


def _text(value: str) -> str:
    return escape(value, quote=True)


def _color(index: int) -> str:
    return PALETTE[index % len(PALETTE)]


def _y(value: float) -> float:
    return MARGIN_TOP + PLOT_HEIGHT * (1.0 - value)


def _bar_height(value: float) -> float:
    return PLOT_HEIGHT * value


def _line(cls: str, x1: float, y1: float, x2: float, y2: float) -> str:
    return (
        f'<line class="{cls}" x1="{_c(x1)}" y1="{_c(y1)}" x2="{_c(x2)}" '
        f'y2="{_c(y2)}" stroke="#000"/>'
    )


class _Canvas:
    def __init__(self, title: str, x_label: str, y_label: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" '
            f'font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
            f'<text class="title" x="{WIDTH / 2:.0f}" y="28" text-anchor="middle" '
            f'font-size="16">{_text(title)}</text>',
        ]
        self.axes(x_label, y_label)

    def add(self, element: str) -> None:
        self.parts.append(element)

    def axes(self, x_label: str, y_label: str) -> None:
        x0, x1 = MARGIN_LEFT, MARGIN_LEFT + PLOT_WIDTH
        y0, y1 = MARGIN_TOP + PLOT_HEIGHT, MARGIN_TOP
        self.add(_line("axis", x0, y0, x1, y0))
        self.add(_line("axis", x0, y0, x0, y1))
        for tick in Y_TICKS:
            y = _y(tick)
            self.add(_line("tick", x0 - 5, y, x0, y))
            self.add(
                f'<text class="tick-label" x="{x0 - 8}" y="{_c(y)}" text-anchor="end" '
                f'dominant-baseline="middle">{tick:.1f}</text>'
            )
        self.add(
            f'<text class="axis-label" x="{MARGIN_LEFT + PLOT_WIDTH / 2:.0f}" '
            f'y="{HEIGHT - 15}" text-anchor="middle">{_text(x_label)}</text>'
        )
        self.add(
            f'<text class="axis-label" x="18" y="{MARGIN_TOP + PLOT_HEIGHT / 2:.0f}" '
            f'text-anchor="middle" transform="rotate(-90 18 '
            f'{MARGIN_TOP + PLOT_HEIGHT / 2:.0f})">{_text(y_label)}</text>'
        )

    def x_tick(self, x: float, label: str) -> None:
        y0 = MARGIN_TOP + PLOT_HEIGHT
        self.add(_line("tick", x, y0, x, y0 + 5))
        self.add(
            f'<text class="tick-label" x="{_c(x)}" y="{y0 + 18}" '
            f'text-anchor="middle">{_text(label)}</text>'
        )

    def legend(self, names: Sequence[str]) -> None:
        x = MARGIN_LEFT + PLOT_WIDTH + 15
        for index, name in enumerate(names):
            y = MARGIN_TOP + 10 + index * 20
            self.add(
                f'<rect class="legend-swatch" x="{x}" y="{y - 6}" width="12" '
                f'height="12" fill="{_color(index)}"/>'
            )
            self.add(
                f'<text class="legend-label" x="{x + 18}" y="{y}" '
                f'dominant-baseline="middle">{_text(name)}</text>'
            )

    def render(self) -> str:
        return "\n".join([*self.parts, "</svg>"]) + "\n"


def line_chart(
    title: str,
    series: Sequence[Series],
    x_label: str,
    y_label: str,
    x_domain: Optional[tuple[float, float]] = None,
    x_ticks: Optional[Sequence[float]] = None,
) -> str:
    """Lines with point markers; a single-point series is just a marker."""
    canvas = _Canvas(title, x_label, y_label)
    xs = [x for s in series for x, _ in s.points]
    if x_domain is not None:
        lo, hi = x_domain
    else:
        lo, hi = min(xs, default=0.0), max(xs, default=1.0)

    def sx(x: float) -> float:
        if hi == lo:
            return MARGIN_LEFT + PLOT_WIDTH / 2
        return MARGIN_LEFT + PLOT_WIDTH * (x - lo) / (hi - lo)

    for tick in x_ticks if x_ticks is not None else sorted(set(xs)):
        canvas.x_tick(sx(tick), f"{tick:g}")

    for index, s in enumerate(series):
        color = _color(index)
        coords = [(sx(x), _y(y)) for x, y in s.points]
        if len(coords) > 1:
            path = " ".join(
                f"{'M' if i == 0 else 'L'}{_c(px)},{_c(py)}"
                for i, (px, py) in enumerate(coords)
            )
            canvas.add(
                f'<path class="series-line" d="{path}" fill="none" '
                f'stroke="{color}" stroke-width="2"/>'
            )
        for i, ((x, y), (px, py)) in enumerate(zip(s.points, coords)):
            canvas.add(
                f'<circle class="point" cx="{_c(px)}" cy="{_c(py)}" r="4" '
                f'fill="{color}" data-series="{_text(s.name)}" '
                f'data-x="{format_number(x)}" data-value="{format_number(y)}"/>'
            )
            if s.point_labels is not None:
                canvas.add(
                    f'<text class="point-label" x="{_c(px + 6)}" y="{_c(py - 6)}" '
                    f'font-size="10">{_text(s.point_labels[i])}</text>'
                )
    canvas.legend([s.name for s in series])
    return canvas.render()


def stacked_bar_chart(
    title: str,
    columns: Sequence[str],
    stacks: Sequence[tuple[str, Sequence[float]]],
    x_label: str,
    y_label: str,
) -> str:
    """One bar per column, segments stacked bottom-up in ``stacks`` order."""
    canvas = _Canvas(title, x_label, y_label)
    slot = PLOT_WIDTH / max(len(columns), 1)
    bar_width = slot * 0.6
    for col, column in enumerate(columns):
        left = MARGIN_LEFT + slot * col + (slot - bar_width) / 2
        canvas.x_tick(left + bar_width / 2, column)
        base = MARGIN_TOP + PLOT_HEIGHT
        for index, (name, values) in enumerate(stacks):
            value = values[col]
            height = _bar_height(value)
            base -= height
            canvas.add(
                f'<rect class="segment" x="{_c(left)}" y="{_c(base)}" '
                f'width="{_c(bar_width)}" height="{_c(height)}" fill="{_color(index)}" '
                f'data-column="{_text(column)}" data-series="{_text(name)}" '
                f'data-value="{format_number(value)}"/>'
            )
    canvas.legend([name for name, _ in stacks])
    return canvas.render()


def bar_chart(
    title: str,
    labels: Sequence[str],
    values: Sequence[float],
    x_label: str,
    y_label: str,
    groups: Optional[Sequence[str]] = None,
) -> str:
    """Vertical bars; bars sharing a group name share a colour."""
    canvas = _Canvas(title, x_label, y_label)
    group_names = list(dict.fromkeys(groups)) if groups is not None else []
    slot = PLOT_WIDTH / max(len(labels), 1)
    bar_width = slot * 0.6
    for index, (label, value) in enumerate(zip(labels, values)):
        left = MARGIN_LEFT + slot * index + (slot - bar_width) / 2
        height = _bar_height(value)
        top = MARGIN_TOP + PLOT_HEIGHT - height
        color = _color(group_names.index(groups[index]) if groups is not None else 0)
        canvas.add(
            f'<rect class="bar" x="{_c(left)}" y="{_c(top)}" '
            f'width="{_c(bar_width)}" height="{_c(height)}" fill="{color}" '
            f'data-label="{_text(label)}" data-value="{format_number(value)}"/>'
        )
        canvas.x_tick(left + bar_width / 2, label)
    if group_names:
        canvas.legend(group_names)
    return canvas.render()
