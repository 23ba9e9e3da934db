"""Machine-readable reports (one name=value pair per line, floats at 9
significant digits) and the matplotlib figures written next to them.

Matplotlib is imported lazily with the Agg backend so headless runs and
figure-free callers never touch a display.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from .errors import InvalidInputError


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def report_text(pairs: Sequence[tuple[str, object]]) -> str:
    lines = []
    for name, value in pairs:
        if "=" in name or "\n" in name:
            raise InvalidInputError(f"bad report key {name!r}")
        lines.append(f"{name}={format_value(value)}")
    return "\n".join(lines) + "\n"


def write_report(path: str | Path, pairs: Sequence[tuple[str, object]]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report_text(pairs), encoding="utf-8")
    return out


def read_report(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise InvalidInputError(f"bad report line {line!r}")
        values[name] = value
    return values


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_series(
    path: str | Path,
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str,
) -> Path:
    """One line per named series over a shared x axis."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, ys in series.items():
        ax.plot(list(x), list(ys), marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out


def plot_histogram(
    path: str | Path,
    values: Sequence[float],
    xlabel: str,
    title: str,
    bins: int = 30,
) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(list(values), bins=bins, color="#4878a8", edgecolor="white")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out
