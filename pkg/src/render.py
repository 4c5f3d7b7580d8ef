"""Result emission (CSV/JSON) and console summaries for edge-scaler."""

from __future__ import annotations

import csv
import io
import json
import os
from collections.abc import Iterable
from pathlib import Path

from .core import RESULT_COLUMNS, ResultRow
from .errors import EmitError

FLOAT_COLUMNS = frozenset(
    {"sweep_value", "avg_delay_ms", "avg_replicas", "satisfaction_rate", "mean_reward", "p99_delay_ms"}
)


def _cell(column: str, value: object) -> str:
    if value is None:
        return ""
    if column in FLOAT_COLUMNS:
        return f"{float(value):.6f}"  # type: ignore[arg-type]
    return str(value)


def _json_value(column: str, value: object) -> object:
    if value is None or column not in FLOAT_COLUMNS:
        return value
    return round(float(value), 6)  # type: ignore[arg-type]


class ResultWriter:
    """Serializes result rows, sorted, with a fixed column order."""

    def render(self, rows: Iterable[ResultRow], fmt: str) -> str:
        ordered = sorted(rows, key=ResultRow.sort_key)
        if fmt == "csv":
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(RESULT_COLUMNS)
            for row in ordered:
                record = row.as_dict()
                writer.writerow([_cell(column, record[column]) for column in RESULT_COLUMNS])
            return buffer.getvalue()
        if fmt == "json":
            records = [
                {column: _json_value(column, row.as_dict()[column]) for column in RESULT_COLUMNS}
                for row in ordered
            ]
            return json.dumps(records, indent=2) + "\n"
        raise ValueError(f"unknown output format {fmt!r}")

    def emit(self, rows: Iterable[ResultRow], fmt: str, path: str | Path) -> Path:
        target = Path(path)
        text = self.render(rows, fmt)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise EmitError(str(target), exc.strerror or str(exc)) from exc
        return target


def result_filename(experiment_id: str, command: str, fmt: str) -> str:
    return f"{experiment_id}-{command}.{fmt}"


class SummaryRenderer:
    """One console line per agent and sweep point."""

    COLORS = {
        "reset": "\033[0m",
        "green": "\033[32m",
        "yellow": "\033[33m",
        "red": "\033[31m",
        "bright_cyan": "\033[96m",
        "dim": "\033[2m",
    }

    def __init__(self, use_colors: bool = True):
        self.use_colors = use_colors and not os.getenv("NO_COLOR")

    def _colorize(self, text: str, color: str) -> str:
        """Apply ANSI color to text if colors are enabled."""
        if not self.use_colors or color not in self.COLORS:
            return text
        return f"{self.COLORS[color]}{text}{self.COLORS['reset']}"

    def _satisfaction_color(self, rate: float) -> str:
        if rate >= 0.8:
            return "green"
        elif rate >= 0.5:
            return "yellow"
        return "red"

    def _label(self, row: ResultRow) -> str:
        label = f"{row.agent}:{row.allocator}" if row.allocator else row.agent
        if row.sweep_value is not None:
            label += f" {row.sweep_axis}={row.sweep_value:g}"
        return label

    def render(self, rows: Iterable[ResultRow]) -> list[str]:
        """Summaries for the last episode of every (agent, allocator, sweep point, seed)."""
        latest: dict[tuple, ResultRow] = {}
        for row in sorted(rows, key=ResultRow.sort_key):
            latest[(row.agent, row.allocator, row.sweep_value, row.seed)] = row

        lines = []
        for row in latest.values():
            seed = "mean" if row.seed is None else f"seed {row.seed}"
            satisfaction = self._colorize(
                f"{row.satisfaction_rate:.1%}", self._satisfaction_color(row.satisfaction_rate)
            )
            lines.append(
                f"{self._colorize(self._label(row), 'bright_cyan')} "
                f"{self._colorize(f'[{seed}, ep {row.episode}]', 'dim')} "
                f"delay {row.avg_delay_ms:.2f} ms │ replicas {row.avg_replicas:.2f} │ "
                f"satisfied {satisfaction}"
            )
        return lines
