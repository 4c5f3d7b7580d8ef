"""Tests for result emission and console summaries."""

import csv
import io
import json
import os
from unittest.mock import patch

import pytest

from src.core import RESULT_COLUMNS, ResultRow
from src.errors import EmitError
from src.render import ResultWriter, SummaryRenderer, result_filename


def make_row(**changes):
    values = {
        "experiment_id": "exp",
        "agent": "mnt",
        "allocator": "ff",
        "sweep_axis": "none",
        "sweep_value": None,
        "seed": 0,
        "episode": 1,
        "events": 1000,
        "avg_delay_ms": 12.3456789,
        "avg_replicas": 4.5,
        "satisfaction_rate": 0.9,
        "mean_reward": 0.25,
        "p99_delay_ms": 30.0,
    }
    values.update(changes)
    return ResultRow(**values)


class TestResultWriter:
    """Test CSV and JSON result files."""

    def test_csv_header_and_precision(self):
        """Test the fixed column order and six-decimal floats."""
        text = ResultWriter().render([make_row()], "csv")
        header, record = list(csv.reader(io.StringIO(text)))
        assert tuple(header) == RESULT_COLUMNS
        assert len(record) == 13
        assert record[RESULT_COLUMNS.index("avg_delay_ms")] == "12.345679"
        assert record[RESULT_COLUMNS.index("sweep_value")] == ""
        assert record[RESULT_COLUMNS.index("episode")] == "1"

    def test_csv_empty(self):
        """Test no rows still yields the header line."""
        assert ResultWriter().render([], "csv") == ",".join(RESULT_COLUMNS) + "\n"

    def test_rows_are_sorted(self):
        """Test output order does not depend on input order."""
        rows = [make_row(seed=1, episode=2), make_row(agent="drl", allocator=""), make_row(seed=1)]
        writer = ResultWriter()
        assert writer.render(rows, "csv") == writer.render(list(reversed(rows)), "csv")
        records = json.loads(writer.render(rows, "json"))
        assert [(r["agent"], r["seed"], r["episode"]) for r in records] == [
            ("drl", 0, 1),
            ("mnt", 1, 1),
            ("mnt", 1, 2),
        ]

    def test_json_values(self):
        """Test JSON rounding and nulls for averaged rows."""
        text = ResultWriter().render([make_row(seed=None, sweep_axis="lambda", sweep_value=2.5)], "json")
        [record] = json.loads(text)
        assert list(record) == list(RESULT_COLUMNS)
        assert record["seed"] is None
        assert record["sweep_value"] == 2.5
        assert record["avg_delay_ms"] == 12.345679

    def test_unknown_format(self):
        """Test an unsupported format is rejected."""
        with pytest.raises(ValueError):
            ResultWriter().render([make_row()], "xml")

    def test_emit_creates_directories(self, tmp_path):
        """Test parent directories are created on write."""
        path = ResultWriter().emit([make_row()], "csv", tmp_path / "a" / "b" / "out.csv")
        assert path.read_text().startswith("experiment_id,")

    def test_emit_error(self, tmp_path):
        """Test write failures surface as EmitError."""
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(EmitError, match="cannot write"):
            ResultWriter().emit([make_row()], "csv", blocker / "out.csv")

    def test_result_filename(self):
        """Test file names combine id, command and format."""
        assert result_filename("20260101T000000", "sweep-lambda", "json") == (
            "20260101T000000-sweep-lambda.json"
        )


class TestSummaryRenderer:
    """Test console summaries."""

    def test_no_color_env(self):
        """Test the renderer respects NO_COLOR."""
        with patch.dict(os.environ, {"NO_COLOR": "1"}):
            assert SummaryRenderer(use_colors=True).use_colors is False

    def test_colorize(self):
        """Test ANSI codes are applied only when enabled."""
        with patch.dict(os.environ, {}, clear=True):
            colored = SummaryRenderer(use_colors=True)._colorize("x", "red")
        assert colored == "\033[31mx\033[0m"
        assert SummaryRenderer(use_colors=False)._colorize("x", "red") == "x"

    @pytest.mark.parametrize("rate,color", [(0.95, "green"), (0.8, "green"), (0.6, "yellow"), (0.1, "red")])
    def test_satisfaction_color(self, rate, color):
        """Test the satisfaction thresholds."""
        assert SummaryRenderer(use_colors=False)._satisfaction_color(rate) == color

    def test_one_line_per_run(self):
        """Test only the last episode of each run is summarized."""
        rows = [make_row(episode=1), make_row(episode=2, satisfaction_rate=0.5), make_row(seed=1)]
        lines = SummaryRenderer(use_colors=False).render(rows)
        assert len(lines) == 2
        assert lines[0].startswith("mnt:ff [seed 0, ep 2]")
        assert "satisfied 50.0%" in lines[0]

    def test_sweep_label(self):
        """Test averaged sweep rows name the sweep point."""
        row = make_row(agent="rl", allocator="", seed=None, sweep_axis="deadline", sweep_value=1.25)
        [line] = SummaryRenderer(use_colors=False).render([row])
        assert line.startswith("rl deadline=1.25 [mean, ep 1]")
