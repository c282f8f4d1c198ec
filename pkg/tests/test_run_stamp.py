"""Tests for utils/run_stamp.py module."""
from __future__ import annotations

from datetime import date

from freezegun import freeze_time

from reports.writers import default_run_dir
from utils.run_stamp import run_stamp


class TestRunStamp:
    """Tests for run_stamp function."""

    @freeze_time("2025-10-27 12:00:00")
    def test_today(self):
        """Test the stamp for the frozen clock."""
        assert run_stamp() == "20251027"

    @freeze_time("2024-02-29 23:30:00")
    def test_leap_day(self):
        """Test run_stamp on leap day."""
        assert run_stamp() == "20240229"

    def test_explicit_day_zero_padded(self):
        """Test that month and day are zero padded."""
        assert run_stamp(date(2025, 1, 2)) == "20250102"

    @freeze_time("2026-03-04 08:00:00")
    def test_default_run_dir_uses_today(self):
        """Test that run directories pick up the current stamp."""
        assert default_run_dir("mc", {"u": 3.0}).name.startswith("mc-20260304-")
