"""Date stamps for run directory names."""
from __future__ import annotations

from datetime import date, datetime, timezone
from typing import Optional

STAMP_FORMAT = "%Y%m%d"


def run_stamp(day: Optional[date] = None) -> str:
    """YYYYMMDD stamp for ``day``, today in UTC when omitted."""
    if day is None:
        day = datetime.now(timezone.utc).date()
    return day.strftime(STAMP_FORMAT)
