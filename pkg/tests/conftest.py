from __future__ import annotations

import time

SESSION = {"start": None}


def pytest_sessionstart(session):
    SESSION["start"] = time.perf_counter()
