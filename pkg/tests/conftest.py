"""Shared fixtures plus a one-line-per-criterion acceptance summary."""

import re

import pytest

from pose3d import datagen

_ACCEPT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


@pytest.fixture(scope="session")
def skeleton():
    return datagen.default_skeleton()


@pytest.fixture(scope="session")
def camera():
    return datagen.default_camera()


@pytest.fixture(scope="session")
def tiny_bench():
    # 3 train / 1 test noisy sequences, 40 frames: enough for smoke training
    return datagen.make_benchmark(num_train=3, num_test=1, frames=40, seed=7)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _ACCEPT.search(getattr(rep, "nodeid", "") or "")
            if m is None:
                continue
            if outcome == "passed" and getattr(rep, "when", "call") != "call":
                continue
            rows.append((int(m.group(1)), m.group(2).replace("_", " "), verdict))
    if not rows:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance summary")
    seen = set()
    # FAIL first so a mixed call/teardown outcome reports as FAIL
    for num, label, verdict in sorted(rows, key=lambda r: (r[0], r[2] != "FAIL")):
        if num in seen:
            continue
        seen.add(num)
        terminalreporter.write_line(f"  criterion {num:02d} ({label}): {verdict}")
