import os

import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FDX_FULL_SCALE") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; set FDX_FULL_SCALE=1 to enable")
    for item in items:
        if "full_scale" in item.keywords:
            item.add_marker(skip)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
