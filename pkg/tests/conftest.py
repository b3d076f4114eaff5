import os

import pandas as pd
import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run the acceptance-scale training tests",
    )
    parser.addoption(
        "--acceptance-out",
        default=os.path.join(os.path.dirname(__file__), "acceptance_values.csv"),
        help="csv the acceptance-scale tests write their measured values to",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains predictors at acceptance scale")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def record(request):
    """Collects ``(criterion, quantity, value, bound)`` rows, written at session end."""
    rows = []

    def add(criterion, quantity, value, bound):
        rows.append([criterion, quantity, float(value), bound])

    yield add

    if rows:
        table = pd.DataFrame(rows, columns=["criterion", "quantity", "value", "bound"])
        table.to_csv(request.config.getoption("--acceptance-out"), index=False, float_format="%.6g")
