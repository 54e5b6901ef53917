import os
from pathlib import Path

import pytest

from mpst_workbench.workspace import load_workspace

WORKSPACES = Path(__file__).resolve().parent.parent / "workspaces"


def pytest_addoption(parser):
    parser.addoption("--seed", type=int, default=int(os.getenv("MPST_SEED", "0")), help="seed for generated cases")


@pytest.fixture
def seed(request) -> int:
    return request.config.getoption("--seed")


@pytest.fixture(scope="session")
def workspace():
    cache = {}

    def load(name: str):
        if name not in cache:
            cache[name] = load_workspace(WORKSPACES / f"{name}.mpst")
        return cache[name]

    return load
