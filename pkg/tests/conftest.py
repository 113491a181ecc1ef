# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Fixtures for drnet tests."""

import pytest


def pytest_addoption(parser: pytest.Parser):
    """Parse additional pytest options.

    Args:
        parser: pytest command line parser.
    """
    # Ensemble size of the acceptance runs, lower it for a quick local pass
    parser.addoption("--replicates", action="store", type=int, default=100_000)
    # Worker processes used by the acceptance ensembles
    parser.addoption("--ensemble-workers", action="store", type=int, default=4)
