# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Fixtures for the drnet acceptance tests."""

import pathlib

import pytest
from pytest import Config

import netparse

NETWORKS_DIR = pathlib.Path(__file__).resolve().parents[2] / "networks"


@pytest.fixture(scope="module", name="replicates")
def replicates_fixture(pytestconfig: Config) -> int:
    """Ensemble size of the acceptance runs."""
    replicates = pytestconfig.getoption("--replicates")
    assert replicates > 0, "--replicates should be a positive integer"
    return replicates


@pytest.fixture(scope="module", name="ensemble_workers")
def ensemble_workers_fixture(pytestconfig: Config) -> int:
    """Worker processes of the acceptance ensembles."""
    return pytestconfig.getoption("--ensemble-workers")


@pytest.fixture(scope="module", name="networks_dir")
def networks_dir_fixture() -> pathlib.Path:
    """Directory holding the example network files."""
    return NETWORKS_DIR


@pytest.fixture(scope="module", name="load")
def load_fixture():
    """Returns a function loading a bundled network by name."""

    def _load(name: str):
        """Load a bundled network.

        Returns:
            The network and its initial condition.
        """
        net, initial, _ = netparse.load_network(NETWORKS_DIR / f"{name}.crn")
        return net, initial

    return _load
