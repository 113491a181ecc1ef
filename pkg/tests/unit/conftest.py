# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Fixtures for drnet unit tests."""

import pathlib
import typing

import numpy as np
import pytest

import netparse
from network import InitialCondition, ReactionNetwork
from types_ import NetworkSource

NETWORKS_DIR = pathlib.Path(__file__).resolve().parents[2] / "networks"

ParsedNetwork = typing.Tuple[ReactionNetwork, InitialCondition]


def _parse_text(text: str) -> ParsedNetwork:
    """Parse network text that is known to be valid.

    Args:
        text: network file text.

    Returns:
        The network and its initial condition.
    """
    result = netparse.parse_network(NetworkSource(text, "<test>"))
    assert result.success, [str(diagnostic) for diagnostic in result.diagnostics]
    return result.network, result.initial


def load_example(name: str) -> ParsedNetwork:
    """Load one of the bundled example networks.

    Args:
        name: file name without the ``.crn`` suffix.

    Returns:
        The network and its initial condition.
    """
    net, initial, _ = netparse.load_network(NETWORKS_DIR / f"{name}.crn")
    return net, initial


@pytest.fixture(scope="function", name="parse_text")
def parse_text_fixture() -> typing.Callable[[str], ParsedNetwork]:
    """Returns a function parsing network text that must be valid."""
    return _parse_text


@pytest.fixture(scope="function", name="networks_dir")
def networks_dir_fixture() -> pathlib.Path:
    """Directory holding the example network files."""
    return NETWORKS_DIR


@pytest.fixture(scope="function", name="dimer_exchange")
def dimer_exchange_fixture() -> ParsedNetwork:
    """Dimer exchange with in- and outflow, DR holds from (1, 2)."""
    return load_example("dimer_exchange")


@pytest.fixture(scope="function", name="isomer_dimer")
def isomer_dimer_fixture() -> ParsedNetwork:
    """X <-> 2Y with in- and outflow, only constant DR solutions."""
    return load_example("isomer_dimer")


@pytest.fixture(scope="function", name="decaying_dimerization")
def decaying_dimerization_fixture() -> ParsedNetwork:
    """Decaying dimerization, DR holds with explicit exponential means."""
    return load_example("decaying_dimerization")


@pytest.fixture(scope="function", name="decaying_dimerization_burst")
def decaying_dimerization_burst_fixture() -> ParsedNetwork:
    """Decaying dimerization with a burst reaction, DR fails."""
    return load_example("decaying_dimerization_burst")


@pytest.fixture(scope="function", name="cubic_chain")
def cubic_chain_fixture() -> ParsedNetwork:
    """Chain through the cubic complexes 2X+Y and X+2Y."""
    return load_example("cubic_chain")


@pytest.fixture(scope="function", name="dimer_cascade")
def dimer_cascade_fixture() -> ParsedNetwork:
    """Cascade Z -> 2X -> 2Y -> W with monomer decay."""
    return load_example("dimer_cascade")


@pytest.fixture(scope="function", name="birth_death")
def birth_death_fixture() -> ParsedNetwork:
    """Immigration and death of a single species."""
    return load_example("birth_death")


@pytest.fixture(scope="function", name="rng")
def rng_fixture() -> np.random.Generator:
    """A seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="function", name="merge")
def merge_fixture() -> ReactionNetwork:
    """S1 + S2 -> S3."""
    return load_example("merge")[0]
