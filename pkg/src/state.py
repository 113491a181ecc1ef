# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Run configuration of the drnet command line."""
import argparse
import logging
import os
import typing

# pylint: disable=no-name-in-module
from pydantic import BaseModel, Field, ValidationError, validator

from exceptions import InputError

logger = logging.getLogger(__name__)

THREADS_ENV = "DRNET_THREADS"
SUBCOMMANDS = ("parse", "analyze", "simulate", "compare", "oracle")
FORMATS = ("json", "csv")


class RunConfigInvalidError(InputError):
    """Exception raised when a run configuration is found to be invalid.

    Attributes:
        msg: Explanation of the error.
    """


def default_workers() -> int:
    """Number of simulation workers, from ``DRNET_THREADS`` or the CPU count.

    Returns:
        A positive worker count.

    Raises:
        RunConfigInvalidError: if ``DRNET_THREADS`` is not a positive integer.
    """
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return os.cpu_count() or 1
    try:
        workers = int(raw)
    except ValueError as exc:
        logger.error("Invalid %s value %r", THREADS_ENV, raw)
        raise RunConfigInvalidError(f"{THREADS_ENV} must be a positive integer.") from exc
    if workers < 1:
        raise RunConfigInvalidError(f"{THREADS_ENV} must be a positive integer.")
    return workers


class RunConfig(BaseModel):
    """Every knob of one drnet invocation.

    Attributes:
        subcommand: the subcommand to run.
        input_path: network file, ``-`` for stdin.
        time: horizon T of simulations, comparisons and oracle runs.
        horizon: horizon of the DR residual grid.
        dt: RK4 step.
        grid_size: number of points of the DR residual grid.
        replicates: number of SSA replicates N.
        seed: master seed.
        tol: relative DR tolerance.
        significance: chi-square significance level.
        box: per-species upper bounds of the oracle lattice, derived when omitted.
        out: output path or prefix, stdout when omitted.
        output_format: json or csv.
        emit_gnuplot: whether simulate writes a gnuplot script.
        workers: number of simulation worker processes.
        max_events: per-replicate cap on SSA events.
    """

    subcommand: str
    input_path: str
    time: float = Field(2.0, ge=0)
    horizon: float = Field(10.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    grid_size: int = Field(201, ge=2)
    replicates: int = Field(100_000, ge=1)
    seed: int = Field(42, ge=0)
    tol: float = Field(1e-9, gt=0)
    significance: float = Field(1e-3, gt=0, lt=1)
    box: typing.Optional[typing.Tuple[int, ...]] = None
    out: typing.Optional[str] = None
    output_format: str = "json"
    emit_gnuplot: bool = False
    workers: int = Field(1, ge=1)
    max_events: int = Field(10**8, ge=1)

    @validator("subcommand")
    @classmethod
    def _known_subcommand(cls, value: str) -> str:
        """Check the subcommand name.

        Args:
            value: the subcommand.

        Returns:
            The subcommand.

        Raises:
            ValueError: if the subcommand is unknown.
        """
        if value not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {value!r}")
        return value

    @validator("output_format")
    @classmethod
    def _known_format(cls, value: str) -> str:
        """Check the output format.

        Args:
            value: the format.

        Returns:
            The format.

        Raises:
            ValueError: if the format is neither json nor csv.
        """
        if value not in FORMATS:
            raise ValueError(f"format must be one of {', '.join(FORMATS)}")
        return value

    @validator("box")
    @classmethod
    def _positive_box(
        cls, value: typing.Optional[typing.Tuple[int, ...]]
    ) -> typing.Optional[typing.Tuple[int, ...]]:
        """Check that every box bound is at least one.

        Args:
            value: the box bounds.

        Returns:
            The box bounds.

        Raises:
            ValueError: if a bound is smaller than one.
        """
        if value is not None and (not value or min(value) < 1):
            raise ValueError("box bounds must be positive integers")
        return value

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        """Build the configuration from parsed command line arguments.

        Args:
            args: the argparse namespace.

        Returns:
            The validated configuration.

        Raises:
            RunConfigInvalidError: if a value is out of range.
        """
        values = {key: value for key, value in vars(args).items() if value is not None}
        values.pop("verbose", None)
        if "workers" not in values:
            values["workers"] = default_workers()
        try:
            return cls(**values)
        except ValidationError as exc:
            logger.error("Invalid run configuration, %s", exc)
            details = "; ".join(
                f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
                for error in exc.errors()
            )
            raise RunConfigInvalidError(f"Invalid run configuration: {details}.") from exc
