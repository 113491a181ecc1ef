# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Module for commonly used internal types in drnet."""

from typing import Any, List, NamedTuple, Optional, Tuple


class NetworkSource(NamedTuple):
    """Text of a reaction network file.

    Attrs:
        text: UTF-8 decoded content of the file.
        origin: file path the text was read from, or "<stdin>".
    """

    text: str
    origin: str = "<stdin>"


class ParseDiagnostic(NamedTuple):
    """A problem found while parsing or validating a network.

    Attrs:
        severity: "error" or "warning".
        line: 1-based line number in the source text.
        message: human readable explanation.
    """

    severity: str
    line: int
    message: str

    def __str__(self) -> str:
        """Render the diagnostic in the usual ``line: severity: message`` shape.

        Returns:
            The rendered diagnostic.
        """
        return f"{self.line}: {self.severity}: {self.message}"


class ParseResult(NamedTuple):
    """Result of parsing a network source.

    Attrs:
        success: True if a network was produced, else False.
        network: the parsed network, None on failure.
        initial: the parsed initial condition, None on failure.
        diagnostics: every error and warning found, in source order.
    """

    success: bool
    network: Any
    initial: Any
    diagnostics: List[ParseDiagnostic]


class PathWitness(NamedTuple):
    """Walk found for a row of the transposed reduction matrix that is not SDD.

    Attrs:
        row: index of the row (higher complex within its linkage class).
        walk: row indices from ``row`` to a strictly dominant row, None if unreachable.
    """

    row: int
    walk: Optional[Tuple[int, ...]]


class PathConditionResult(NamedTuple):
    """Outcome of the walk-to-strictly-dominant-row test.

    Attrs:
        nonsingular: True if every row that is not SDD reaches an SDD row.
        sdd_rows: rows of the transposed matrix that are strictly diagonally dominant.
        witnesses: one witness per row that is not SDD.
    """

    nonsingular: bool
    sdd_rows: Tuple[int, ...]
    witnesses: Tuple[PathWitness, ...]


class ComplexBalanceResult(NamedTuple):
    """Outcome of the pointwise complex balance test.

    Attrs:
        balanced: True if every complex balances within tolerance.
        residuals: outflow minus inflow per complex, in the network's complex order.
        scale: largest complex flux at the tested point, used to make the tolerance relative.
    """

    balanced: bool
    residuals: Any
    scale: float
