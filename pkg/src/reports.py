# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Machine readable and plot ready output documents of drnet."""

import json
import logging
import pathlib
import typing
from typing import Dict, List, Optional, Sequence, TypedDict

logger = logging.getLogger(__name__)


class ComplexResidualDocument(TypedDict):
    """Largest DR residual of one higher-order complex.

    Attrs:
        complex: the complex as written in a network file, e.g. "2X+Y".
        maxResidual: largest absolute flux imbalance over the grid.
    """

    complex: str
    maxResidual: float


class LinearSystemDocument(TypedDict):
    """The reduced linear system dc/dt = M c + r.

    Attrs:
        M: d x d matrix as nested lists, row major.
        r: offset vector.
    """

    M: List[List[float]]
    r: List[float]


class DRReportDocument(TypedDict, total=False):
    """Serialized DR report.

    Attrs:
        verdict: holds, fails or constantSolution.
        maxResidual: largest residual, null when none could be computed.
        perComplex: residual summary per higher-order complex.
        failingComplexes: complexes that violate or cannot satisfy the DR condition.
        linearSystem: the reduced system, null when the reduction failed.
        horizon: time horizon of the residual grid.
        tolerance: relative tolerance used for the verdict.
        notes: free form remarks.
        meanFunctions: closed form mean functions, present when the verdict is holds.
    """

    verdict: str
    maxResidual: Optional[float]
    perComplex: List[ComplexResidualDocument]
    failingComplexes: List[str]
    linearSystem: Optional[LinearSystemDocument]
    horizon: float
    tolerance: float
    notes: List[str]
    meanFunctions: Dict[str, typing.Any]


class SpeciesSummaryDocument(TypedDict):
    """Ensemble statistics of one species.

    Attrs:
        name: species name.
        mean: empirical mean at the horizon.
        variance: empirical variance (population, ddof 0).
        histogram: nonzero bins as [count, number of replicates].
    """

    name: str
    mean: float
    variance: float
    histogram: List[List[int]]


class EnsembleDocument(TypedDict):
    """Serialized ensemble summary.

    Attrs:
        N: number of replicates.
        T: horizon.
        seed: master seed.
        species: per-species statistics.
    """

    N: int
    T: float
    seed: int
    species: List[SpeciesSummaryDocument]


class ComparisonRowDocument(TypedDict):
    """Empirical marginal of one species against its predicted Poisson law.

    Attrs:
        name: species name.
        tv: total variation distance.
        chi2: pooled chi-square statistic.
        pValue: chi-square p-value.
        predictedMean: Poisson mean predicted by the deterministic solution.
        empiricalMean: ensemble mean.
        empiricalVariance: ensemble variance.
        dispersion: variance over mean of the ensemble.
        passed: True when the chi-square p-value exceeds the significance level.
    """

    name: str
    tv: float
    chi2: float
    pValue: float
    predictedMean: float
    empiricalMean: float
    empiricalVariance: float
    dispersion: float
    passed: bool


class ComparisonDocument(TypedDict):
    """Serialized compare run.

    Attrs:
        verdict: the DR verdict of the network.
        passed: True when the verdict allows a product-Poisson law and every species passed.
        significance: chi-square significance level.
        species: per-species comparison rows.
    """

    verdict: str
    passed: bool
    significance: float
    species: List[ComparisonRowDocument]


class OracleDocument(TypedDict):
    """Serialized truncated master equation comparison.

    Attrs:
        verdict: the DR verdict of the network.
        box: per-species upper bounds of the lattice.
        T: horizon.
        supNorm: largest pointwise difference between the two pmfs on the box.
        tv: total variation between the two pmfs on the box plus the mass outside it.
        leaked: probability mass that left the box.
        predictedMeans: Poisson means of the compared product law.
    """

    verdict: str
    box: List[int]
    T: float
    supNorm: float
    tv: float
    leaked: float
    predictedMeans: List[float]


def write_json(path: typing.Union[str, pathlib.Path], document: typing.Mapping) -> None:
    """Write a document as indented JSON with sorted keys.

    Args:
        path: destination file.
        document: JSON-ready mapping.
    """
    pathlib.Path(path).write_text(dump_json(document), encoding="utf-8")
    logger.info("Wrote %s", path)


def dump_json(document: typing.Mapping) -> str:
    """Render a document as indented JSON with sorted keys.

    Args:
        document: JSON-ready mapping.

    Returns:
        The JSON text, newline terminated.
    """
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def histogram_csv(rows: typing.Iterable[typing.Tuple[str, int, int]]) -> str:
    """Render histogram rows as ``species,count,frequency`` CSV.

    Args:
        rows: ``(species, count, frequency)`` triples.

    Returns:
        CSV text with a header line.
    """
    lines = ["species,count,frequency"]
    lines.extend(f"{species},{count},{frequency}" for species, count, frequency in rows)
    return "\n".join(lines) + "\n"


def gnuplot_script(
    species: Sequence[str],
    replicates: int,
    histogram_path: str,
    means: Optional[Sequence[float]] = None,
    image_prefix: str = "histogram",
) -> str:
    """Build a gnuplot script plotting each species histogram.

    When ``means`` is given the predicted Poisson pmf is drawn over the empirical one,
    evaluated in log space so that large means do not overflow.

    Args:
        species: species names.
        replicates: number of replicates, to turn tallies into probabilities.
        histogram_path: path of the CSV written by :func:`histogram_csv`.
        means: predicted Poisson means at the horizon, one per species.
        image_prefix: prefix of the PNG files produced.

    Returns:
        The script text.
    """
    lines = [
        "set datafile separator ','",
        "set terminal pngcairo size 800,600",
        "set style fill solid 0.5",
        "set boxwidth 0.9",
        "set samples 1000",
        "set ylabel 'probability'",
        "poisson(k, l) = exp(k * log(l) - l - lgamma(k + 1))",
    ]
    for index, name in enumerate(species):
        lines.append(f"set output '{image_prefix}_{name}.png'")
        lines.append(f"set xlabel 'copy number of {name}'")
        plot = (
            f"plot '{histogram_path}' every ::1 using 2:(strcol(1) eq '{name}' ? "
            f"$3 / {replicates}.0 : 1/0) with boxes title 'empirical'"
        )
        if means is not None:
            mean = means[index]
            plot += f", poisson(floor(x), {mean!r}) with steps title 'Poisson({mean:.6g})'"
        lines.append(plot)
    lines.append("unset output")
    return "\n".join(lines) + "\n"
