#!/usr/bin/env python3

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Command line front end of drnet.

Exit codes: 0 success or DR holds, 1 input error, 2 DR fails or a comparison rejects the
product-Poisson law, 3 runtime overflow.
"""

import argparse
import logging
import math
import pathlib
import sys
import typing

import numpy as np

import determ
import dranalyzer
import netparse
import poissondist
import reports
import stochastic
from exceptions import DrnetError, NetworkParseError
from network import (
    InitialCondition,
    ReactionNetwork,
    is_weakly_reversible,
    linkage_classes,
    network_order,
)
from state import FORMATS, RunConfig, RunConfigInvalidError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILS = 2
MEAN_SAMPLES = 11


def _int_list(text: str) -> typing.Tuple[int, ...]:
    """Parse a comma separated list of integers.

    Args:
        text: text such as ``40,40``.

    Returns:
        The integers.

    Raises:
        ArgumentTypeError: if an item is not an integer.
    """
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers like 40,40, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser.

    Returns:
        The parser with one subparser per subcommand.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input_path", metavar="FILE", help="network file, - for stdin")
    common.add_argument("--time", "-T", type=float, help="horizon T (default 2)")
    common.add_argument("--horizon", type=float, help="DR residual grid horizon (default 10)")
    common.add_argument("--grid-size", dest="grid_size", type=int, help="DR grid points")
    common.add_argument("--replicates", "-N", type=int, help="SSA replicates (default 1e5)")
    common.add_argument("--seed", type=int, help="master seed (default 42)")
    common.add_argument("--tol", type=float, help="relative DR tolerance (default 1e-9)")
    common.add_argument("--significance", type=float, help="chi-square level (default 1e-3)")
    common.add_argument("--dt", type=float, help="RK4 step (default 1e-3)")
    common.add_argument("--box", type=_int_list, help="oracle box bounds, e.g. 40,40")
    common.add_argument("--out", help="output path or prefix, stdout when omitted")
    common.add_argument("--format", dest="output_format", choices=FORMATS, help="json or csv")
    common.add_argument("--emit-gnuplot", dest="emit_gnuplot", action="store_true", default=None)
    common.add_argument("--workers", type=int, help="worker processes (default DRNET_THREADS)")
    common.add_argument("--max-events", dest="max_events", type=int, help="SSA event cap")

    parser = argparse.ArgumentParser(
        prog="drnet", description="DR complex balance analysis of reaction networks."
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    subparsers.add_parser("parse", parents=[common], help="parse and describe a network")
    subparsers.add_parser("analyze", parents=[common], help="decide the DR condition")
    subparsers.add_parser("simulate", parents=[common], help="run an SSA ensemble")
    subparsers.add_parser("compare", parents=[common], help="ensemble vs product-Poisson law")
    subparsers.add_parser("oracle", parents=[common], help="truncated CME vs closed form")
    return parser


def _emit(config: RunConfig, text: str, suffix: str = "") -> None:
    """Write output to ``--out`` (plus suffix) or stdout.

    Args:
        config: the run configuration.
        text: the output text.
        suffix: appended to the ``--out`` path.
    """
    if config.out is None:
        sys.stdout.write(text)
        return
    path = pathlib.Path(f"{config.out}{suffix}")
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)


def cmd_parse(config: RunConfig, net: ReactionNetwork, initial: InitialCondition) -> int:
    """Describe a parsed network.

    Args:
        config: the run configuration.
        net: the network.
        initial: its initial condition.

    Returns:
        The exit code.
    """
    if config.output_format == "csv":
        _emit(config, netparse.format_network(net, initial))
        return EXIT_OK
    document = {
        "species": list(net.species),
        "complexes": [
            {"complex": net.label(complex_), "order": complex_.order}
            for complex_ in net.complexes
        ],
        "reactions": [
            {
                "source": net.label(reaction.source),
                "product": net.label(reaction.product),
                "rate": reaction.rate,
            }
            for reaction in net.reactions
        ],
        "linkageClasses": [
            [net.label(net.complexes[index]) for index in members]
            for members in linkage_classes(net)
        ],
        "weaklyReversible": is_weakly_reversible(net),
        "order": network_order(net),
        "initial": dict(zip(initial.species, initial.values)),
    }
    _emit(config, reports.dump_json(document))
    return EXIT_OK


def _mean_functions(
    report: dranalyzer.DRReport, net: ReactionNetwork, horizon: float
) -> typing.Dict[str, typing.Any]:
    """Closed form mean functions of a DR instance with a few samples of c(t).

    Args:
        report: a report whose verdict is holds.
        net: the network.
        horizon: samples are taken on [0, horizon].

    Returns:
        The M, r and c0 of the closed form plus sampled means.
    """
    grid = np.linspace(0.0, horizon, MEAN_SAMPLES) if horizon > 0 else np.array([0.0])
    means = dranalyzer.predicted_means(report, net, grid)
    system = report.linear_system
    return {
        "M": system.matrix.tolist() if system is not None else None,
        "r": system.offset.tolist() if system is not None else None,
        "c0": report.initial.tolist(),
        "samples": [
            {"t": float(t), "c": state.tolist()} for t, state in zip(means.times, means.states)
        ],
    }


def cmd_analyze(config: RunConfig, net: ReactionNetwork, initial: InitialCondition) -> int:
    """Decide the DR condition and print the report.

    In CSV mode the DR solution is written, or the RK4 solution of the full equation when the
    reduction is singular.

    Args:
        config: the run configuration.
        net: the network.
        initial: its initial condition.

    Returns:
        0 for holds and constantSolution, 2 for fails.
    """
    report = dranalyzer.verify_dr(
        net, initial.as_array(), config.horizon, config.grid_size, config.tol, config.dt
    )
    if config.output_format == "csv":
        solution = report.solution
        if solution is None:
            logger.info("No linear solution, exporting the RK4 trajectory of the full equation")
            grid = np.linspace(0.0, config.horizon, config.grid_size)
            solution = determ.integrate_ode(
                net, initial.as_array(), config.horizon, config.dt, grid=grid
            )
        _emit(config, solution.to_csv())
    else:
        document = report.to_dict()
        if report.verdict == dranalyzer.VERDICT_HOLDS:
            document["meanFunctions"] = _mean_functions(report, net, config.time)
        _emit(config, reports.dump_json(document))
    return EXIT_OK if report.is_dr else EXIT_FAILS


def _ensemble(
    config: RunConfig, net: ReactionNetwork, initial: InitialCondition
) -> stochastic.EnsembleSummary:
    """Run the SSA ensemble of a configuration.

    Args:
        config: the run configuration.
        net: the network.
        initial: its initial condition.

    Returns:
        The ensemble summary.
    """
    return stochastic.run_ensemble(
        net,
        initial.as_array(),
        config.time,
        config.replicates,
        config.seed,
        workers=config.workers,
        max_events=config.max_events,
    )


def _means_at(report: dranalyzer.DRReport, net: ReactionNetwork, time: float) -> np.ndarray:
    """Predicted Poisson means at one time.

    Args:
        report: the DR report.
        net: the network.
        time: the time.

    Returns:
        The mean vector at ``time``.
    """
    if time <= 0:
        return report.initial
    return dranalyzer.predicted_means(report, net, np.array([0.0, time])).final


def cmd_simulate(config: RunConfig, net: ReactionNetwork, initial: InitialCondition) -> int:
    """Run an ensemble and write its summary and histograms.

    Args:
        config: the run configuration.
        net: the network.
        initial: its initial condition.

    Returns:
        The exit code.
    """
    summary = _ensemble(config, net, initial)
    histogram = reports.histogram_csv(summary.histogram_rows())
    if config.out is None:
        if config.output_format == "csv":
            sys.stdout.write(histogram)
        else:
            sys.stdout.write(reports.dump_json(summary.to_dict()))
        return EXIT_OK
    reports.write_json(f"{config.out}.json", summary.to_dict())
    _emit(config, histogram, "_histogram.csv")
    if config.emit_gnuplot:
        report = dranalyzer.verify_dr(
            net, initial.as_array(), config.horizon, config.grid_size, config.tol, config.dt
        )
        means = None
        if report.is_dr:
            means = _means_at(report, net, config.time)
        script = reports.gnuplot_script(
            summary.species,
            summary.replicates,
            pathlib.Path(f"{config.out}_histogram.csv").name,
            None if means is None else means.tolist(),
            image_prefix=pathlib.Path(config.out).name,
        )
        _emit(config, script, ".gp")
    return EXIT_OK


def cmd_compare(config: RunConfig, net: ReactionNetwork, initial: InitialCondition) -> int:
    """Compare the ensemble marginals with the predicted Poisson laws.

    Args:
        config: the run configuration.
        net: the network.
        initial: its initial condition.

    Returns:
        0 when DR holds and every species passes, 2 otherwise.
    """
    report = dranalyzer.verify_dr(
        net, initial.as_array(), config.horizon, config.grid_size, config.tol, config.dt
    )
    summary = _ensemble(config, net, initial)
    means = _means_at(report, net, config.time)
    rows = poissondist.compare_ensemble(summary, means, config.significance)
    passed = report.is_dr and all(row["passed"] for row in rows)
    if not report.is_dr:
        for row in rows:
            logger.warning(
                "%s: variance/mean %.4g (mean %.6g, variance %.6g)",
                row["name"],
                row["dispersion"],
                row["empiricalMean"],
                row["empiricalVariance"],
            )
    document: reports.ComparisonDocument = {
        "verdict": report.verdict,
        "passed": passed,
        "significance": config.significance,
        "species": rows,
    }
    _emit(config, reports.dump_json(document))
    return EXIT_OK if passed else EXIT_FAILS


def _default_box(initial: np.ndarray, means: np.ndarray) -> typing.Tuple[int, ...]:
    """A lattice box covering the initial and predicted laws.

    Args:
        initial: initial Poisson means.
        means: predicted means at the horizon.

    Returns:
        Per-species bounds ``mean + 10 sqrt(mean) + 10`` of the larger mean.
    """
    largest = np.maximum(initial, means)
    return tuple(int(math.ceil(mean + 10 * math.sqrt(mean) + 10)) for mean in largest)


def cmd_oracle(config: RunConfig, net: ReactionNetwork, initial: InitialCondition) -> int:
    """Compare the truncated master equation with the product-Poisson law.

    When DR fails the law is built from the marginal means of the master equation
    solution itself, the closest product-Poisson candidate.

    Args:
        config: the run configuration.
        net: the network.
        initial: its initial condition.

    Returns:
        0 when DR holds, 2 otherwise.
    """
    c0 = initial.as_array()
    report = dranalyzer.verify_dr(
        net, c0, config.horizon, config.grid_size, config.tol, config.dt
    )
    predicted = _means_at(report, net, config.time)
    box = config.box or _default_box(c0, predicted)
    if len(box) != net.dimension:
        raise RunConfigInvalidError(f"--box needs {net.dimension} bounds, got {len(box)}.")
    truncated = stochastic.truncated_cme(net, box, config.time, config.dt, means=c0)
    means = predicted if report.is_dr else truncated.means()
    distance = poissondist.pmf_sup_distance(truncated, poissondist.ProductPoissonLaw.at(means))
    document: reports.OracleDocument = {
        "verdict": report.verdict,
        "box": list(box),
        "T": config.time,
        "supNorm": distance.sup_norm,
        "tv": distance.tv,
        "leaked": truncated.leaked,
        "predictedMeans": [float(mean) for mean in means],
    }
    _emit(config, reports.dump_json(document))
    return EXIT_OK if report.is_dr else EXIT_FAILS


COMMANDS = {
    "parse": cmd_parse,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
}


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    """Run one drnet subcommand.

    Args:
        argv: command line arguments without the program name.

    Returns:
        The process exit code.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.from_args(args)
        net, initial, diagnostics = netparse.load_network(config.input_path)
        for diagnostic in diagnostics:
            print(f"{config.input_path}:{diagnostic}", file=sys.stderr)
        return COMMANDS[config.subcommand](config, net, initial)
    except NetworkParseError as exc:
        print(f"drnet: {exc.msg}", file=sys.stderr)
        for diagnostic in exc.diagnostics:
            print(f"{args.input_path}:{diagnostic}", file=sys.stderr)
        return exc.exit_code
    except DrnetError as exc:
        print(f"drnet: {exc.msg}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: nocover
    sys.exit(main())
