# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Command line unit tests."""

import json
import math
import pathlib

import pytest

import cli
import state


@pytest.fixture(autouse=True, name="single_worker")
def single_worker_fixture(monkeypatch: pytest.MonkeyPatch):
    """Run ensembles in process unless a test asks otherwise."""
    monkeypatch.setenv(state.THREADS_ENV, "1")


def _run(capsys: pytest.CaptureFixture, *argv: str):
    """Run the command line and capture its output.

    Returns:
        The exit code, stdout and stderr.
    """
    code = cli.main([str(arg) for arg in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_parse_json(capsys, networks_dir: pathlib.Path):
    """
    arrange: the dimer exchange network file.
    act: run ``drnet parse``.
    assert: the structural summary is printed and the exit code is 0.
    """
    code, out, _ = _run(capsys, "parse", networks_dir / "dimer_exchange.crn")

    document = json.loads(out)
    assert code == 0
    assert document["species"] == ["X", "Y"]
    assert document["linkageClasses"] == [["2X", "2Y"], ["0", "X", "Y"]]
    assert document["weaklyReversible"] is True
    assert document["order"] == 2
    assert document["initial"] == {"X": 1.0, "Y": 2.0}
    assert len(document["reactions"]) == 6


def test_parse_csv_prints_network_text(capsys, networks_dir: pathlib.Path):
    """
    arrange: the dimer exchange network file.
    act: run ``drnet parse --format csv``.
    assert: the canonical network text is printed.
    """
    code, out, _ = _run(capsys, "parse", networks_dir / "dimer_exchange.crn", "--format", "csv")

    assert code == 0
    assert out.splitlines()[0] == "species X, Y"
    assert "2X -> 2Y : 4.0" in out


def test_parse_error_exit_code(capsys, tmp_path: pathlib.Path):
    """
    arrange: a network file with an unknown species on line 2.
    act: run ``drnet parse``.
    assert: exit code 1 with a line-numbered diagnostic on stderr.
    """
    path = tmp_path / "bad.crn"
    path.write_text("species X\nX -> Q : 1\ninit X = 1\n", encoding="utf-8")

    code, out, err = _run(capsys, "parse", path)

    assert code == 1
    assert not out
    assert f"{path}:2: error: unknown species 'Q'" in err


def test_missing_file_exit_code(capsys, tmp_path: pathlib.Path):
    """
    arrange: a path that does not exist.
    act: run ``drnet analyze``.
    assert: exit code 1.
    """
    code, _, err = _run(capsys, "analyze", tmp_path / "absent.crn")

    assert code == 1
    assert "drnet: cannot read" in err


def test_analyze_holds(capsys, networks_dir: pathlib.Path):
    """
    arrange: the dimer exchange network from (1, 2).
    act: run ``drnet analyze``.
    assert: exit 0, verdict holds and mean functions that match the closed form at T = 2.
    """
    code, out, _ = _run(capsys, "analyze", networks_dir / "dimer_exchange.crn")

    document = json.loads(out)
    assert code == 0
    assert document["verdict"] == "holds"
    assert document["linearSystem"]["r"] == [1.0, 2.0]
    samples = document["meanFunctions"]["samples"]
    assert len(samples) == cli.MEAN_SAMPLES
    assert samples[-1]["t"] == 2.0
    assert samples[-1]["c"] == pytest.approx([2 - math.exp(-1), 4 - 2 * math.exp(-1)])


def test_analyze_fails(capsys, networks_dir: pathlib.Path):
    """
    arrange: X <-> 2Y with in- and outflow from (2, 1).
    act: run ``drnet analyze``.
    assert: exit 2, verdict fails on 2Y and no mean functions.
    """
    code, out, _ = _run(capsys, "analyze", networks_dir / "isomer_dimer.crn")

    document = json.loads(out)
    assert code == 2
    assert document["verdict"] == "fails"
    assert document["failingComplexes"] == ["2Y"]
    assert "meanFunctions" not in document


def test_analyze_constant_solution(capsys, networks_dir: pathlib.Path):
    """
    arrange: the dimer exchange network at its equilibrium.
    act: run ``drnet analyze``.
    assert: exit 0 with verdict constantSolution.
    """
    code, out, _ = _run(capsys, "analyze", networks_dir / "dimer_exchange_equilibrium.crn")

    assert code == 0
    assert json.loads(out)["verdict"] == "constantSolution"


def test_analyze_csv_to_file(capsys, networks_dir: pathlib.Path, tmp_path: pathlib.Path):
    """
    arrange: the dimer exchange network and an output path.
    act: run ``drnet analyze --format csv --out``.
    assert: the solution grid is written with a ``t,X,Y`` header.
    """
    out_path = tmp_path / "solution.csv"

    code, out, _ = _run(
        capsys,
        "analyze",
        networks_dir / "dimer_exchange.crn",
        "--format",
        "csv",
        "--grid-size",
        "11",
        "--out",
        out_path,
    )

    lines = out_path.read_text(encoding="utf-8").splitlines()
    assert code == 0
    assert not out
    assert lines[0] == "t,X,Y"
    assert len(lines) == 12


def test_analyze_csv_singular_reduction(capsys, networks_dir: pathlib.Path):
    """
    arrange: the burst variant of the decaying dimerization, whose reduction is singular.
    act: run ``drnet analyze --format csv``.
    assert: exit 2 and the RK4 trajectory of the full equation on the residual grid.
    """
    code, out, _ = _run(
        capsys,
        "analyze",
        networks_dir / "decaying_dimerization_burst.crn",
        "--format",
        "csv",
        "--horizon",
        "2",
        "--grid-size",
        "5",
    )

    lines = out.splitlines()
    assert code == 2
    assert lines[0] == "t,X,Y,Z"
    assert len(lines) == 6
    assert [float(value) for value in lines[1].split(",")] == [0.0, 900.0, 90.0, 100.0]


def test_simulate_writes_outputs(capsys, networks_dir: pathlib.Path, tmp_path: pathlib.Path):
    """
    arrange: the birth-death network and an output prefix.
    act: run ``drnet simulate --emit-gnuplot``.
    assert: summary JSON, histogram CSV and a gnuplot script with the Poisson overlay.
    """
    prefix = tmp_path / "run"

    code, _, _ = _run(
        capsys,
        "simulate",
        networks_dir / "birth_death.crn",
        "-N",
        "50",
        "-T",
        "0.5",
        "--out",
        prefix,
        "--emit-gnuplot",
    )

    summary = json.loads((tmp_path / "run.json").read_text(encoding="utf-8"))
    histogram = (tmp_path / "run_histogram.csv").read_text(encoding="utf-8").splitlines()
    script = (tmp_path / "run.gp").read_text(encoding="utf-8")
    assert code == 0
    assert summary["N"] == 50
    assert summary["seed"] == 42
    assert histogram[0] == "species,count,frequency"
    assert sum(int(line.split(",")[2]) for line in histogram[1:]) == 50
    assert "set output 'run_X.png'" in script
    assert "poisson(floor(x), 1.0)" in script


def test_simulate_is_seed_deterministic(capsys, networks_dir: pathlib.Path):
    """
    arrange: the dimer exchange network.
    act: run ``drnet simulate`` twice with the same seed.
    assert: the outputs are identical.
    """
    argv = ("simulate", networks_dir / "dimer_exchange.crn", "-N", "30", "--seed", "7")

    _, first, _ = _run(capsys, *argv)
    _, second, _ = _run(capsys, *argv)

    assert first == second
    assert json.loads(first)["N"] == 30


def test_simulate_event_overflow(capsys, networks_dir: pathlib.Path):
    """
    arrange: the birth-death network and an event cap of one.
    act: run ``drnet simulate``.
    assert: exit code 3.
    """
    code, _, err = _run(
        capsys,
        "simulate",
        networks_dir / "birth_death.crn",
        "-N",
        "3",
        "-T",
        "50",
        "--max-events",
        "1",
    )

    assert code == 3
    assert "replicate 0" in err


def test_compare_passes_for_stationary_law(capsys, networks_dir: pathlib.Path):
    """
    arrange: the birth-death network at its stationary Poisson law.
    act: run ``drnet compare``.
    assert: exit 0 and every species passes.
    """
    code, out, _ = _run(capsys, "compare", networks_dir / "birth_death.crn", "-N", "2000")

    document = json.loads(out)
    assert code == 0
    assert document["passed"] is True
    assert document["species"][0]["predictedMean"] == 1.0


def test_compare_fails_without_dr(
    capsys, caplog: pytest.LogCaptureFixture, networks_dir: pathlib.Path
):
    """
    arrange: a network where DR fails.
    act: run ``drnet compare``.
    assert: exit 2, the document is not passed and dispersion is reported.
    """
    code, out, _ = _run(capsys, "compare", networks_dir / "isomer_dimer.crn", "-N", "200")

    document = json.loads(out)
    assert code == 2
    assert document["verdict"] == "fails"
    assert document["passed"] is False
    assert "variance/mean" in caplog.text


def test_oracle_matches_for_stationary_law(capsys, networks_dir: pathlib.Path):
    """
    arrange: the birth-death network at its stationary Poisson law.
    act: run ``drnet oracle`` on the box 0..30.
    assert: exit 0 and the master equation stays on the product-Poisson law.
    """
    code, out, _ = _run(
        capsys,
        "oracle",
        networks_dir / "birth_death.crn",
        "--box",
        "30",
        "-T",
        "1",
        "--dt",
        "0.01",
    )

    document = json.loads(out)
    assert code == 0
    assert document["box"] == [30]
    assert document["supNorm"] < 1e-8
    assert document["leaked"] < 1e-12


def test_oracle_rejects_wrong_box(capsys, networks_dir: pathlib.Path):
    """
    arrange: a two-species network and a one-entry box.
    act: run ``drnet oracle``.
    assert: exit code 1.
    """
    code, _, err = _run(capsys, "oracle", networks_dir / "dimer_exchange.crn", "--box", "30")

    assert code == 1
    assert "--box needs 2 bounds" in err


def test_invalid_threads_environment(capsys, monkeypatch, networks_dir: pathlib.Path):
    """
    arrange: DRNET_THREADS set to a non-number.
    act: run ``drnet simulate`` without --workers.
    assert: exit code 1.
    """
    monkeypatch.setenv(state.THREADS_ENV, "many")

    code, _, err = _run(capsys, "simulate", networks_dir / "birth_death.crn", "-N", "5")

    assert code == 1
    assert state.THREADS_ENV in err
