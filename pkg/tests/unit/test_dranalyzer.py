# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""DR complex balance analysis unit tests."""

import numpy as np
import pytest

import dranalyzer
import netparse
from exceptions import NonPositiveInitialError, NotBinaryError, NotOneSpeciesError
from network import Complex, Reaction, ReactionNetwork
from types_ import PathWitness


def test_higher_order_complexes(dimer_exchange):
    """
    arrange: the dimer exchange network.
    act: list its higher-order complexes.
    assert: 2X and 2Y.
    """
    net, _ = dimer_exchange

    labels = [net.label(complex_) for complex_ in dranalyzer.higher_order_complexes(net)]

    assert labels == ["2X", "2Y"]


def test_build_reduction_cases(dimer_exchange, decaying_dimerization):
    """
    arrange: a network with an all-higher and an all-low class, and one with a mixed class.
    act: build the per-class reductions.
    assert: the cases are classified and the mixed class matrix is A = [[kappa2]].
    """
    assert [r.case for r in dranalyzer.build_reduction(dimer_exchange[0])] == [
        dranalyzer.CASE_ALL_HIGHER,
        dranalyzer.CASE_ALL_LOW,
    ]

    mixed, low = dranalyzer.build_reduction(decaying_dimerization[0])

    assert mixed.case == dranalyzer.CASE_MIXED
    assert low.case == dranalyzer.CASE_ALL_LOW
    np.testing.assert_allclose(mixed.matrix_a, [[1.0]])
    np.testing.assert_allclose(mixed.rhs_linear, [[9.0, 0.0, 0.0]])
    np.testing.assert_allclose(mixed.rhs(np.array([900.0, 90.0, 100.0])), [8100.0])


def test_build_reduction_cubic_chain(cubic_chain):
    """
    arrange: the cubic chain with rates 1 to 6.
    act: build its reduction.
    assert: A = [[k2 + k3, -k4], [-k3, k4 + k5]] and b = (k1 x, k6 y).
    """
    net, _ = cubic_chain

    (reduction,) = dranalyzer.build_reduction(net)

    assert reduction.case == dranalyzer.CASE_MIXED
    np.testing.assert_allclose(reduction.matrix_a, [[5.0, -4.0], [-3.0, 9.0]])
    np.testing.assert_allclose(reduction.rhs(np.array([1.0, 2.0])), [1.0, 12.0])
    np.testing.assert_allclose(reduction.rhs_constant, [0.0, 0.0])


def test_linear_reduction_cubic_chain(cubic_chain):
    """
    arrange: the cubic chain with rates 1 to 6.
    act: substitute the DR equations into the mass-action equation.
    assert: M = [[-k1 k3 k5, k2 k4 k6], [k1 k3 k5, -k2 k4 k6]] / det A and r = 0.
    """
    net, _ = cubic_chain

    system = dranalyzer.linear_reduction(net)

    np.testing.assert_allclose(system.matrix, np.array([[-15.0, 48.0], [15.0, -48.0]]) / 33.0)
    np.testing.assert_allclose(system.offset, [0.0, 0.0], atol=1e-15)


def test_linear_reduction_dimer_cascade(dimer_cascade):
    """
    arrange: the dimer cascade.
    act: build the reduction and the linear system.
    assert: A = [[2, 0], [-2, 2]] and both dimers become z, so dx/dt = -x.
    """
    net, _ = dimer_cascade

    reduction = dranalyzer.build_reduction(net)[0]
    system = dranalyzer.linear_reduction(net)

    np.testing.assert_allclose(reduction.matrix_a, [[2.0, 0.0], [-2.0, 2.0]])
    np.testing.assert_allclose(
        system.matrix,
        [
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -2.0, 0.0],
            [0.0, 0.0, 2.0, 0.0],
        ],
        atol=1e-12,
    )


def test_path_condition_walks_to_dominant_row():
    """
    arrange: the cascade matrix A = [[2, 0], [-2, 2]].
    act: check the path condition.
    assert: row 1 of the transpose is SDD and row 0 walks to it.
    """
    result = dranalyzer.check_path_condition(np.array([[2.0, 0.0], [-2.0, 2.0]]))

    assert result.nonsingular
    assert result.sdd_rows == (1,)
    assert result.witnesses == (PathWitness(row=0, walk=(0, 1)),)


def test_path_condition_fails_without_exit():
    """
    arrange: a complex with no outflow, A = [[0]].
    act: check the path condition.
    assert: the row has no walk and the matrix is not certified.
    """
    result = dranalyzer.check_path_condition(np.zeros((1, 1)))

    assert not result.nonsingular
    assert result.witnesses == (PathWitness(row=0, walk=None),)


def test_verify_dr_holds(dimer_exchange):
    """
    arrange: the dimer exchange network from (1, 2).
    act: verify the DR condition.
    assert: it holds, M = -I/2, r = (1, 2) and the solution is 2 - exp(-t/2), 4 - 2 exp(-t/2).
    """
    net, initial = dimer_exchange

    report = dranalyzer.verify_dr(net, initial.as_array())

    assert report.verdict == dranalyzer.VERDICT_HOLDS
    assert report.is_dr
    assert report.max_residual == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(report.linear_system.matrix, [[-0.5, 0.0], [0.0, -0.5]])
    np.testing.assert_allclose(report.linear_system.offset, [1.0, 2.0])
    np.testing.assert_allclose(report.solution.final, [2 - np.exp(-5), 4 - 2 * np.exp(-5)])
    assert dranalyzer.INSTANCE_LEVEL_NOTE in report.notes


def test_verify_dr_constant_solution(dimer_exchange):
    """
    arrange: the dimer exchange network at its complex balanced equilibrium (2, 4).
    act: verify the DR condition.
    assert: the verdict is constantSolution.
    """
    net, _ = dimer_exchange

    report = dranalyzer.verify_dr(net, np.array([2.0, 4.0]))

    assert report.verdict == dranalyzer.VERDICT_CONSTANT
    assert report.is_dr
    assert report.failing_complexes == []


def test_verify_dr_isomer_dimer(isomer_dimer):
    """
    arrange: X <-> 2Y with in- and outflow, all rates 1.
    act: verify the DR condition from (2, 1) and from (1, 1).
    assert: it fails on 2Y from (2, 1) and (1, 1) is a constant solution.
    """
    net, initial = isomer_dimer

    report = dranalyzer.verify_dr(net, initial.as_array())

    assert report.verdict == dranalyzer.VERDICT_FAILS
    assert report.failing_complexes == ["2Y"]
    assert report.max_residual == pytest.approx(1.0)
    assert (
        dranalyzer.verify_dr(net, np.array([1.0, 1.0])).verdict == dranalyzer.VERDICT_CONSTANT
    )


def test_verify_dr_decaying_dimerization(decaying_dimerization):
    """
    arrange: the decaying dimerization from (900, 90, 100).
    act: verify the DR condition over [0, 2].
    assert: it holds with the exponential solution.
    """
    net, initial = decaying_dimerization

    report = dranalyzer.verify_dr(net, initial.as_array(), T=2.0)

    assert report.verdict == dranalyzer.VERDICT_HOLDS
    np.testing.assert_allclose(
        report.linear_system.matrix, [[-2.0, 0.0, 0.0], [0.0, -1.0, 0.0], [2.0, 0.0, 0.0]]
    )
    np.testing.assert_allclose(
        report.solution.final,
        [900 * np.exp(-4), 90 * np.exp(-2), 100 + 900 * (1 - np.exp(-4))],
    )


def test_verify_dr_singular_reduction(decaying_dimerization_burst):
    """
    arrange: the burst variant, in which 4Y has no outflow.
    act: verify the DR condition.
    assert: it fails on 4Y, without a linear system, with residuals from the fallback.
    """
    net, initial = decaying_dimerization_burst

    report = dranalyzer.verify_dr(net, initial.as_array(), T=2.0)

    assert report.verdict == dranalyzer.VERDICT_FAILS
    assert report.failing_complexes == ["4Y"]
    assert report.linear_system is None
    assert report.max_residual > 0
    assert any(note.startswith("nonlinear fallback") for note in report.notes)


def test_verify_dr_dimer_cascade(dimer_cascade):
    """
    arrange: the dimer cascade.
    act: verify the DR condition from (2, 2, 4, 1) and from (2, 2, 5, 1).
    assert: it holds when z0 = x0^2 = y0^2 and fails on 2X otherwise.
    """
    net, initial = dimer_cascade

    report = dranalyzer.verify_dr(net, initial.as_array(), T=3.0)

    assert report.verdict == dranalyzer.VERDICT_HOLDS
    w = 1 + 4 * (1 - np.exp(-6.0))
    np.testing.assert_allclose(report.solution.final[3], w)
    failing = dranalyzer.verify_dr(net, np.array([2.0, 2.0, 5.0, 1.0]), T=3.0)
    assert failing.verdict == dranalyzer.VERDICT_FAILS
    assert failing.failing_complexes == ["2X"]


def test_verify_dr_rejects_non_positive_initial(dimer_exchange):
    """
    arrange: the dimer exchange network.
    act: verify from a point with a zero coordinate.
    assert: NonPositiveInitialError is raised.
    """
    net, _ = dimer_exchange

    with pytest.raises(NonPositiveInitialError):
        dranalyzer.verify_dr(net, np.array([1.0, 0.0]))


def test_report_document(dimer_exchange):
    """
    arrange: a report for the dimer exchange network.
    act: render it as a document.
    assert: the document has the documented keys and M, r as nested lists.
    """
    net, initial = dimer_exchange

    document = dranalyzer.verify_dr(net, initial.as_array(), gridsize=11).to_dict()

    assert set(document) == {
        "verdict",
        "maxResidual",
        "perComplex",
        "failingComplexes",
        "linearSystem",
        "horizon",
        "tolerance",
        "notes",
    }
    assert document["linearSystem"]["r"] == [1.0, 2.0]
    assert [row["complex"] for row in document["perComplex"]] == ["2X", "2Y"]


def test_predicted_means(dimer_exchange, isomer_dimer):
    """
    arrange: a holding instance and a failing one.
    act: compute predicted means on a grid.
    assert: the linear solution for holds and the RK4 solution for fails.
    """
    grid = np.linspace(0.0, 1.0, 3)
    net, initial = dimer_exchange
    report = dranalyzer.verify_dr(net, initial.as_array())

    means = dranalyzer.predicted_means(report, net, grid)

    np.testing.assert_allclose(means.states[:, 0], 2 - np.exp(-grid / 2))

    net, initial = isomer_dimer
    report = dranalyzer.verify_dr(net, initial.as_array())

    means = dranalyzer.predicted_means(report, net, grid)

    np.testing.assert_array_equal(means.states[0], [2.0, 1.0])
    assert means.states[-1, 0] < 2.0


def test_one_species_dr(birth_death, parse_text):
    """
    arrange: a first-order one-species network and one with the complex 2X.
    act: decide the one-species DR question.
    assert: possible for the first and onlyConstant for the second.
    """
    dimer, _ = parse_text("species X\n0 <-> 2X : 1, 1\ninit X = 1")

    assert dranalyzer.one_species_dr(birth_death[0]) == dranalyzer.ONE_SPECIES_POSSIBLE
    assert dranalyzer.one_species_dr(dimer) == dranalyzer.ONE_SPECIES_ONLY_CONSTANT


def test_one_species_dr_rejects_two_species(dimer_exchange):
    """
    arrange: a two-species network.
    act: ask the one-species question.
    assert: NotOneSpeciesError is raised.
    """
    with pytest.raises(NotOneSpeciesError):
        dranalyzer.one_species_dr(dimer_exchange[0])


def test_diffusion_matrix(dimer_exchange):
    """
    arrange: the dimer exchange network at u = (1, 1).
    act: compute drift and diffusion.
    assert: first-order reactions add no diffusion, B = diag(-2k1 + 2k2, 2k1 - 2k2).
    """
    net, _ = dimer_exchange
    u = np.array([1.0, 1.0])

    np.testing.assert_allclose(dranalyzer.diffusion_matrix(net, u), [[-6.0, 0.0], [0.0, 6.0]])
    np.testing.assert_allclose(dranalyzer.drift_vector(net, u), [-6.0 + 0.5, 6.0 + 1.5])


def test_diffusion_vanishes_along_dr_solution(dimer_exchange):
    """
    arrange: the DR solution of the dimer exchange network.
    act: evaluate the diffusion matrix along it.
    assert: it is zero, the diffusion approximation adds no noise.
    """
    net, initial = dimer_exchange
    report = dranalyzer.verify_dr(net, initial.as_array(), gridsize=21)

    assert dranalyzer.diffusion_along(net, report.solution) == pytest.approx(0.0, abs=1e-9)


def test_diffusion_matrix_rejects_cubic(cubic_chain):
    """
    arrange: a network with cubic complexes.
    act: compute its diffusion matrix.
    assert: NotBinaryError is raised.
    """
    with pytest.raises(NotBinaryError):
        dranalyzer.diffusion_matrix(cubic_chain[0], np.ones(2))


def test_verify_dr_pair_production(networks_dir):
    """
    arrange: pair production 0 <-> X + Y with exchange and in- and outflow, from (2, 1).
    act: decide the DR condition.
    assert: it fails on X+Y, whose inflow 1 cannot match the outflow xy = 2.
    """
    net, initial, _ = netparse.load_network(networks_dir / "xy_production.crn")

    report = dranalyzer.verify_dr(net, initial.as_array())

    assert report.verdict == dranalyzer.VERDICT_FAILS
    assert report.failing_complexes == ["X+Y"]


def test_verify_dr_ignores_zero_rate_reactions(parse_text, networks_dir):
    """
    arrange: the dimer exchange network with an extra reaction Y -> 4Y of rate zero.
    act: build the reduction and decide the DR condition.
    assert: 4Y gets no row, the verdict holds and its residual is zero.
    """
    text = (networks_dir / "dimer_exchange.crn").read_text(encoding="utf-8")
    net, initial = parse_text(text + "\nY -> 4Y : 0\n")

    reductions = dranalyzer.build_reduction(net)
    report = dranalyzer.verify_dr(net, initial.as_array())

    assert all(
        net.label(net.complexes[index]) != "4Y"
        for reduction in reductions
        for index in reduction.higher
    )
    assert report.verdict == dranalyzer.VERDICT_HOLDS
    assert dict(report.per_complex)["4Y"] == 0.0


def _outflow_to_low(net: ReactionNetwork, index: int) -> float:
    """Total rate of the reactions leaving a complex towards first-order or empty complexes."""
    return sum(
        rate
        for source, product, rate in zip(net.source_index, net.product_index, net.rates)
        if source == index and not net.complexes[product].is_higher_order
    )


@pytest.mark.parametrize(
    "name",
    [pytest.param("cubic_chain", id="cubic chain"), pytest.param("dimer_cascade", id="cascade")],
)
def test_reduction_column_sums_are_outflow_to_low(networks_dir, name: str):
    """
    arrange: a network with a mixed linkage class.
    act: build its reduction.
    assert: every row of the transpose of A sums to the outflow of its complex towards
        first-order complexes.
    """
    net, _, _ = netparse.load_network(networks_dir / f"{name}.crn")

    for reduction in dranalyzer.build_reduction(net):
        expected = [_outflow_to_low(net, index) for index in reduction.higher]
        np.testing.assert_array_equal(reduction.matrix_a.T.sum(axis=1), expected)


@pytest.mark.parametrize(
    "name, c0",
    [
        pytest.param("cubic_chain", [1.0, 2.0], id="cubic chain"),
        pytest.param("birth_death", [3.0], id="immigration"),
    ],
)
def test_solve_linear_satisfies_equation(networks_dir, name: str, c0: list):
    """
    arrange: the linear system of a network and a grid t - h, t, t + h around t = 1.
    act: solve it exactly on the grid.
    assert: the central difference matches M c(t) + r up to O(h^2).
    """
    net, _, _ = netparse.load_network(networks_dir / f"{name}.crn")
    system = dranalyzer.linear_reduction(net)
    h = 1e-3

    solution = dranalyzer.solve_linear(
        system, np.array(c0), np.array([0.0, 1.0 - h, 1.0, 1.0 + h]), net.species
    )

    _, before, middle, after = solution.states
    np.testing.assert_allclose(
        (after - before) / (2 * h), system.matrix @ middle + system.offset, atol=1e-5
    )


def _reversed(net: ReactionNetwork) -> ReactionNetwork:
    """The same network with the species order and the reaction order reversed."""

    def flip(complex_: Complex) -> Complex:
        return Complex(tuple(reversed(complex_.counts)))

    return ReactionNetwork.from_reactions(
        tuple(reversed(net.species)),
        [
            Reaction(flip(reaction.source), flip(reaction.product), reaction.rate)
            for reaction in reversed(net.reactions)
        ],
    )


@pytest.mark.parametrize(
    "c0, verdict",
    [
        pytest.param([2.0, 2.0, 4.0, 1.0], dranalyzer.VERDICT_HOLDS, id="holds"),
        pytest.param([2.0, 2.0, 5.0, 1.0], dranalyzer.VERDICT_FAILS, id="fails"),
    ],
)
def test_verify_dr_ignores_ordering(dimer_cascade, c0: list, verdict: str):
    """
    arrange: the dimer cascade and a copy with species and reactions listed backwards.
    act: verify the DR condition on both.
    assert: the verdicts, the failing complexes and the residual maxima agree.
    """
    net, _ = dimer_cascade

    report = dranalyzer.verify_dr(net, np.array(c0), T=3.0)
    mirrored = dranalyzer.verify_dr(_reversed(net), np.array(c0[::-1]), T=3.0)

    assert report.verdict == mirrored.verdict == verdict
    assert report.failing_complexes == mirrored.failing_complexes
    np.testing.assert_allclose(mirrored.max_residual, report.max_residual, rtol=1e-8, atol=1e-12)
    assert dict(mirrored.per_complex).keys() == dict(report.per_complex).keys()
