# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Stochastic mass-action model.

Exact Gillespie simulation of the continuous-time Markov chain, product-Poisson initial
sampling, reproducible replicate ensembles and a truncated master equation integrator.
"""

import collections
import concurrent.futures
import dataclasses
import logging
import math
import typing

import numba
import numpy as np
import scipy.sparse
import scipy.stats

from exceptions import BoxTooSmallError, EventOverflowError, NonPositiveInitialError
from network import Reaction, ReactionNetwork
from reports import EnsembleDocument

logger = logging.getLogger(__name__)

DEFAULT_MAX_EVENTS = 10**8
DEFAULT_LEAK_BUDGET = 1e-6
INITIAL_OUTSIDE_BUDGET = 1e-12
# Largest h * (total outflow rate) for an RK4 step on the master equation.
_CME_STABILITY = 1.0


def intensity(reaction: Reaction, x: typing.Sequence[int]) -> float:
    """Stochastic mass-action propensity of a reaction in state ``x``.

    Args:
        reaction: the reaction.
        x: copy numbers.

    Returns:
        ``kappa * prod_i x_i! / (x_i - y_i)!``, zero when some ``x_i < y_i``.
    """
    value = float(reaction.rate)
    for count, need in zip(x, reaction.source.counts):
        if count < need:
            return 0.0
        for offset in range(need):
            value *= count - offset
    return value


def transition_rates(
    net: ReactionNetwork, x: typing.Sequence[int]
) -> typing.Dict[typing.Tuple[int, ...], float]:
    """Jump rates out of state ``x``.

    Reactions sharing a reaction vector add up to a single rate.

    Args:
        net: the network.
        x: copy numbers.

    Returns:
        Mapping from target state to rate, without zero-rate entries.
    """
    rates: typing.Dict[typing.Tuple[int, ...], float] = collections.defaultdict(float)
    for reaction, zeta in zip(net.reactions, net.stoichiometry):
        value = intensity(reaction, x)
        if value > 0:
            target = tuple(int(count) for count in np.asarray(x, dtype=np.int64) + zeta)
            rates[target] += value
    return dict(rates)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Random generator of one replicate.

    The stream depends only on ``(seed, index)``, never on how replicates are scheduled.

    Args:
        seed: master seed.
        index: replicate index.

    Returns:
        A PCG64 generator.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_product_poisson(c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw independent Poisson copy numbers with means ``c``.

    Args:
        c: strictly positive means.
        rng: random generator.

    Returns:
        Integer state vector.

    Raises:
        NonPositiveInitialError: if a mean is not strictly positive.
    """
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise NonPositiveInitialError(f"Poisson means must be strictly positive, got {c}")
    return rng.poisson(c).astype(np.int64)


@numba.njit(cache=True)
def _direct_method(rng, state, reactants, stoich, rates, horizon, max_events):  # pragma: no cover
    """Gillespie direct method, compiled.

    Returns the state at the horizon and the number of events fired, -1 on overflow.
    """
    x = state.copy()
    n_reactions, n_species = reactants.shape
    propensities = np.empty(n_reactions)
    t = 0.0
    events = 0
    while True:
        total = 0.0
        for k in range(n_reactions):
            a = rates[k]
            for i in range(n_species):
                for offset in range(reactants[k, i]):
                    a *= x[i] - offset
                    if a <= 0.0:
                        break
                if a <= 0.0:
                    a = 0.0
                    break
            propensities[k] = a
            total += a
        if total <= 0.0:
            break
        t += rng.standard_exponential() / total
        if t > horizon:
            break
        if events >= max_events:
            return x, -1
        target = rng.random() * total
        k = 0
        cumulative = propensities[0]
        while k < n_reactions - 1 and (cumulative <= target or propensities[k] == 0.0):
            k += 1
            cumulative += propensities[k]
        for i in range(n_species):
            x[i] += stoich[k, i]
        events += 1
    return x, events


def _compiled_arrays(net: ReactionNetwork) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrays consumed by the compiled simulator.

    Args:
        net: the network.

    Returns:
        Source matrix, stoichiometry and rates, contiguous and typed.
    """
    return (
        np.ascontiguousarray(net.source_matrix, dtype=np.int64),
        np.ascontiguousarray(net.stoichiometry, dtype=np.int64),
        np.ascontiguousarray(net.rates, dtype=np.float64),
    )


def simulate(
    net: ReactionNetwork,
    x0: np.ndarray,
    T: float,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> np.ndarray:
    """Advance a state to time ``T`` with the Gillespie direct method.

    Args:
        net: the network.
        x0: initial copy numbers.
        T: horizon, nonnegative.
        rng: random generator, advanced in place.
        max_events: cap on the number of reactions fired.

    Returns:
        The state at time ``T``.

    Raises:
        ValueError: if ``T`` is negative.
        EventOverflowError: if more than ``max_events`` reactions fire.
    """
    # pylint: disable=invalid-name
    if T < 0:
        raise ValueError(f"horizon must be nonnegative, got {T}")
    state = np.asarray(x0, dtype=np.int64)
    if not net.reactions:
        return state.copy()
    reactants, stoich, rates = _compiled_arrays(net)
    final, events = _direct_method(rng, state, reactants, stoich, rates, float(T), max_events)
    if events < 0:
        raise EventOverflowError(f"more than {max_events} events before t={T:g}")
    return final


@dataclasses.dataclass
class EnsembleSummary:
    """Statistics of the replicate states at the horizon.

    Attributes:
        replicates: number of replicates N.
        horizon: the time T.
        seed: master seed.
        species: species names.
        histograms: per species, number of replicates at each copy number.
        means: per-species empirical mean.
        variances: per-species empirical variance, ddof 0.
    """

    replicates: int
    horizon: float
    seed: int
    species: typing.Tuple[str, ...]
    histograms: typing.List[typing.Dict[int, int]]
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def from_states(
        cls, states: np.ndarray, species: typing.Sequence[str], horizon: float, seed: int
    ) -> "EnsembleSummary":
        """Summarize replicate states.

        Args:
            states: N x d integer matrix, one row per replicate in index order.
            species: species names.
            horizon: the time T.
            seed: master seed.

        Returns:
            The summary.
        """
        histograms = []
        for column in states.T:
            values, tallies = np.unique(column, return_counts=True)
            histograms.append({int(v): int(n) for v, n in zip(values, tallies)})
        return cls(
            replicates=int(states.shape[0]),
            horizon=float(horizon),
            seed=int(seed),
            species=tuple(species),
            histograms=histograms,
            means=states.mean(axis=0),
            variances=states.var(axis=0),
        )

    def histogram_rows(self) -> typing.List[typing.Tuple[str, int, int]]:
        """Nonzero histogram bins as CSV rows.

        Returns:
            ``(species, count, frequency)`` triples, species in declaration order.
        """
        return [
            (name, count, tally)
            for name, histogram in zip(self.species, self.histograms)
            for count, tally in sorted(histogram.items())
        ]

    def to_dict(self) -> EnsembleDocument:
        """Render the summary as a JSON-ready document.

        Returns:
            The ensemble document.
        """
        return {
            "N": self.replicates,
            "T": self.horizon,
            "seed": self.seed,
            "species": [
                {
                    "name": name,
                    "mean": float(mean),
                    "variance": float(variance),
                    "histogram": [[count, tally] for count, tally in sorted(histogram.items())],
                }
                for name, mean, variance, histogram in zip(
                    self.species, self.means, self.variances, self.histograms
                )
            ],
        }


class _ChunkResult(typing.NamedTuple):
    """Final states of a contiguous block of replicates.

    Attrs:
        start: index of the first replicate.
        states: one row per replicate.
        overflow: index of the first replicate that overflowed, None otherwise.
    """

    start: int
    states: np.ndarray
    overflow: typing.Optional[int]


def _run_chunk(
    net: ReactionNetwork,
    c0: np.ndarray,
    T: float,
    seed: int,
    start: int,
    stop: int,
    max_events: int,
) -> _ChunkResult:
    """Run replicates ``start`` to ``stop - 1``.

    Args:
        net: the network.
        c0: Poisson means of the initial state.
        T: horizon.
        seed: master seed.
        start: first replicate index.
        stop: one past the last replicate index.
        max_events: per-replicate event cap.

    Returns:
        The chunk result.
    """
    # pylint: disable=invalid-name
    states = np.empty((stop - start, net.dimension), dtype=np.int64)
    for index in range(start, stop):
        rng = replicate_rng(seed, index)
        try:
            states[index - start] = simulate(
                net, sample_product_poisson(c0, rng), T, rng, max_events
            )
        except EventOverflowError:
            return _ChunkResult(start, states[: index - start], index)
    return _ChunkResult(start, states, None)


def run_ensemble(
    net: ReactionNetwork,
    c0: np.ndarray,
    T: float,
    N: int,
    seed: int,
    workers: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> EnsembleSummary:
    """Simulate N independent replicates started from the product-Poisson law.

    Replicate i draws from :func:`replicate_rng` with ``(seed, i)``, so the summary is the
    same for any number of workers.

    Args:
        net: the network.
        c0: Poisson means of the initial distribution.
        T: horizon.
        N: number of replicates, at least one.
        seed: master seed.
        workers: number of worker processes, 1 runs in process.
        max_events: per-replicate event cap.

    Returns:
        The ensemble summary.

    Raises:
        ValueError: if N is smaller than one.
        EventOverflowError: if a replicate exceeds the event cap, carrying its index.
    """
    # pylint: disable=invalid-name,too-many-locals
    if N < 1:
        raise ValueError(f"need at least one replicate, got {N}")
    c0 = np.asarray(c0, dtype=float)
    if np.any(c0 <= 0):
        raise NonPositiveInitialError(f"Poisson means must be strictly positive, got {c0}")
    chunk = max(1, math.ceil(N / (4 * max(1, workers))))
    bounds = [(start, min(N, start + chunk)) for start in range(0, N, chunk)]
    logger.info("Running %d replicates to T=%g on %d worker(s)", N, T, workers)
    if workers <= 1:
        results = [
            _run_chunk(net, c0, T, seed, start, stop, max_events) for start, stop in bounds
        ]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_chunk, net, c0, T, seed, start, stop, max_events)
                for start, stop in bounds
            ]
            results = [future.result() for future in futures]
    overflows = [result.overflow for result in results if result.overflow is not None]
    if overflows:
        replicate = min(overflows)
        logger.error("Replicate %d exceeded %d events", replicate, max_events)
        raise EventOverflowError(
            f"replicate {replicate} fired more than {max_events} events", replicate
        )
    states = np.concatenate([result.states for result in sorted(results)], axis=0)
    return EnsembleSummary.from_states(states, net.species, T, seed)


@dataclasses.dataclass
class TruncatedPmf:
    """Probability mass function on a finite lattice box.

    Attributes:
        box: upper bound of each species, the lattice is ``0..box_i``.
        probabilities: array of shape ``box + 1`` indexed by copy numbers.
        leaked: mass that left the box, including initial mass outside it.
        species: species names.
    """

    box: typing.Tuple[int, ...]
    probabilities: np.ndarray
    leaked: float
    species: typing.Tuple[str, ...]

    @property
    def total(self) -> float:
        """Mass inside the box.

        Returns:
            Sum of the probabilities.
        """
        return float(self.probabilities.sum())

    def marginal(self, index: int) -> np.ndarray:
        """Marginal pmf of one species on ``0..box_i``.

        Args:
            index: species index.

        Returns:
            The marginal probabilities.
        """
        axes = tuple(axis for axis in range(len(self.box)) if axis != index)
        return self.probabilities.sum(axis=axes)

    def means(self) -> np.ndarray:
        """Mean copy number of each species, from the mass inside the box.

        Returns:
            Vector of marginal means.
        """
        return np.array(
            [
                float(np.arange(bound + 1) @ self.marginal(index))
                for index, bound in enumerate(self.box)
            ]
        )


def _lattice_propensities(net: ReactionNetwork, box: typing.Tuple[int, ...]) -> np.ndarray:
    """Propensity of every reaction at every lattice point, flattened in C order.

    Args:
        net: the network.
        box: per-species upper bounds.

    Returns:
        K x S array.
    """
    grids = np.meshgrid(*[np.arange(bound + 1) for bound in box], indexing="ij")
    flat = [grid.ravel().astype(float) for grid in grids]
    propensities = np.empty((len(net.reactions), flat[0].size))
    for k, reaction in enumerate(net.reactions):
        value = np.full(flat[0].size, reaction.rate)
        for counts, need in zip(flat, reaction.source.counts):
            for offset in range(need):
                value *= np.maximum(counts - offset, 0.0)
        propensities[k] = value
    return propensities


def _generator(
    net: ReactionNetwork, box: typing.Tuple[int, ...]
) -> typing.Tuple[scipy.sparse.csr_matrix, np.ndarray, float]:
    """Sparse generator of the master equation restricted to the box.

    Args:
        net: the network.
        box: per-species upper bounds.

    Returns:
        The generator Q with ``dP/dt = Q P``, the leak rate of each state and the largest
        total outflow rate.
    """
    shape = tuple(bound + 1 for bound in box)
    size = int(np.prod(shape))
    coords = np.indices(shape).reshape(len(shape), size)
    propensities = _lattice_propensities(net, box)
    rows, cols, values = [], [], []
    leak = np.zeros(size)
    outflow = propensities.sum(axis=0)
    for k, zeta in enumerate(net.stoichiometry):
        target = coords + zeta[:, None]
        inside = np.all((target >= 0) & (target <= np.asarray(box)[:, None]), axis=0)
        active = propensities[k] > 0
        moves = inside & active
        flat_target = np.ravel_multi_index(tuple(target[:, moves]), shape)
        rows.append(flat_target)
        cols.append(np.flatnonzero(moves))
        values.append(propensities[k, moves])
        leak += np.where(~inside & active, propensities[k], 0.0)
    rows.append(np.arange(size))
    cols.append(np.arange(size))
    values.append(-outflow)
    generator = scipy.sparse.csr_matrix(
        (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    return generator, leak, float(np.max(outflow, initial=0.0))


def truncated_cme(
    net: ReactionNetwork,
    box: typing.Sequence[int],
    T: float,
    dt: float,
    means: typing.Optional[np.ndarray] = None,
    initial_pmf: typing.Optional[np.ndarray] = None,
    leak_budget: float = DEFAULT_LEAK_BUDGET,
) -> TruncatedPmf:
    """Integrate the chemical master equation on a lattice box with RK4.

    Mass flowing to states outside the box is accumulated in ``leaked``. The step is
    shortened automatically when ``dt`` would make RK4 unstable.

    Args:
        net: the network.
        box: per-species upper bounds.
        T: horizon.
        dt: largest step size.
        means: Poisson means of a product-Poisson initial law.
        initial_pmf: explicit initial pmf of shape ``box + 1``, used when ``means`` is None.
        leak_budget: largest mass allowed to leave the box.

    Returns:
        The pmf at time T.

    Raises:
        ValueError: if neither or both initial laws are given, or T or dt are invalid.
        BoxTooSmallError: if the initial law or the dynamics put too much mass outside.
    """
    # pylint: disable=invalid-name,too-many-locals
    box = tuple(int(bound) for bound in box)
    if len(box) != net.dimension or min(box) < 0:
        raise ValueError(f"box {box} does not match {net.dimension} species")
    if T < 0 or dt <= 0:
        raise ValueError(f"need T >= 0 and dt > 0, got T={T}, dt={dt}")
    if (means is None) == (initial_pmf is None):
        raise ValueError("give exactly one of means and initial_pmf")
    if means is not None:
        marginals = [
            scipy.stats.poisson.pmf(np.arange(bound + 1), mean)
            for bound, mean in zip(box, np.asarray(means, dtype=float))
        ]
        probabilities = marginals[0]
        for marginal in marginals[1:]:
            probabilities = np.multiply.outer(probabilities, marginal)
        probabilities = np.asarray(probabilities, dtype=float).ravel()
    else:
        probabilities = np.asarray(initial_pmf, dtype=float).ravel().copy()
    outside = max(0.0, 1.0 - math.fsum(probabilities))
    if outside > INITIAL_OUTSIDE_BUDGET:
        raise BoxTooSmallError(f"initial law puts mass {outside:.3g} outside the box {box}")

    generator, leak, max_rate = _generator(net, box)
    steps = max(1, math.ceil(T / dt - 1e-9)) if T > 0 else 0
    if steps and max_rate * T / steps > _CME_STABILITY:
        stable = math.ceil(max_rate * T / _CME_STABILITY)
        logger.warning("Shortening CME step for RK4 stability: %d steps, not %d", stable, steps)
        steps = stable
    h = T / steps if steps else 0.0
    leaked = outside
    for _ in range(steps):
        k1 = generator @ probabilities
        p2 = probabilities + 0.5 * h * k1
        k2 = generator @ p2
        p3 = probabilities + 0.5 * h * k2
        k3 = generator @ p3
        p4 = probabilities + h * k3
        k4 = generator @ p4
        leaked += h / 6.0 * float(leak @ (probabilities + 2.0 * p2 + 2.0 * p3 + p4))
        probabilities = probabilities + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if leaked > leak_budget:
        logger.error("Truncated CME leaked %g > %g", leaked, leak_budget)
        raise BoxTooSmallError(f"leaked mass {leaked:.3g} exceeds the budget {leak_budget:g}")
    logger.debug("truncated CME on box %s: %d steps, leaked %g", box, steps, leaked)
    return TruncatedPmf(
        box=box,
        probabilities=probabilities.reshape(tuple(bound + 1 for bound in box)),
        leaked=leaked,
        species=net.species,
    )
