# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Product-Poisson laws, the master equation identity and distribution distances."""

import dataclasses
import logging
import math
import typing

import numpy as np
import scipy.stats

import determ
from exceptions import BoxTooSmallError, InsufficientSamplesError, NonPositiveInitialError
from network import Complex, ReactionNetwork
from reports import ComparisonRowDocument
from stochastic import EnsembleSummary, TruncatedPmf

logger = logging.getLogger(__name__)

RANK_THRESHOLD = 1e-9
LATTICE_CAP = 10**4
RANDOM_STATES = 100
RANDOM_STATE_MAX = 20
BOX_COVERAGE = 1 - 1e-6
DEFAULT_SIGNIFICANCE = 1e-3
MIN_EXPECTED = 5.0


@dataclasses.dataclass(frozen=True)
class ProductPoissonLaw:
    """Independent Poisson marginals.

    Attributes:
        means: strictly positive mean of each species.
    """

    means: typing.Tuple[float, ...]

    def __post_init__(self) -> None:
        """Validate the means.

        Raises:
            NonPositiveInitialError: if a mean is not strictly positive.
        """
        if any(not mean > 0 for mean in self.means):
            raise NonPositiveInitialError(f"Poisson means must be strictly positive: {self.means}")

    @classmethod
    def at(cls, means: typing.Iterable[float]) -> "ProductPoissonLaw":
        """Build a law from any iterable of means.

        Args:
            means: the means.

        Returns:
            The law.
        """
        return cls(tuple(float(mean) for mean in means))

    def box_pmf(self, box: typing.Sequence[int]) -> np.ndarray:
        """Joint pmf on the lattice ``0..box_i``.

        Args:
            box: per-species upper bounds.

        Returns:
            Array of shape ``box + 1``.
        """
        joint = np.ones(())
        for bound, mean in zip(box, self.means):
            joint = np.multiply.outer(joint, scipy.stats.poisson.pmf(np.arange(bound + 1), mean))
        return joint


def log_pmf(law: ProductPoissonLaw, x: typing.Sequence[int]) -> float:
    """Log probability of a state.

    Args:
        law: the law.
        x: copy numbers.

    Returns:
        ``sum_i (x_i log c_i - c_i - log x_i!)``.
    """
    return float(np.sum(scipy.stats.poisson.logpmf(np.asarray(x), np.asarray(law.means))))


def pmf(law: ProductPoissonLaw, x: typing.Sequence[int]) -> float:
    """Probability of a state.

    Args:
        law: the law.
        x: copy numbers.

    Returns:
        The product of the Poisson marginals at ``x``.
    """
    return math.exp(log_pmf(law, x))


def _g_values(states: np.ndarray, c: np.ndarray, y: typing.Sequence[int]) -> np.ndarray:
    """Evaluate the g polynomial of complex ``y`` at many states.

    The terms are grouped so that the value is exactly zero for complexes of order at
    most one.

    Args:
        states: n x d array of copy numbers.
        c: strictly positive concentrations.
        y: stoichiometric vector of the complex.

    Returns:
        One value per state.
    """
    scaled = np.asarray(states, dtype=float) / c
    linear = np.zeros(len(scaled))
    falling = np.ones(len(scaled))
    for j, need in enumerate(y):
        if not need:
            continue
        linear = linear + need * scaled[:, j]
        for offset in range(need):
            falling = falling * ((states[:, j] - offset) / c[j])
        falling = np.where(states[:, j] < need, 0.0, falling)
    return (linear - falling) + (1 - sum(y))


def g_function(x: typing.Sequence[int], c: np.ndarray, y: Complex) -> float:
    """The g polynomial of a complex at state ``x`` and concentration ``c``.

    ``g(y) = sum_j (x_j / c_j - 1) y_j - x! / (x - y)! c ** -y + 1``, with the falling
    factorial term zero when some ``x_j < y_j``. It vanishes for every complex of order
    at most one.

    Args:
        x: copy numbers.
        c: strictly positive concentrations.
        y: the complex.

    Returns:
        The value of g.
    """
    states = np.asarray(x, dtype=np.int64)[None, :]
    return float(_g_values(states, np.asarray(c, dtype=float), y.counts)[0])


def master_identity_residual(
    net: ReactionNetwork, c: np.ndarray, x: typing.Sequence[int]
) -> float:
    """Residual of the master equation identity for a product-Poisson law.

    The law with means ``c(t)`` solves the master equation exactly when this residual
    vanishes for every state while ``c`` follows the mass-action equation.

    Args:
        net: the network.
        c: strictly positive concentrations.
        x: copy numbers.

    Returns:
        ``sum_k kappa_k c ** y_k (g(y_k') - g(y_k))``.
    """
    residuals = master_identity_residuals(net, c, np.asarray(x, dtype=np.int64)[None, :])
    return float(residuals[0])


def master_identity_residuals(
    net: ReactionNetwork, c: np.ndarray, states: np.ndarray
) -> np.ndarray:
    """Vectorized :func:`master_identity_residual` over many states.

    Args:
        net: the network.
        c: strictly positive concentrations.
        states: n x d array of copy numbers.

    Returns:
        One residual per state.
    """
    c = np.asarray(c, dtype=float)
    g = {complex_: _g_values(states, c, complex_.counts) for complex_ in net.complexes}
    fluxes = determ.reaction_fluxes(net, c)
    total = np.zeros(len(states))
    for reaction, flux in zip(net.reactions, fluxes):
        total = total + flux * (g[reaction.product] - g[reaction.source])
    return total


def sample_states(
    dimension: int,
    max_order: int,
    rng: np.random.Generator,
    random_count: int = RANDOM_STATES,
) -> np.ndarray:
    """States at which the identity and rank checks are evaluated.

    The full lattice ``0..K`` per species with ``K = max(3, max_order + 2)``, shrunk to at
    most ten thousand points, followed by uniformly random states with coordinates up to 20.

    Args:
        dimension: number of species.
        max_order: largest complex order of the network.
        rng: random generator for the extra states.
        random_count: number of random states.

    Returns:
        n x d integer array.
    """
    bound = max(3, max_order + 2)
    while bound > 1 and (bound + 1) ** dimension > LATTICE_CAP:
        bound -= 1
    lattice = np.indices((bound + 1,) * dimension).reshape(dimension, -1).T
    extra = rng.integers(0, RANDOM_STATE_MAX + 1, size=(random_count, dimension))
    return np.vstack([lattice, extra]).astype(np.int64)


def linear_independence_rank(
    complexes: typing.Sequence[Complex], c: np.ndarray, states: np.ndarray
) -> int:
    """Numerical rank of the g polynomials of the given complexes over sample states.

    Args:
        complexes: the higher-order complexes.
        c: strictly positive concentrations.
        states: sample states, at least as many as complexes.

    Returns:
        Number of singular values above ``1e-9`` times the largest one.

    Raises:
        InsufficientSamplesError: if there are fewer states than complexes.
    """
    if not complexes:
        return 0
    states = np.asarray(states, dtype=np.int64)
    if len(states) < len(complexes):
        raise InsufficientSamplesError(
            f"{len(states)} sample states cannot certify rank {len(complexes)}"
        )
    c = np.asarray(c, dtype=float)
    matrix = np.vstack([_g_values(states, c, complex_.counts) for complex_ in complexes])
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular[0] == 0:
        return 0
    return int(np.sum(singular > RANK_THRESHOLD * singular[0]))


def _support_bound(mean: float, observed: int) -> int:
    """Upper end of a box that covers a Poisson law and the observed counts.

    Args:
        mean: Poisson mean.
        observed: largest observed count.

    Returns:
        The bound.
    """
    return max(observed, int(scipy.stats.poisson.isf(1e-12, mean)) + 1)


def total_variation(
    empirical: typing.Mapping[int, float], mean: float, box: typing.Optional[int] = None
) -> float:
    """Total variation between an empirical pmf and a Poisson law.

    Args:
        empirical: probability of each observed count.
        mean: Poisson mean.
        box: upper end of the summation range, covering the observed counts.

    Returns:
        Half the absolute difference summed over ``0..box``, plus the law's mass above it.

    Raises:
        BoxTooSmallError: if the box holds less than ``1 - 1e-6`` of the law's mass.
    """
    if box is None:
        box = _support_bound(mean, max(empirical, default=0))
    coverage = float(scipy.stats.poisson.cdf(box, mean))
    if coverage < BOX_COVERAGE:
        raise BoxTooSmallError(f"box 0..{box} holds only {coverage:.9f} of Poisson({mean:g})")
    counts = np.arange(box + 1)
    law = scipy.stats.poisson.pmf(counts, mean)
    observed = np.array([empirical.get(int(count), 0.0) for count in counts])
    outside = math.fsum(value for count, value in empirical.items() if count > box)
    return 0.5 * math.fsum(np.abs(observed - law)) + 0.5 * (
        outside + float(scipy.stats.poisson.sf(box, mean))
    )


def chi_square(
    histogram: typing.Mapping[int, int], replicates: int, mean: float
) -> typing.Tuple[float, float]:
    """Pooled chi-square goodness of fit of a histogram against a Poisson law.

    Bins are merged left to right until each expects at least five replicates; the law's
    mass above the largest observed count goes to the last bin.

    Args:
        histogram: number of replicates at each count.
        replicates: total number of replicates.
        mean: Poisson mean.

    Returns:
        The statistic and its p-value.
    """
    upper = max(histogram, default=0)
    counts = np.arange(upper + 1)
    expected = replicates * scipy.stats.poisson.pmf(counts, mean)
    expected[-1] += replicates * scipy.stats.poisson.sf(upper, mean)
    observed = np.array([histogram.get(int(count), 0) for count in counts], dtype=float)
    pooled_obs, pooled_exp = [], []
    acc_obs = acc_exp = 0.0
    for obs, exp in zip(observed, expected):
        acc_obs += obs
        acc_exp += exp
        if acc_exp >= MIN_EXPECTED:
            pooled_obs.append(acc_obs)
            pooled_exp.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if pooled_exp:
        pooled_obs[-1] += acc_obs
        pooled_exp[-1] += acc_exp
    else:
        pooled_obs, pooled_exp = [acc_obs], [acc_exp]
    if len(pooled_exp) < 2:
        return 0.0, 1.0
    pooled_exp_array = np.array(pooled_exp)
    pooled_exp_array *= sum(pooled_obs) / pooled_exp_array.sum()
    statistic, p_value = scipy.stats.chisquare(np.array(pooled_obs), pooled_exp_array)
    return float(statistic), float(p_value)


def compare_ensemble(
    summary: EnsembleSummary,
    means: typing.Sequence[float],
    significance: float = DEFAULT_SIGNIFICANCE,
) -> typing.List[ComparisonRowDocument]:
    """Compare every empirical marginal with its predicted Poisson law.

    Args:
        summary: the ensemble at the horizon.
        means: predicted Poisson mean of each species at the horizon.
        significance: chi-square significance level.

    Returns:
        One comparison row per species.
    """
    rows: typing.List[ComparisonRowDocument] = []
    for index, name in enumerate(summary.species):
        histogram = summary.histograms[index]
        empirical = {count: tally / summary.replicates for count, tally in histogram.items()}
        predicted = float(means[index])
        tv = total_variation(empirical, predicted)
        statistic, p_value = chi_square(histogram, summary.replicates, predicted)
        mean = float(summary.means[index])
        variance = float(summary.variances[index])
        rows.append(
            {
                "name": name,
                "tv": tv,
                "chi2": statistic,
                "pValue": p_value,
                "predictedMean": predicted,
                "empiricalMean": mean,
                "empiricalVariance": variance,
                "dispersion": variance / mean if mean > 0 else 0.0,
                "passed": p_value > significance,
            }
        )
        logger.debug("%s: tv %g, chi2 %g, p %g", name, tv, statistic, p_value)
    return rows


class PmfDistance(typing.NamedTuple):
    """Distance between a truncated pmf and a product-Poisson law.

    Attrs:
        sup_norm: largest pointwise difference on the box.
        tv: total variation, counting the mass either law puts outside the box.
    """

    sup_norm: float
    tv: float


def pmf_sup_distance(truncated: TruncatedPmf, law: ProductPoissonLaw) -> PmfDistance:
    """Compare a truncated master equation solution with a product-Poisson law.

    Args:
        truncated: the truncated pmf.
        law: the product-Poisson law.

    Returns:
        Sup norm and total variation.
    """
    predicted = law.box_pmf(truncated.box)
    difference = np.abs(truncated.probabilities - predicted)
    outside = max(0.0, 1.0 - math.fsum(predicted.ravel()))
    tv = 0.5 * (math.fsum(difference.ravel()) + truncated.leaked + outside)
    return PmfDistance(sup_norm=float(difference.max()), tv=tv)
