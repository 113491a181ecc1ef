# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Deterministic mass-action model: right-hand side, RK4 integrator and complex balance."""

import dataclasses
import io
import logging
import math
import typing

import numpy as np

from exceptions import BlowUpError, NegativeConcentrationError, NonPositiveInitialError
from network import ReactionNetwork
from types_ import ComplexBalanceResult

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_BLOWUP_BOUND = 1e12
NEGATIVE_CLAMP_THRESHOLD = 1e-12


@dataclasses.dataclass
class Trajectory:
    """Concentrations sampled on an increasing time grid.

    Attributes:
        times: grid points, starting at 0 and strictly increasing.
        states: one row of concentrations per grid point.
        species: species names labelling the columns of ``states``.
        warnings: integrator warnings, such as clamped roundoff negatives.
    """

    times: np.ndarray
    states: np.ndarray
    species: typing.Tuple[str, ...]
    warnings: typing.List[str] = dataclasses.field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        """State at the last grid point.

        Returns:
            The concentration vector at the end of the horizon.
        """
        return self.states[-1]

    def to_csv(self) -> str:
        """Render the trajectory as CSV with a ``t,<species...>`` header.

        Returns:
            CSV text, one row per grid point, 17 significant digits.
        """
        buffer = io.StringIO()
        np.savetxt(
            buffer,
            np.column_stack([self.times, self.states]),
            fmt="%.17g",
            delimiter=",",
            header=",".join(("t",) + tuple(self.species)),
            comments="",
        )
        return buffer.getvalue()


def monomials(net: ReactionNetwork, c: np.ndarray) -> np.ndarray:
    """Evaluate ``c ** y_k`` for the source complex of every reaction.

    Args:
        net: the network.
        c: nonnegative concentration vector.

    Returns:
        One monomial per reaction, with ``0 ** 0 = 1``.
    """
    exponents = net.source_matrix
    powers = np.where(exponents == 0, 1.0, np.asarray(c, dtype=float)[None, :] ** exponents)
    return np.prod(powers, axis=1)


def reaction_fluxes(net: ReactionNetwork, c: np.ndarray) -> np.ndarray:
    """Deterministic flux ``kappa_k * c ** y_k`` of each reaction.

    Args:
        net: the network.
        c: nonnegative concentration vector.

    Returns:
        Flux per reaction.
    """
    return net.rates * monomials(net, c)


def mass_action_rhs(net: ReactionNetwork, c: np.ndarray) -> np.ndarray:
    """Right-hand side of the deterministic mass-action equation.

    Args:
        net: the network.
        c: nonnegative concentration vector.

    Returns:
        ``sum_k kappa_k c ** y_k (y_k' - y_k)``.
    """
    if not net.reactions:
        return np.zeros(net.dimension)
    return net.stoichiometry.T @ reaction_fluxes(net, c)


def flux_balance(net: ReactionNetwork, c: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Total inflow and outflow of every complex at a concentration.

    Args:
        net: the network.
        c: nonnegative concentration vector.

    Returns:
        ``(inflow, outflow)``, each indexed like ``net.complexes``.
    """
    size = len(net.complexes)
    if not net.reactions:
        return np.zeros(size), np.zeros(size)
    fluxes = reaction_fluxes(net, c)
    inflow = np.bincount(net.product_index, weights=fluxes, minlength=size)
    outflow = np.bincount(net.source_index, weights=fluxes, minlength=size)
    return inflow, outflow


def is_complex_balanced_at(
    net: ReactionNetwork, c: np.ndarray, tol: float = 1e-9
) -> ComplexBalanceResult:
    """Test whether every complex balances its inflow and outflow at ``c``.

    The tolerance is relative: a residual passes when it is at most
    ``tol * (1 + largest flux)``.

    Args:
        net: the network.
        c: strictly positive concentration vector.
        tol: relative tolerance.

    Returns:
        The verdict and the per-complex residuals.

    Raises:
        NonPositiveInitialError: if a component of ``c`` is not strictly positive.
    """
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise NonPositiveInitialError(f"concentrations must be strictly positive, got {c}")
    inflow, outflow = flux_balance(net, c)
    residuals = outflow - inflow
    scale = float(max(np.max(inflow, initial=0.0), np.max(outflow, initial=0.0)))
    balanced = bool(np.all(np.abs(residuals) <= tol * (1.0 + scale)))
    logger.debug("complex balance at %s: residuals %s, balanced %s", c, residuals, balanced)
    return ComplexBalanceResult(balanced, residuals, scale)


def _rk4_step(net: ReactionNetwork, c: np.ndarray, h: float) -> np.ndarray:
    """Advance one classical Runge-Kutta step.

    Args:
        net: the network.
        c: state at the start of the step.
        h: step size.

    Returns:
        The state after the step.
    """
    k1 = mass_action_rhs(net, c)
    k2 = mass_action_rhs(net, c + 0.5 * h * k1)
    k3 = mass_action_rhs(net, c + 0.5 * h * k2)
    k4 = mass_action_rhs(net, c + h * k3)
    return c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _guard(c: np.ndarray, t: float, bound: float, warnings: typing.List[str]) -> np.ndarray:
    """Apply the blow-up and negativity guards to a freshly computed state.

    Args:
        c: the state.
        t: its time.
        bound: blow-up bound on the 1-norm.
        warnings: warning list of the trajectory, appended to on clamping.

    Returns:
        The state with roundoff negatives clamped to zero.

    Raises:
        BlowUpError: if the state is not finite or its 1-norm exceeds ``bound``.
        NegativeConcentrationError: if a component is below the clamping threshold.
    """
    if not np.all(np.isfinite(c)) or np.sum(np.abs(c)) > bound:
        logger.error("Solution exceeded the 1-norm bound %g at t=%g", bound, t)
        raise BlowUpError(f"solution exceeded the 1-norm bound {bound:g} at t={t:g}")
    if np.any(c < 0):
        if np.any(c < -NEGATIVE_CLAMP_THRESHOLD):
            logger.error("Negative concentration %g at t=%g", float(np.min(c)), t)
            raise NegativeConcentrationError(
                f"concentration {float(np.min(c)):g} below zero at t={t:g}"
            )
        if not warnings:
            logger.warning("Clamping roundoff negatives to zero at t=%g", t)
        warnings.append(f"clamped roundoff negative {float(np.min(c)):.3g} to 0 at t={t:.6g}")
        c = np.maximum(c, 0.0)
    return c


def integrate_ode(
    net: ReactionNetwork,
    c0: np.ndarray,
    T: float,
    dt: float = DEFAULT_DT,
    *,
    grid: typing.Optional[np.ndarray] = None,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> Trajectory:
    """Integrate the mass-action equation with fixed-step classical RK4.

    Without ``grid`` every step is recorded on a uniform grid with ``ceil(T / dt)`` steps.
    With ``grid`` each interval is split into equal steps no longer than ``dt`` and only
    the grid points are recorded.

    Args:
        net: the network.
        c0: nonnegative initial concentrations.
        T: horizon, nonnegative.
        dt: largest step size.
        grid: optional output grid, increasing from 0 to T.
        blowup_bound: abort once the 1-norm of the state exceeds this.

    Returns:
        The sampled trajectory.

    Raises:
        ValueError: if ``T`` is negative, ``dt`` is not positive or the grid is malformed.
    """
    # pylint: disable=invalid-name
    if T < 0 or dt <= 0:
        raise ValueError(f"need T >= 0 and dt > 0, got T={T}, dt={dt}")
    if grid is None:
        steps = max(1, math.ceil(T / dt - 1e-9)) if T > 0 else 0
        grid = np.linspace(0.0, T, steps + 1)
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("output grid must start at 0 and increase strictly")
    c = np.asarray(c0, dtype=float).copy()
    warnings: typing.List[str] = []
    states = np.empty((len(grid), net.dimension))
    states[0] = c
    for index in range(1, len(grid)):
        span = grid[index] - grid[index - 1]
        substeps = max(1, math.ceil(span / dt - 1e-9))
        h = span / substeps
        for step in range(substeps):
            c = _rk4_step(net, c, h)
            c = _guard(c, grid[index - 1] + (step + 1) * h, blowup_bound, warnings)
        states[index] = c
    logger.debug("integrated %d grid points up to T=%g with dt=%g", len(grid), T, dt)
    return Trajectory(times=grid, states=states, species=net.species, warnings=warnings)
