# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Reaction network model: complexes, reactions, linkage classes and weak reversibility."""

import dataclasses
import functools
import logging
import typing

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

EMPTY_COMPLEX_LABEL = "0"


@dataclasses.dataclass(frozen=True)
class Complex:
    """A nonnegative integer combination of species.

    Attributes:
        counts: multiplicity of each species, in species declaration order.
    """

    counts: typing.Tuple[int, ...]

    def __post_init__(self) -> None:
        """Validate the multiplicities.

        Raises:
            ValueError: if a multiplicity is negative.
        """
        if any(count < 0 for count in self.counts):
            raise ValueError(f"complex with negative multiplicity: {self.counts}")

    @property
    def order(self) -> int:
        """Order of the complex, the 1-norm of its stoichiometric vector.

        Returns:
            Sum of all multiplicities.
        """
        return sum(self.counts)

    @property
    def is_higher_order(self) -> bool:
        """Whether the complex has order at least two and yields a nonlinear monomial.

        Returns:
            True if the order is two or more.
        """
        return self.order >= 2

    def as_array(self) -> np.ndarray:
        """Stoichiometric vector of the complex.

        Returns:
            Integer vector of length d.
        """
        return np.asarray(self.counts, dtype=np.int64)


def complex_label(complex_: Complex, species: typing.Sequence[str]) -> str:
    """Render a complex the way it is written in a network file.

    Args:
        complex_: the complex to render.
        species: species names in declaration order.

    Returns:
        Text such as ``2X+Y``, or ``0`` for the empty complex.
    """
    terms = []
    for name, count in zip(species, complex_.counts):
        if count == 1:
            terms.append(name)
        elif count > 1:
            terms.append(f"{count}{name}")
    return "+".join(terms) if terms else EMPTY_COMPLEX_LABEL


@dataclasses.dataclass(frozen=True)
class Reaction:
    """A reaction between two distinct complexes.

    Attributes:
        source: the source complex y_k.
        product: the product complex y_k'.
        rate: the mass-action rate constant.
    """

    source: Complex
    product: Complex
    rate: float

    def __post_init__(self) -> None:
        """Validate the reaction.

        Raises:
            ValueError: if source equals product, dimensions differ or the rate is invalid.
        """
        if self.source == self.product:
            raise ValueError("source equals product")
        if len(self.source.counts) != len(self.product.counts):
            raise ValueError("source and product complexes have different dimensions")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"rate constant must be a finite nonnegative real, got {self.rate}")


def reaction_vector(reaction: Reaction) -> np.ndarray:
    """Net change of the state when the reaction fires.

    Args:
        reaction: the reaction.

    Returns:
        Integer vector product minus source.
    """
    return reaction.product.as_array() - reaction.source.as_array()


@dataclasses.dataclass(frozen=True)
class ReactionNetwork:
    """Species, complexes and reactions of a mass-action reaction network.

    Build instances with :meth:`ReactionNetwork.from_reactions`, which derives the complexes.

    Attributes:
        species: species names; their order fixes the coordinate system.
        reactions: the reactions.
        complexes: each complex appearing in a reaction, exactly once, by first appearance.
    """

    species: typing.Tuple[str, ...]
    reactions: typing.Tuple[Reaction, ...]
    complexes: typing.Tuple[Complex, ...]

    @classmethod
    def from_reactions(
        cls, species: typing.Sequence[str], reactions: typing.Sequence[Reaction]
    ) -> "ReactionNetwork":
        """Build a network, deduplicating complexes by exact vector equality.

        Args:
            species: species names.
            reactions: reactions over those species.

        Returns:
            The network.

        Raises:
            ValueError: if there are no species or a complex has the wrong dimension.
        """
        if not species:
            raise ValueError("a network needs at least one species")
        complexes: typing.Dict[Complex, None] = {}
        for reaction in reactions:
            for complex_ in (reaction.source, reaction.product):
                if len(complex_.counts) != len(species):
                    raise ValueError(
                        f"complex {complex_.counts} does not match {len(species)} species"
                    )
                complexes.setdefault(complex_, None)
        return cls(
            species=tuple(species), reactions=tuple(reactions), complexes=tuple(complexes)
        )

    @property
    def dimension(self) -> int:
        """Number of species d.

        Returns:
            The number of species.
        """
        return len(self.species)

    @functools.cached_property
    def complex_index(self) -> typing.Dict[Complex, int]:
        """Position of each complex in :attr:`complexes`.

        Returns:
            Mapping from complex to index.
        """
        return {complex_: index for index, complex_ in enumerate(self.complexes)}

    @functools.cached_property
    def source_matrix(self) -> np.ndarray:
        """Source complexes stacked as rows (K x d).

        Returns:
            Integer matrix of source stoichiometries.
        """
        return self._stack(reaction.source for reaction in self.reactions)

    @functools.cached_property
    def product_matrix(self) -> np.ndarray:
        """Product complexes stacked as rows (K x d).

        Returns:
            Integer matrix of product stoichiometries.
        """
        return self._stack(reaction.product for reaction in self.reactions)

    @functools.cached_property
    def stoichiometry(self) -> np.ndarray:
        """Reaction vectors stacked as rows (K x d).

        Returns:
            Integer matrix of reaction vectors.
        """
        return self.product_matrix - self.source_matrix

    @functools.cached_property
    def rates(self) -> np.ndarray:
        """Rate constants in reaction order.

        Returns:
            Float vector of length K.
        """
        return np.array([reaction.rate for reaction in self.reactions], dtype=float)

    @functools.cached_property
    def source_index(self) -> np.ndarray:
        """Index of the source complex of each reaction.

        Returns:
            Integer vector of length K.
        """
        return np.array(
            [self.complex_index[reaction.source] for reaction in self.reactions], dtype=np.int64
        )

    @functools.cached_property
    def product_index(self) -> np.ndarray:
        """Index of the product complex of each reaction.

        Returns:
            Integer vector of length K.
        """
        return np.array(
            [self.complex_index[reaction.product] for reaction in self.reactions], dtype=np.int64
        )

    def _stack(self, complexes: typing.Iterable[Complex]) -> np.ndarray:
        """Stack complexes into a K x d integer matrix.

        Args:
            complexes: one complex per reaction.

        Returns:
            The stacked matrix, shaped (0, d) for a network without reactions.
        """
        rows = [complex_.counts for complex_ in complexes]
        if not rows:
            return np.zeros((0, self.dimension), dtype=np.int64)
        return np.array(rows, dtype=np.int64)

    def label(self, complex_: Complex) -> str:
        """Render a complex of this network.

        Args:
            complex_: the complex.

        Returns:
            The complex written with this network's species names.
        """
        return complex_label(complex_, self.species)

    def reaction_graph(self) -> nx.MultiDiGraph:
        """Directed reaction graph on complex indices.

        Returns:
            Graph with one node per complex and one edge per reaction.
        """
        graph = nx.MultiDiGraph()
        graph.add_nodes_from(range(len(self.complexes)))
        for source, product, rate in zip(self.source_index, self.product_index, self.rates):
            graph.add_edge(int(source), int(product), rate=float(rate))
        return graph


def linkage_classes(net: ReactionNetwork) -> typing.List[typing.List[int]]:
    """Connected components of the undirected reaction graph.

    Args:
        net: the network.

    Returns:
        Complex indices of each class, sorted, classes ordered by their first complex.
    """
    undirected = nx.Graph(net.reaction_graph().to_undirected())
    classes = [sorted(component) for component in nx.connected_components(undirected)]
    return sorted(classes, key=lambda component: component[0])


def is_weakly_reversible(net: ReactionNetwork) -> bool:
    """Check that every linkage class is strongly connected.

    Args:
        net: the network.

    Returns:
        True if the network is weakly reversible.
    """
    graph = nx.DiGraph(net.reaction_graph())
    for component in linkage_classes(net):
        if not nx.is_strongly_connected(graph.subgraph(component)):
            logger.debug("linkage class %s is not strongly connected", component)
            return False
    return True


def network_order(net: ReactionNetwork) -> int:
    """Largest order over all complexes.

    Args:
        net: the network.

    Returns:
        max of ``|y|_1`` over the complexes, 0 for a network without complexes.
    """
    return max((complex_.order for complex_ in net.complexes), default=0)


@dataclasses.dataclass(frozen=True)
class InitialCondition:
    """Initial concentrations, equivalently the Poisson means of the initial distribution.

    Attributes:
        species: species names in the network's order.
        values: strictly positive value per species.
    """

    species: typing.Tuple[str, ...]
    values: typing.Tuple[float, ...]

    def as_array(self) -> np.ndarray:
        """Initial values as a vector.

        Returns:
            Float vector of length d.
        """
        return np.asarray(self.values, dtype=float)
