# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Parser and validator for the ``.crn`` reaction network language.

A network file is a sequence of statements, one per line or separated by ``;``::

    # dimer exchange
    species X, Y
    2X <-> 2Y : 4, 1
    0 <-> X   : 1, 0.5
    init X = 1, Y = 2

``#`` starts a comment, ``0`` is the empty complex, ``->`` takes one rate and ``<->``
takes a forward and a reverse rate and expands to two reactions.
"""

import logging
import math
import pathlib
import re
import sys
import typing

from exceptions import NetworkParseError
from network import Complex, InitialCondition, Reaction, ReactionNetwork
from types_ import NetworkSource, ParseDiagnostic, ParseResult

logger = logging.getLogger(__name__)

ERROR = "error"
WARNING = "warning"

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_NAME_RE = re.compile(rf"^{_NAME}$")
_TERM_RE = re.compile(rf"^(?P<coeff>\d+)?\s*\*?\s*(?P<name>{_NAME})$")
_REACTION_RE = re.compile(
    r"^(?P<lhs>[^<>:-]*?)\s*(?P<arrow><->|->)\s*(?P<rhs>[^:]*?)\s*:(?P<rates>.*)$"
)
_ASSIGNMENT_RE = re.compile(rf"^(?P<name>{_NAME})\s*=\s*(?P<value>\S+)$")
# Largest multiplicity of a species in a complex, keeps stoichiometry in int64 arithmetic.
MAX_COEFFICIENT = 2**31 - 1


class _Statement(typing.NamedTuple):
    """A single statement of the source text."""

    line: int
    text: str


def read_source(path: typing.Union[str, pathlib.Path]) -> typing.Tuple[NetworkSource, list]:
    """Read a network file, or stdin when the path is ``-``.

    Args:
        path: file path or ``-``.

    Returns:
        The source and the diagnostics produced while decoding it.
    """
    if str(path) == "-":
        raw = sys.stdin.buffer.read()
        origin = "<stdin>"
    else:
        raw = pathlib.Path(path).read_bytes()
        origin = str(path)
    try:
        return NetworkSource(text=raw.decode("utf-8"), origin=origin), []
    except UnicodeDecodeError as exc:
        logger.error("Network source %s is not valid UTF-8: %s", origin, exc)
        return NetworkSource(text="", origin=origin), [
            ParseDiagnostic(ERROR, 1, f"source is not valid UTF-8: {exc.reason}")
        ]


def _statements(text: str) -> typing.List[_Statement]:
    """Split source text into statements, dropping comments and blank pieces.

    Args:
        text: source text.

    Returns:
        Statements with their 1-based line numbers.
    """
    statements = []
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        for piece in line.split(";"):
            piece = piece.strip()
            if piece:
                statements.append(_Statement(number, piece))
    return statements


def _parse_number(text: str) -> typing.Optional[float]:
    """Parse a finite float.

    Args:
        text: the literal.

    Returns:
        The value, None if the literal is not a finite number.
    """
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


class _Parser:
    """Stateful single-use parser for one source text."""

    def __init__(self, source: NetworkSource):
        """Initialize the instance.

        Args:
            source: the text to parse.
        """
        self.source = source
        self.diagnostics: typing.List[ParseDiagnostic] = []
        self.species: typing.List[str] = []
        self.species_lines: typing.Dict[str, int] = {}
        self.reactions: typing.List[Reaction] = []
        self.reaction_lines: typing.List[int] = []
        self.init: typing.Dict[str, float] = {}
        self.saw_init = False

    def error(self, line: int, message: str) -> None:
        """Record an error.

        Args:
            line: 1-based line number.
            message: explanation.
        """
        self.diagnostics.append(ParseDiagnostic(ERROR, line, message))

    def run(self) -> ParseResult:
        """Parse the whole source.

        Returns:
            The parse result.
        """
        statements = _statements(self.source.text)
        for statement in statements:
            keyword = statement.text.split(None, 1)[0]
            if keyword == "species":
                self._species(statement)
        if not self.species:
            self.error(1, "no species declared")
        for statement in statements:
            keyword = statement.text.split(None, 1)[0]
            if keyword == "species":
                continue
            if keyword == "init":
                self._init(statement)
            elif "->" in statement.text:
                self._reaction(statement)
            else:
                self.error(statement.line, f"unrecognised statement: {statement.text!r}")
        initial = self._initial_condition(statements)
        if any(d.severity == ERROR for d in self.diagnostics):
            return ParseResult(False, None, None, self._sorted())
        net = ReactionNetwork.from_reactions(self.species, self.reactions)
        self.diagnostics.extend(
            validate_network(
                net, reaction_lines=self.reaction_lines, species_lines=self.species_lines
            )
        )
        if any(d.severity == ERROR for d in self.diagnostics):
            return ParseResult(False, None, None, self._sorted())
        return ParseResult(True, net, initial, self._sorted())

    def _sorted(self) -> typing.List[ParseDiagnostic]:
        """Diagnostics in source order.

        Returns:
            Diagnostics sorted by line, stable within a line.
        """
        return sorted(self.diagnostics, key=lambda diagnostic: diagnostic.line)

    def _species(self, statement: _Statement) -> None:
        """Handle a ``species`` declaration.

        Args:
            statement: the statement.
        """
        body = statement.text[len("species") :].strip()
        if not body:
            self.error(statement.line, "empty species declaration")
            return
        for name in (part.strip() for part in body.split(",")):
            if not _NAME_RE.match(name):
                self.error(statement.line, f"invalid species name {name!r}")
            elif name in self.species_lines:
                self.error(statement.line, f"duplicate species declaration {name!r}")
            else:
                self.species.append(name)
                self.species_lines[name] = statement.line

    def _complex(self, text: str, line: int) -> typing.Optional[Complex]:
        """Parse one side of a reaction.

        Args:
            text: the complex text.
            line: line number for diagnostics.

        Returns:
            The complex, None on error.
        """
        text = text.strip()
        counts = [0] * len(self.species)
        if text == "0":
            return Complex(tuple(counts))
        if not text:
            self.error(line, "empty complex, write 0 for the empty complex")
            return None
        ok = True
        for term in (part.strip() for part in text.split("+")):
            match = _TERM_RE.match(term)
            if not match:
                self.error(line, f"malformed complex term {term!r}")
                ok = False
                continue
            name = match.group("name")
            coeff = int(match.group("coeff")) if match.group("coeff") else 1
            if name not in self.species_lines:
                self.error(line, f"unknown species {name!r}")
                ok = False
            elif coeff == 0:
                self.error(line, f"zero coefficient in term {term!r}")
                ok = False
            elif counts[self.species.index(name)] + coeff > MAX_COEFFICIENT:
                self.error(line, f"coefficient of {name!r} exceeds {MAX_COEFFICIENT}")
                ok = False
            else:
                counts[self.species.index(name)] += coeff
        return Complex(tuple(counts)) if ok else None

    def _rates(self, text: str, expected: int, line: int) -> typing.Optional[typing.List[float]]:
        """Parse the rate list after ``:``.

        Args:
            text: the text after the colon.
            expected: number of rates required by the arrow.
            line: line number for diagnostics.

        Returns:
            The rates, None on error.
        """
        parts = [part.strip() for part in text.split(",")]
        if len(parts) != expected or not all(parts):
            self.error(line, f"expected {expected} rate constant(s), got {text.strip()!r}")
            return None
        rates = []
        for part in parts:
            value = _parse_number(part)
            if value is None:
                self.error(line, f"non-numeric rate constant {part!r}")
                return None
            if value < 0:
                self.error(line, f"negative rate constant {part!r}")
                return None
            rates.append(value)
        return rates

    def _reaction(self, statement: _Statement) -> None:
        """Handle a reaction statement.

        Args:
            statement: the statement.
        """
        match = _REACTION_RE.match(statement.text)
        if not match:
            self.error(statement.line, f"malformed reaction {statement.text!r}, missing ': rate'?")
            return
        reversible = match.group("arrow") == "<->"
        source = self._complex(match.group("lhs"), statement.line)
        product = self._complex(match.group("rhs"), statement.line)
        rates = self._rates(match.group("rates"), 2 if reversible else 1, statement.line)
        if source is None or product is None or rates is None:
            return
        if source == product:
            self.error(statement.line, "source equals product")
            return
        self.reactions.append(Reaction(source, product, rates[0]))
        self.reaction_lines.append(statement.line)
        if reversible:
            self.reactions.append(Reaction(product, source, rates[1]))
            self.reaction_lines.append(statement.line)

    def _init(self, statement: _Statement) -> None:
        """Handle an ``init`` statement.

        Args:
            statement: the statement.
        """
        self.saw_init = True
        body = statement.text[len("init") :].strip()
        if not body:
            self.error(statement.line, "empty init statement")
            return
        for assignment in (part.strip() for part in body.split(",")):
            match = _ASSIGNMENT_RE.match(assignment)
            if not match:
                self.error(statement.line, f"malformed initial value {assignment!r}")
                continue
            name, value = match.group("name"), _parse_number(match.group("value"))
            if name not in self.species_lines:
                self.error(statement.line, f"unknown species {name!r}")
            elif name in self.init:
                self.error(statement.line, f"duplicate initial value for {name!r}")
            elif value is None or value <= 0:
                self.error(
                    statement.line,
                    f"initial value of {name!r} must be a strictly positive number",
                )
            else:
                self.init[name] = value

    def _initial_condition(
        self, statements: typing.List[_Statement]
    ) -> typing.Optional[InitialCondition]:
        """Assemble the initial condition once every statement was seen.

        Args:
            statements: all statements, used to place diagnostics.

        Returns:
            The initial condition, None on error.
        """
        last_line = statements[-1].line if statements else 1
        if not self.saw_init:
            self.error(last_line, "missing init block")
            return None
        missing = [name for name in self.species if name not in self.init]
        if missing:
            self.error(last_line, f"missing initial value for {', '.join(missing)}")
            return None
        return InitialCondition(
            species=tuple(self.species), values=tuple(self.init[name] for name in self.species)
        )


def parse_network(src: NetworkSource) -> ParseResult:
    """Parse a network source into a network and its initial condition.

    Never raises on bad input: every problem is reported as a diagnostic.

    Args:
        src: the source text.

    Returns:
        The parse result; ``success`` is False if any error diagnostic was produced.
    """
    result = _Parser(src).run()
    for diagnostic in result.diagnostics:
        logger.debug("%s:%s", src.origin, diagnostic)
    return result


def validate_network(
    net: ReactionNetwork,
    reaction_lines: typing.Sequence[int] = (),
    species_lines: typing.Optional[typing.Mapping[str, int]] = None,
) -> typing.List[ParseDiagnostic]:
    """Check the structural well-formedness of a network.

    Args:
        net: a structurally parsed network.
        reaction_lines: source line of each reaction, line 1 is used when missing.
        species_lines: source line of each species declaration.

    Returns:
        Errors for unused species and complexes, warnings for zero rate constants.
    """
    species_lines = species_lines or {}
    diagnostics = []
    used = net.source_matrix.sum(axis=0) + net.product_matrix.sum(axis=0)
    for index, name in enumerate(net.species):
        if not used[index]:
            diagnostics.append(
                ParseDiagnostic(
                    ERROR, species_lines.get(name, 1), f"species {name!r} appears in no complex"
                )
            )
    in_reaction = set(net.source_index.tolist()) | set(net.product_index.tolist())
    for index, complex_ in enumerate(net.complexes):
        if index not in in_reaction:
            diagnostics.append(
                ParseDiagnostic(ERROR, 1, f"complex {net.label(complex_)} appears in no reaction")
            )
    for index, reaction in enumerate(net.reactions):
        if reaction.rate == 0:
            line = reaction_lines[index] if index < len(reaction_lines) else 1
            diagnostics.append(
                ParseDiagnostic(
                    WARNING,
                    line,
                    f"reaction {net.label(reaction.source)} -> {net.label(reaction.product)}"
                    " has a zero rate constant",
                )
            )
    return diagnostics


def format_network(net: ReactionNetwork, initial: typing.Optional[InitialCondition] = None) -> str:
    """Render a network in canonical network-file form.

    Reversible pairs are written as two irreversible reactions so the text parses back to
    the same reaction list.

    Args:
        net: the network.
        initial: optional initial condition to append as an ``init`` statement.

    Returns:
        Network-file text.
    """
    lines = [f"species {', '.join(net.species)}"]
    for reaction in net.reactions:
        lines.append(
            f"{net.label(reaction.source)} -> {net.label(reaction.product)} : {reaction.rate!r}"
        )
    if initial is not None:
        values = ", ".join(
            f"{name} = {value!r}" for name, value in zip(initial.species, initial.values)
        )
        lines.append(f"init {values}")
    return "\n".join(lines) + "\n"


def load_network(
    path: typing.Union[str, pathlib.Path],
) -> typing.Tuple[ReactionNetwork, InitialCondition, typing.List[ParseDiagnostic]]:
    """Read, parse and validate a network file.

    Args:
        path: file path or ``-`` for stdin.

    Returns:
        The network, its initial condition and any warnings.

    Raises:
        NetworkParseError: if the file cannot be read or parsed.
    """
    try:
        source, diagnostics = read_source(path)
    except OSError as exc:
        logger.error("Cannot read network file %s: %s", path, exc)
        raise NetworkParseError(f"cannot read {path}: {exc.strerror}") from exc
    if diagnostics:
        raise NetworkParseError(f"cannot decode {path}", diagnostics)
    result = parse_network(source)
    if not result.success:
        raise NetworkParseError(f"invalid network file {path}", result.diagnostics)
    logger.info(
        "Loaded %s: %d species, %d reactions",
        source.origin,
        result.network.dimension,
        len(result.network.reactions),
    )
    return result.network, result.initial, result.diagnostics
