# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""User-defined exceptions used by drnet."""
import typing

__all__ = [
    "DrnetError",
    "InputError",
    "NetworkParseError",
    "NonPositiveInitialError",
    "NotOneSpeciesError",
    "NotBinaryError",
    "InsufficientSamplesError",
    "BoxTooSmallError",
    "SingularReductionError",
    "RuntimeOverflowError",
    "EventOverflowError",
    "BlowUpError",
    "NegativeConcentrationError",
]


class DrnetError(Exception):
    """Base exception of drnet, carrying the process exit code of the failure.

    ``exit_code`` is the status the command line front end terminates with when the
    exception escapes a subcommand. Do not instantiate this class directly, use subclass
    instead.
    """

    exit_code = 1

    def __init__(self, message: str):
        """Initialize the instance.

        Args:
            message: A message explaining the reason for given exception.

        Raises:
            TypeError: if same base class is used to instantiate base class.
        """
        # Using type is necessary to check types between subclasses and superclass.
        # pylint: disable=unidiomatic-typecheck
        if type(self) is DrnetError:
            raise TypeError("Instantiating a base class: DrnetError")
        super().__init__(message)
        self.msg = message


class InputError(DrnetError):
    """Invalid input: a malformed network file or a precondition violated by the caller."""

    exit_code = 1


class NetworkParseError(InputError):
    """The network source could not be turned into a network.

    Attributes:
        diagnostics: the error and warning diagnostics produced while parsing.
    """

    def __init__(self, message: str, diagnostics: typing.Sequence[typing.Any] = ()):
        """Initialize the instance.

        Args:
            message: A message explaining the reason for given exception.
            diagnostics: the parse diagnostics explaining the failure.
        """
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class NonPositiveInitialError(InputError):
    """An initial concentration or Poisson mean is not strictly positive."""


class NotOneSpeciesError(InputError):
    """A one-species decision was requested for a network with more than one species."""


class NotBinaryError(InputError):
    """The diffusion matrix was requested for a network with a complex of order above two."""


class InsufficientSamplesError(InputError):
    """Fewer sample states than higher-order complexes were supplied to a rank check."""


class BoxTooSmallError(InputError):
    """A truncation box leaves more probability mass outside than the allowed budget."""


class SingularReductionError(DrnetError):
    """The path condition failed for a linkage class, the reduction cannot be linearized.

    Attributes:
        failing_complexes: indices of higher-order complexes that cannot reach an exit.
    """

    exit_code = 2

    def __init__(self, message: str, failing_complexes: typing.Sequence[int] = ()):
        """Initialize the instance.

        Args:
            message: A message explaining the reason for given exception.
            failing_complexes: complex indices whose rows failed the path condition.
        """
        super().__init__(message)
        self.failing_complexes = list(failing_complexes)


class RuntimeOverflowError(DrnetError):
    """A computation left the range it can be trusted in (blow-up, event cap)."""

    exit_code = 3


class EventOverflowError(RuntimeOverflowError):
    """A stochastic replicate fired more reactions than the configured cap.

    Attributes:
        replicate: index of the replicate that overflowed, None for a single run.
    """

    def __init__(self, message: str, replicate: typing.Optional[int] = None):
        """Initialize the instance.

        Args:
            message: A message explaining the reason for given exception.
            replicate: index of the offending replicate.
        """
        super().__init__(message)
        self.replicate = replicate


class BlowUpError(RuntimeOverflowError):
    """The deterministic solution exceeded the configured 1-norm bound."""


class NegativeConcentrationError(RuntimeOverflowError):
    """The integrator produced a component below the roundoff clamping threshold."""
