"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class RclstmError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigurationError(RclstmError, ValueError):
    """Invalid sizes, dimensions or settings."""

    exit_code = 3


class InputError(RclstmError, ValueError):
    """Data that violates an operation's preconditions (too short, mismatched, silent)."""

    exit_code = 4


class ContractError(InputError):
    """An object is in the wrong state for the requested operation."""


class NumericalError(RclstmError, ArithmeticError):
    """Non-finite values appeared during a computation."""

    exit_code = 5


class AudioIOError(RclstmError, OSError):
    """File could not be read, written or decoded."""

    exit_code = 6
