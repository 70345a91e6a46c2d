"""Complex ratio mask speech enhancement with coupled real LSTMs."""

from rclstm.errors import (
    AudioIOError,
    ConfigurationError,
    ContractError,
    InputError,
    NumericalError,
    RclstmError,
)

__version__ = "0.1.0"

__all__ = [
    "AudioIOError",
    "ConfigurationError",
    "ContractError",
    "InputError",
    "NumericalError",
    "RclstmError",
]
