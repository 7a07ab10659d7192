"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class TypoAttackError(Exception):
    """Base class for all toolkit errors."""


class DataError(TypoAttackError, ValueError):
    """Malformed or inconsistent input data (corpus, vocabulary, checkpoint, traces)."""


class CheckpointError(DataError):
    """A checkpoint file could not be read or does not match the expected model."""


class NumericalError(TypoAttackError, ArithmeticError):
    """Non-finite values appeared in parameters, activations or the loss."""
