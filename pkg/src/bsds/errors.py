"""Exception hierarchy shared by every module."""


class BsdsError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(BsdsError, ValueError):
    """Inputs are shaped wrong: out-of-range indices, width mismatch, misaligned arrays."""


class ArgumentError(BsdsError, ValueError):
    """An argument is well-formed but not acceptable (empty list, no hits, ...)."""


class InputError(BsdsError, ValueError):
    """A file or config could not be ingested. Message names the offending row/column."""


class ContractViolation(BsdsError, RuntimeError):
    """A protocol rule was broken, e.g. a label queried for an unselected candidate."""


class TrainingError(BsdsError, RuntimeError):
    """Gradient training produced non-finite values."""
