"""Exception hierarchy shared by all fusetree modules."""

from __future__ import annotations


class FusetreeError(Exception):
    """Base class for every error raised by this package."""


class OutOfBoundsError(FusetreeError):
    """A coordinate lies outside the tensor shape."""

    def __init__(self, coords, shape):
        super().__init__(f"coordinates {coords} out of bounds for shape {tuple(shape)}")
        self.coords = tuple(coords)
        self.shape = tuple(shape)


class RankMismatchError(FusetreeError):
    """A coordinate tuple or mode permutation has the wrong length."""


class ParseError(FusetreeError):
    """Malformed input text; carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateIndexError(FusetreeError):
    """The same iteration index appears twice within one tensor reference."""


class ExtentMismatchError(FusetreeError):
    """An index is used with two different extents."""

    def __init__(self, index, message=None):
        super().__init__(message or f"inconsistent extents for index '{index}'")
        self.index = index


class UnknownTensorError(FusetreeError):
    """A directive or binding names a tensor that is not in the network."""


class NotATreeError(FusetreeError):
    """The contractions do not form a single-rooted tree."""


class InvalidContractionError(FusetreeError):
    """A contraction violates a structural rule (e.g. free result index)."""


class TooLargeError(FusetreeError):
    """The instance exceeds the limits of an exhaustive routine."""


class SolveTimeout(FusetreeError):
    """The solver exceeded its time budget; the offending model is attached."""

    def __init__(self, budget, model=None):
        super().__init__(f"solve exceeded time budget of {budget:.3f}s")
        self.budget = budget
        self.model = model


class UnsatisfiableError(FusetreeError):
    """No schedule exists within the searched bound range."""


class MissingVariableError(FusetreeError):
    """A solution does not assign one of the model variables."""


class PrefixMismatchError(FusetreeError):
    """An index removal was requested but some loop order does not start with it."""


class MalformedScheduleError(FusetreeError):
    """A schedule-pair sequence cannot be turned into loop IR."""


class UnboundTensorError(FusetreeError):
    """The IR references a tensor with no binding."""


class ModeOrderMismatchError(FusetreeError):
    """A CSF layout is incompatible with the surrounding loop nest."""


class ShapeMismatchError(FusetreeError):
    """Two tensors that should be comparable have different shapes."""


class UnknownKindError(FusetreeError):
    """An unrecognized benchmark kind was requested."""
