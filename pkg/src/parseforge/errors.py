"""Exception hierarchy shared across the pipeline."""


class ParseforgeError(Exception):
    """Base class for all pipeline errors."""


class TraceFormatError(ParseforgeError):
    """Malformed trace text; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TraceEvalError(ParseforgeError):
    """Expression evaluation touched an input offset past the end of the file."""

    def __init__(self, offset, length):
        super().__init__(f"read of input offset {offset} past end of {length}-byte input")
        self.offset = offset
        self.length = length


class FormatError(ParseforgeError):
    """A reference oracle rejected the input file (bad magic, truncation, ...)."""


class GenerationError(ParseforgeError):
    """A corpus spec violates a format invariant."""


class SummarizeError(ParseforgeError):
    """A trace log could not be folded into loops."""


class InterpretError(ParseforgeError):
    """Structured failure while running an inferred parser.

    ``kind`` is one of: read-past-end, negative-output-index, unbound-symbol,
    output-cap.
    """

    def __init__(self, kind, message):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


class EmitError(ParseforgeError):
    """Source emission hit an expression node it cannot lower."""


class HeaderSizeError(ParseforgeError):
    """Tree construction could not find a separating predicate in the header."""


class ConvergenceError(ParseforgeError):
    """Log expansion failed to converge within the header-size schedule."""
