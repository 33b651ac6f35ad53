from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Source:
    """A named chunk of program text that spans point into."""

    text: str
    name: str = "<input>"

    def line(self, lineno: int) -> str:
        lines = self.text.split("\n")
        if 1 <= lineno <= len(lines):
            return lines[lineno - 1]
        return ""


@dataclass(frozen=True)
class Span:
    # start/end are character offsets (end exclusive); columns are 1-based inclusive
    start: int
    end: int
    line: int
    col: int
    end_line: int
    end_col: int
    source: Source | None = field(default=None, compare=False, repr=False)

    def merge(self, other: Span) -> Span:
        first, last = (self, other) if self.start <= other.start else (other, self)
        return Span(
            first.start,
            max(first.end, last.end),
            first.line,
            first.col,
            last.end_line if last.end >= first.end else first.end_line,
            last.end_col if last.end >= first.end else first.end_col,
            first.source,
        )

    def contains(self, other: Span) -> bool:
        return (
            self.source is other.source
            and self.start <= other.start
            and other.end <= self.end
        )

    @property
    def text(self) -> str:
        if self.source is None:
            return ""
        return self.source.text[self.start : self.end]


class PelException(Exception):
    """Base class for every error raised while lexing, parsing or running Pel."""

    phase = "eval"

    def __init__(self, message: str, span: Span | None = None, context: Any = None):
        super().__init__(message)
        self.message = message
        self.span = span
        self.context = context
        self.form_index: int | None = None
        # set when the input simply ended too early (more lines may fix it)
        self.incomplete = False

    def __str__(self) -> str:
        if self.span is None:
            return self.message
        return f"line {self.span.line}, col {self.span.col}: {self.message}"


class LexError(PelException):
    phase = "lex"


class ParseError(PelException):
    phase = "parse"


class UnboundSymbol(PelException):
    pass


class NotCallable(PelException):
    pass


class MixedArguments(PelException):
    pass


class TooManyArguments(PelException):
    pass


class UnknownNamedArgument(PelException):
    pass


class DuplicateArgument(PelException):
    pass


class TypeMismatch(PelException):
    pass


class ConditionNotBool(PelException):
    pass


class IndexOutOfRange(PelException):
    pass


class KeyNotFound(PelException):
    pass


class AtWithSlice(PelException):
    pass


class BadIndexType(PelException):
    pass


class PipeTargetNotCall(PelException):
    pass


class DefTargetNotSymbol(PelException):
    pass


class RedefinitionOfBuiltin(PelException):
    pass


class BadParamSpec(PelException):
    pass


class OddCaseBody(PelException):
    pass


class IterTargetNotList(PelException):
    pass


class IteratorNotSymbol(PelException):
    pass


class PreconditionFailed(PelException):
    pass


class BackendError(PelException):
    pass


class UnparseableFix(PelException):
    pass


class CoercionError(PelException):
    pass


class UnknownAgent(PelException):
    pass


class RouterCodeInvalid(PelException):
    pass


class MalformedOrg(PelException):
    phase = "load"


class CapabilityError(PelException):
    """Raised when a program is rejected by capability validation."""

    phase = "validate"

    def __init__(self, violations):
        first = violations[0]
        super().__init__(first.message, first.span)
        self.violations = list(violations)


class DepthTooLarge(PelException):
    phase = "grammar"
