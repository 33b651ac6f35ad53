"""AST node types and the canonical pretty-printer."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterator, Union

from .core import NIL, Key, display, values_equal
from .errors import Span

CARET = "^"


class Expr:
    span: Span | None


@dataclass(eq=False)
class Atom(Expr):
    value: Any
    span: Span | None = field(default=None, repr=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Atom) and values_equal(self.value, other.value)


@dataclass
class Symbol(Expr):
    name: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class PairExpr(Expr):
    """A key folded together with the element following it.

    ``value`` is None when the key stood alone (implicitly paired with #nil).
    """

    key: str
    value: Expr | None
    span: Span | None = field(default=None, compare=False, repr=False)


Element = Union[Expr, PairExpr]


@dataclass
class Call(Expr):
    op: Expr
    args: list[Element]
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class LiteralList(Expr):
    items: list[Element]
    span: Span | None = field(default=None, compare=False, repr=False)
    # set for the list synthesised around `(do a b c)` arguments
    implicit: bool = field(default=False, compare=False, repr=False)


@dataclass
class Quoted(Expr):
    inner: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class PipeChain(Expr):
    stages: list[Expr]
    span: Span | None = field(default=None, compare=False, repr=False)
    pipe_spans: list[Span] = field(default_factory=list, compare=False, repr=False)


def children(e: Element) -> Iterator[Element]:
    if isinstance(e, Call):
        yield e.op
        yield from e.args
    elif isinstance(e, LiteralList):
        yield from e.items
    elif isinstance(e, Quoted):
        yield e.inner
    elif isinstance(e, PipeChain):
        yield from e.stages
    elif isinstance(e, PairExpr) and e.value is not None:
        yield e.value


def walk(e: Element, into_quotes: bool = True) -> Iterator[Element]:
    yield e
    if isinstance(e, Quoted) and not into_quotes:
        return
    for c in children(e):
        yield from walk(c, into_quotes)


def nesting_depth(e: Element) -> int:
    """Bracket nesting as written in source: atoms are 0, `[1 2]` is 1."""
    if isinstance(e, (Call, LiteralList)):
        inner = max((nesting_depth(c) for c in _nested(e)), default=0)
        if isinstance(e, LiteralList) and e.implicit:
            return inner
        if isinstance(e, Call):
            return 1 + max(inner, nesting_depth(e.op))
        return 1 + inner
    if isinstance(e, Quoted):
        return nesting_depth(e.inner)
    if isinstance(e, PipeChain):
        return max(nesting_depth(s) for s in e.stages)
    if isinstance(e, PairExpr):
        return 0 if e.value is None else nesting_depth(e.value)
    return 0


def _nested(e: Call | LiteralList) -> list[Element]:
    return list(e.args) if isinstance(e, Call) else list(e.items)


def pretty(e: Element) -> str:
    """Canonical source form; re-parsing it yields an equal tree."""
    if isinstance(e, Atom):
        if e.value is NIL:
            return "#nil"
        if isinstance(e.value, Key):
            return f":{e.value.name}"
        if isinstance(e.value, float) and "e" in display(e.value):
            return format(Decimal(repr(e.value)), "f")
        return display(e.value)
    if isinstance(e, Symbol):
        return e.name
    if isinstance(e, PairExpr):
        if e.value is None:
            return f":{e.key}"
        return f":{e.key} {pretty(e.value)}"
    if isinstance(e, Call):
        parts = [pretty(e.op)] + [pretty(a) for a in e.args]
        return "(" + " ".join(parts) + ")"
    if isinstance(e, LiteralList):
        return "[" + " ".join(pretty(x) for x in e.items) + "]"
    if isinstance(e, Quoted):
        return "'" + pretty(e.inner)
    if isinstance(e, PipeChain):
        return " ▷ ".join(pretty(s) for s in e.stages)
    raise TypeError(f"not an expression: {e!r}")
