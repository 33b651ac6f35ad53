"""Runtime values, environments and closures.

Numbers are plain ``int``/``float``, strings are ``str`` and booleans are
``bool``; every other value kind has a small immutable class here. Because
``True == 1`` in Python, structural comparison must always go through
:func:`values_equal` rather than ``==`` on raw values.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Callable, Iterator, Mapping

from .errors import (
    DuplicateArgument,
    RedefinitionOfBuiltin,
    UnboundSymbol,
    UnknownNamedArgument,
)

if TYPE_CHECKING:
    from .syntax import Expr


class NilType:
    __slots__ = ()
    _instance: NilType | None = None

    def __new__(cls) -> NilType:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "#nil"

    def __bool__(self) -> bool:
        raise TypeError("#nil has no truth value")

    def __reduce__(self):
        return (NilType, ())


NIL = NilType()


@dataclass(frozen=True)
class Key:
    name: str  # without the leading colon

    def __repr__(self) -> str:
        return f":{self.name}"


@dataclass(frozen=True)
class Sym:
    """A symbol reified by quotation."""

    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class Pair:
    key: Key
    value: Any

    def __eq__(self, other: object) -> bool:
        return values_equal(self, other)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return display(self)


@dataclass(frozen=True, eq=False)
class ListLit:
    items: tuple = ()

    @classmethod
    def of(cls, *items: Any) -> ListLit:
        return cls(tuple(items))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Any]:
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __eq__(self, other: object) -> bool:
        return values_equal(self, other)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return display(self)

    @property
    def is_pair_list(self) -> bool:
        return bool(self.items) and all(isinstance(x, Pair) for x in self.items)


@dataclass(frozen=True, eq=False)
class Code:
    """Quoted code that is not plain data (calls, pipes)."""

    expr: Expr

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Code) and self.expr == other.expr

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Docstring:
    signature: str
    types: tuple[str, ...] = ()
    description: str = ""
    examples: str = ""

    def render(self) -> str:
        lines = [f"FUNCTION SIGNATURE: {self.signature}", "TYPES:"]
        lines += [f"  - {t}" for t in self.types] or ["  (none)"]
        lines.append("DESCRIPTION:")
        lines += [f"  {ln}" for ln in self.description.strip().splitlines()]
        lines.append("EXAMPLE USAGE:")
        lines += [f"  {ln}" for ln in self.examples.strip().splitlines()] or ["  (none)"]
        return "\n".join(lines)


@dataclass(frozen=True)
class Param:
    name: str
    default: Expr | None = None

    @property
    def required(self) -> bool:
        return self.default is None


@dataclass(frozen=True)
class Thunk:
    """An unevaluated argument handed to a non-strict closure."""

    expr: Expr
    env: Environment


@dataclass(frozen=True, eq=False)
class Closure:
    params: tuple[Param, ...]
    body: Expr | None = None
    impl: Callable[..., Any] | None = None
    env: Environment | None = None
    strict: bool = True
    bound: Mapping[str, Any] = field(default_factory=dict)
    name: str | None = None
    doc: Docstring | None = None

    def param(self, name: str) -> Param | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    @property
    def unbound(self) -> list[Param]:
        return [p for p in self.params if p.name not in self.bound]

    @property
    def ready(self) -> bool:
        return all(p.name in self.bound for p in self.params if p.required)

    def __repr__(self) -> str:
        return display(self)


def make_partial(closure: Closure, newly_bound: Mapping[str, Any]) -> Closure:
    """Return a copy of ``closure`` with extra arguments captured."""
    for name in newly_bound:
        if closure.param(name) is None:
            raise UnknownNamedArgument(
                f"{closure_label(closure)} has no parameter :{name}", context=closure.doc
            )
        if name in closure.bound:
            raise DuplicateArgument(
                f"argument :{name} supplied twice to {closure_label(closure)}",
                context=closure.doc,
            )
    if not newly_bound:
        return replace(closure)
    merged = dict(closure.bound)
    merged.update(newly_bound)
    return replace(closure, bound=merged)


def closure_label(c: Closure) -> str:
    return c.name or "anonymous closure"


class Environment:
    """A frame of bindings chained to its lexical parent."""

    def __init__(
        self,
        parent: Environment | None = None,
        protected: frozenset[str] = frozenset(),
    ):
        self.parent = parent
        self.frame: dict[str, Any] = {}
        self.protected = protected
        self._lock = threading.Lock()

    def lookup(self, name: str) -> Any:
        env: Environment | None = self
        while env is not None:
            try:
                return env.frame[name]
            except KeyError:
                env = env.parent
        raise UnboundSymbol(f"unbound symbol '{name}'")

    def find(self, name: str) -> Environment | None:
        env: Environment | None = self
        while env is not None:
            if name in env.frame:
                return env
            env = env.parent
        return None

    def define(self, name: str, value: Any) -> Any:
        if name in self.protected:
            raise RedefinitionOfBuiltin(f"cannot redefine builtin '{name}'")
        with self._lock:
            self.frame[name] = value
        return value

    def install(self, name: str, value: Any) -> None:
        """Bind without the builtin guard; used when populating a frame."""
        with self._lock:
            self.frame[name] = value

    def child(self) -> Environment:
        return Environment(self)

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return dict(self.frame)

    def restore(self, snap: Mapping[str, Any]) -> None:
        with self._lock:
            self.frame.clear()
            self.frame.update(snap)


def is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def values_equal(a: Any, b: Any) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if is_num(a) or is_num(b):
        return is_num(a) and is_num(b) and a == b
    if isinstance(a, Closure) or isinstance(b, Closure):
        return a is b
    if isinstance(a, ListLit):
        return (
            isinstance(b, ListLit)
            and len(a.items) == len(b.items)
            and all(values_equal(x, y) for x, y in zip(a.items, b.items))
        )
    if isinstance(a, Pair):
        return isinstance(b, Pair) and a.key == b.key and values_equal(a.value, b.value)
    if isinstance(a, Code):
        return a == b
    return type(a) is type(b) and a == b


def type_name(v: Any) -> str:
    if isinstance(v, bool):
        return "PelBool"
    if is_num(v):
        return "PelNum"
    if isinstance(v, str):
        return "PelString"
    if v is NIL:
        return "PelNil"
    if isinstance(v, Key):
        return "PelKey"
    if isinstance(v, Pair):
        return "PelPair"
    if isinstance(v, ListLit):
        return "PelListLiteral"
    if isinstance(v, Closure):
        return "PelClosure"
    if isinstance(v, Sym):
        return "PelSymbol"
    return "PelCode"


def format_number(x: int | float) -> str:
    if isinstance(x, float):
        if math.isfinite(x) and x.is_integer() and abs(x) < 1e16:
            return str(int(x))
        return repr(x)
    return str(x)


def display(v: Any) -> str:
    """Canonical printed form of a value (strings quoted)."""
    if isinstance(v, bool):
        return "#t" if v else "#f"
    if is_num(v):
        return format_number(v)
    if isinstance(v, str):
        return f'"{v}"'
    if v is NIL:
        return "#nil"
    if isinstance(v, Key):
        return f":{v.name}"
    if isinstance(v, Pair):
        return f":{v.key.name} {display(v.value)}"
    if isinstance(v, ListLit):
        return "[" + " ".join(display(x) for x in v.items) + "]"
    if isinstance(v, Closure):
        return f"#<closure {v.name or 'anon'} {len(v.params)}>"
    if isinstance(v, Sym):
        return v.name
    if isinstance(v, Code):
        from .syntax import pretty

        return "'" + pretty(v.expr)
    return repr(v)


def to_text(v: Any) -> str:
    """Display form used by print: bare strings are written without quotes."""
    return v if isinstance(v, str) else display(v)
