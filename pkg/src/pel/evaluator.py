from __future__ import annotations

import sys
import threading
from typing import Any, TextIO

from .core import (
    NIL,
    Closure,
    Code,
    Environment,
    Key,
    ListLit,
    Pair,
    Sym,
    Thunk,
    display,
    is_num,
    closure_label,
    make_partial,
)
from .errors import (
    AtWithSlice,
    BadIndexType,
    DuplicateArgument,
    IndexOutOfRange,
    KeyNotFound,
    MixedArguments,
    NotCallable,
    PelException,
    PipeTargetNotCall,
    TooManyArguments,
    UnboundSymbol,
    UnknownNamedArgument,
)
from .syntax import (
    CARET,
    Atom,
    Call,
    Element,
    Expr,
    LiteralList,
    PairExpr,
    PipeChain,
    Quoted,
    Symbol,
)

MIXED_ARGS_MESSAGE = "Mixing named and positional arguments is not allowed."
LIST_PARAMS = ("at", "from", "to")

sys.setrecursionlimit(max(sys.getrecursionlimit(), 10000))


class Interpreter:
    """Evaluation context: global environment, LLM backend and output sink."""

    def __init__(self, backend=None, out: TextIO | None = None, max_tasks: int | None = None):
        from .builtins import BUILTINS

        self.backend = backend
        self.out = out
        self.max_tasks = max_tasks
        self.builtins = dict(BUILTINS)
        self.agents = None
        self._print_lock = threading.Lock()
        self.global_env = self.make_global_env()

    def make_global_env(self) -> Environment:
        env = Environment(protected=frozenset(self.builtins))
        for name, closure in self.builtins.items():
            env.install(name, closure)
        return env

    def write(self, text: str) -> None:
        out = self.out if self.out is not None else sys.stdout
        with self._print_lock:
            out.write(text)
            out.flush()

    def run(self, source: str, env: Environment | None = None) -> Any:
        """Parse and evaluate every top-level form, returning the last value."""
        from .parser import parse

        env = env or self.global_env
        value: Any = NIL
        for expr in parse(source):
            value = self.eval(expr, env)
        return value

    # -- evaluation -------------------------------------------------------

    def eval(self, expr: Element, env: Environment) -> Any:
        if isinstance(expr, Atom):
            return expr.value
        if isinstance(expr, Symbol):
            try:
                return env.lookup(expr.name)
            except UnboundSymbol as e:
                if expr.name == CARET:
                    e.message = "caret '^' used outside of a pipe stage"
                    e.args = (e.message,)
                e.span = expr.span
                raise
        if isinstance(expr, Call):
            return self.eval_call(expr, env)
        if isinstance(expr, PipeChain):
            return self.eval_pipe(expr, env)
        if isinstance(expr, LiteralList):
            return ListLit(tuple(self.eval(x, env) for x in expr.items))
        if isinstance(expr, PairExpr):
            value = NIL if expr.value is None else self.eval(expr.value, env)
            return Pair(Key(expr.key), value)
        if isinstance(expr, Quoted):
            return reify(expr.inner)
        raise TypeError(f"cannot evaluate {expr!r}")

    def eval_call(self, call: Call, env: Environment) -> Any:
        callee = self.eval(call.op, env)
        if not isinstance(callee, (Closure, ListLit)):
            raise NotCallable(
                f"{display(callee)} is not callable (the first element of (...) "
                "must evaluate to a closure or a literal list)",
                call.op.span or call.span,
            )
        named = [a for a in call.args if isinstance(a, PairExpr)]
        if named and len(named) != len(call.args):
            raise self._locate(MixedArguments(MIXED_ARGS_MESSAGE), call, callee)
        strict = isinstance(callee, ListLit) or callee.strict
        if named:
            kwargs = {}
            for a in named:
                value = self._arg(a.value, env, strict)
                if a.key in kwargs:
                    raise self._locate(
                        DuplicateArgument(f"argument :{a.key} given twice"), call, callee
                    )
                kwargs[a.key] = value
            positional: list[Any] = []
        else:
            kwargs = {}
            positional = [self._arg(a, env, strict) for a in call.args]
        try:
            if isinstance(callee, ListLit):
                return call_literal_list(callee, positional, kwargs)
            return self.apply(callee, positional, kwargs)
        except PelException as e:
            raise self._locate(e, call, callee)

    def _arg(self, expr: Expr | None, env: Environment, strict: bool) -> Any:
        if expr is None:
            return NIL if strict else Thunk(Atom(NIL), env)
        return self.eval(expr, env) if strict else Thunk(expr, env)

    @staticmethod
    def _locate(e: PelException, call: Call, callee: Any) -> PelException:
        if e.span is None:
            e.span = call.span
        if e.context is None and isinstance(callee, Closure) and callee.doc is not None:
            e.context = callee.doc
        return e

    def apply(self, callee: Closure, positional: list[Any], named: dict[str, Any]) -> Any:
        """Bind arguments; fire when every required parameter is bound."""
        if positional and named:
            raise MixedArguments(MIXED_ARGS_MESSAGE)
        if positional:
            slots = callee.unbound
            if len(positional) > len(slots):
                raise TooManyArguments(
                    f"{closure_label(callee)} takes {len(slots)} more argument(s) "
                    f"but {len(positional)} were given",
                    context=callee.doc,
                )
            new = {p.name: v for p, v in zip(slots, positional)}
        else:
            new = named
        bound = make_partial(callee, new)
        if not bound.ready:
            return bound
        return self.fire(bound)

    def fire(self, c: Closure) -> Any:
        args = dict(c.bound)
        def_env = c.env or self.global_env
        for p in c.params:
            if p.name not in args:
                args[p.name] = self.eval(p.default, def_env) if c.strict else Thunk(p.default, def_env)
        if c.impl is not None:
            return c.impl(self, args)
        frame = Environment(def_env)
        for name, value in args.items():
            frame.install(name, value)
        return self.eval(c.body, frame)

    def force(self, thunk: Thunk) -> Any:
        return self.eval(thunk.expr, thunk.env)

    # -- pipes --------------------------------------------------------------

    def eval_pipe(self, chain: PipeChain, env: Environment) -> Any:
        value = self.eval(chain.stages[0], env)
        for stage in chain.stages[1:]:
            value = self.eval(pipe_into(value, stage), env)
        return value


def pipe_into(value: Any, stage: Expr) -> Expr:
    """Rewrite ``stage`` so that it receives ``value``.

    Carets anywhere in the stage (outside quotes and nested pipe stages)
    receive the value; otherwise it becomes the first argument.
    """
    lit = Atom(value)
    if isinstance(stage, PipeChain):
        return PipeChain([pipe_into(value, stage.stages[0])] + stage.stages[1:], stage.span)
    if not isinstance(stage, (Call, LiteralList)):
        raise PipeTargetNotCall(
            f"cannot pipe into {_describe(stage)}; a pipe stage must be a call (...)",
            stage.span,
        )
    if has_caret(stage):
        return substitute_caret(stage, lit)
    if isinstance(stage, LiteralList):
        raise PipeTargetNotCall(
            "piping into a literal list needs a '^' placeholder", stage.span
        )
    return Call(stage.op, [lit] + list(stage.args), stage.span)


def _describe(e: Expr) -> str:
    if isinstance(e, Quoted):
        return "a quoted expression"
    if isinstance(e, Symbol):
        return f"the bare symbol '{e.name}'"
    return "an atom"


def has_caret(e: Element) -> bool:
    if isinstance(e, Symbol):
        return e.name == CARET
    if isinstance(e, Quoted) or isinstance(e, Atom):
        return False
    if isinstance(e, PipeChain):
        # later stages of a nested chain own their carets
        return has_caret(e.stages[0])
    if isinstance(e, PairExpr):
        return e.value is not None and has_caret(e.value)
    if isinstance(e, Call):
        return has_caret(e.op) or any(has_caret(a) for a in e.args)
    if isinstance(e, LiteralList):
        return any(has_caret(a) for a in e.items)
    return False


def substitute_caret(e: Element, lit: Atom) -> Element:
    if isinstance(e, Symbol):
        return lit if e.name == CARET else e
    if isinstance(e, (Quoted, Atom)):
        return e
    if isinstance(e, PipeChain):
        return PipeChain(
            [substitute_caret(e.stages[0], lit)] + e.stages[1:], e.span, e.pipe_spans
        )
    if isinstance(e, PairExpr):
        if e.value is None:
            return e
        return PairExpr(e.key, substitute_caret(e.value, lit), e.span)
    if isinstance(e, Call):
        return Call(
            substitute_caret(e.op, lit), [substitute_caret(a, lit) for a in e.args], e.span
        )
    if isinstance(e, LiteralList):
        return LiteralList([substitute_caret(a, lit) for a in e.items], e.span, e.implicit)
    return e


def reify(e: Expr) -> Any:
    """The data a quoted expression denotes."""
    if isinstance(e, Atom):
        return e.value
    if isinstance(e, Symbol):
        return Sym(e.name)
    if isinstance(e, LiteralList):
        return ListLit(tuple(reify(x) for x in e.items))
    return Code(e)


# -- literal lists in operator position --------------------------------------


def call_literal_list(lst: ListLit, positional: list[Any], named: dict[str, Any]) -> Any:
    """Index, slice or key-lookup a literal list (1-based, inclusive)."""
    if positional and named:
        raise MixedArguments(MIXED_ARGS_MESSAGE)
    if len(positional) > len(LIST_PARAMS):
        raise TooManyArguments(
            f"a literal list takes at most 3 arguments (:at :from :to), got {len(positional)}"
        )
    for k in named:
        if k not in LIST_PARAMS:
            raise UnknownNamedArgument(f"a literal list has no parameter :{k} (use :at, :from, :to)")
    args = dict(zip(LIST_PARAMS, positional)) if positional else dict(named)
    at = args.get("at", NIL)
    frm = args.get("from", NIL)
    to = args.get("to", NIL)
    if at is not NIL:
        if frm is not NIL or to is not NIL:
            raise AtWithSlice(":at cannot be combined with :from or :to")
        if isinstance(at, ListLit):
            return ListLit(tuple(_select(lst, a) for a in at.items))
        return _select(lst, at)
    if frm is NIL and to is NIL:
        return lst
    n = len(lst)
    lo = 1 if frm is NIL else _position(frm, n, ":from")
    hi = n if to is NIL else _position(to, n, ":to")
    if lo > hi:
        raise IndexOutOfRange(f":from {lo} is after :to {hi} (list length {n})")
    return ListLit(lst.items[lo - 1 : hi])


def _position(v: Any, n: int, what: str) -> int:
    if not is_num(v) or float(v) != int(v):
        raise BadIndexType(f"{what} must be a whole number, got {display(v)}")
    i = int(v)
    if not 1 <= i <= n:
        raise IndexOutOfRange(f"{what} {i} is out of range for a list of length {n} (indices start at 1)")
    return i


def _select(lst: ListLit, at: Any) -> Any:
    if isinstance(at, Key):
        for item in lst.items:
            if isinstance(item, Pair) and item.key == at:
                return item.value
        raise KeyNotFound(f"key :{at.name} not found in list")
    if is_num(at):
        return lst.items[_position(at, len(lst), "index") - 1]
    raise BadIndexType(f":at expects a number, a quoted key or a list of them, got {display(at)}")
