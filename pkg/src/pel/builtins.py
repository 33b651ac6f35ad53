"""The standard library.

Every builtin is a :class:`~pel.core.Closure` with a structured docstring;
the REPL shows that docstring as error context when a call fails. Control
flow (``if``, ``case``, ``for``, ``do``) and definition forms are
non-strict: they receive :class:`~pel.core.Thunk` arguments and decide what
to evaluate.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Any, Callable

from .core import (
    NIL,
    Closure,
    Docstring,
    Key,
    ListLit,
    Param,
    Thunk,
    display,
    is_num,
    to_text,
    type_name,
    values_equal,
)
from .errors import (
    BackendError,
    BadParamSpec,
    ConditionNotBool,
    DefTargetNotSymbol,
    IteratorNotSymbol,
    IterTargetNotList,
    OddCaseBody,
    TypeMismatch,
    UnknownAgent,
)
from .syntax import Atom, LiteralList, PairExpr, Symbol, pretty

BUILTINS: dict[str, Closure] = {}

_REQUIRED = object()


def builtin(name: str, params: list[tuple[str, Any]], doc: Docstring, strict: bool = True):
    """Register ``fn(interp, args)`` as the builtin closure ``name``."""

    def deco(fn: Callable[..., Any]):
        specs = tuple(
            Param(p, None if default is _REQUIRED else Atom(default)) for p, default in params
        )
        BUILTINS[name] = Closure(specs, impl=fn, strict=strict, name=name, doc=doc)
        return fn

    return deco


def _num(v: Any, fn: str, what: str) -> int | float:
    if not is_num(v):
        raise TypeMismatch(f"{fn}: {what} must be a PelNum, got {type_name(v)} {display(v)}")
    return v


def _str(v: Any, fn: str, what: str) -> str:
    if not isinstance(v, str):
        raise TypeMismatch(f"{fn}: {what} must be a PelString, got {type_name(v)} {display(v)}")
    return v


def _bool(v: Any, fn: str) -> bool:
    if not isinstance(v, bool):
        raise ConditionNotBool(
            f"{fn}: condition must be #t or #f, got {type_name(v)} {display(v)}"
            + (" (#nil has no truth value)" if v is NIL else "")
        )
    return v


def _arith_doc(op: str, verb: str, reduces: bool) -> Docstring:
    extra = f" When :y is omitted and :x is a literal list of numbers, {verb}s the whole list." if reduces else ""
    return Docstring(
        signature=f"({op} :x :y #nil)",
        types=(
            "x: PelNum" + (" or PelListLiteral of PelNum" if reduces else "") + " - left operand",
            "y: PelNum (optional) - right operand",
        ),
        description=f"Numeric {verb}.{extra}",
        examples=f"({op} 6 3)" + (f"\n[1 2 3] ▷ ({op})" if reduces else ""),
    )


def _reduce(fn: str, x: Any, y: Any, binary, unit):
    if y is NIL:
        if isinstance(x, ListLit):
            acc = unit
            for item in x.items:
                acc = binary(acc, _num(item, fn, "every list element"))
            return acc
        raise TypeMismatch(
            f"{fn}: needs two numbers, or a single literal list of numbers; got only {display(x)}"
        )
    return binary(_num(x, fn, ":x"), _num(y, fn, ":y"))


@builtin("+", [("x", _REQUIRED), ("y", NIL)], _arith_doc("+", "sum", True))
def _add(interp, a):
    if isinstance(a["x"], str) or isinstance(a["y"], str):
        raise TypeMismatch("+: strings cannot be added; use (concat :x :y) to join strings")
    return _reduce("+", a["x"], a["y"], lambda p, q: p + q, 0)


@builtin("*", [("x", _REQUIRED), ("y", NIL)], _arith_doc("*", "product", True))
def _mul(interp, a):
    return _reduce("*", a["x"], a["y"], lambda p, q: p * q, 1)


@builtin("-", [("x", _REQUIRED), ("y", NIL)], _arith_doc("-", "difference", False))
def _sub(interp, a):
    if a["y"] is NIL:
        raise TypeMismatch("-: needs two numbers :x and :y")
    return _num(a["x"], "-", ":x") - _num(a["y"], "-", ":y")


@builtin("/", [("x", _REQUIRED), ("y", NIL)], _arith_doc("/", "quotient", False))
def _div(interp, a):
    if a["y"] is NIL:
        raise TypeMismatch("/: needs two numbers :x and :y")
    x, y = _num(a["x"], "/", ":x"), _num(a["y"], "/", ":y")
    if y == 0:
        raise TypeMismatch("/: division by zero")
    return x / y


@builtin(
    "pow",
    [("x", _REQUIRED), ("y", _REQUIRED)],
    Docstring(
        "(pow :x :y)",
        ("x: PelNum - base", "y: PelNum - exponent"),
        "Raises :x to the power :y. The result is a decimal number.",
        "(pow 3 2) ; => 9",
    ),
)
def _pow(interp, a):
    x, y = _num(a["x"], "pow", ":x"), _num(a["y"], "pow", ":y")
    try:
        r = float(x) ** y
    except (OverflowError, ZeroDivisionError) as e:
        raise TypeMismatch(f"pow: {e}")
    if isinstance(r, complex):
        raise TypeMismatch("pow: result is not a real number")
    return r


@builtin(
    "sqrt",
    [("x", _REQUIRED)],
    Docstring(
        "(sqrt :x)",
        ("x: PelNum - a non-negative number",),
        "Square root of :x as a decimal number.",
        "(sqrt 25) ; => 5",
    ),
)
def _sqrt(interp, a):
    x = _num(a["x"], "sqrt", ":x")
    if x < 0:
        raise TypeMismatch(f"sqrt: negative argument {display(x)}")
    return math.sqrt(x)


@builtin(
    "len",
    [("x", _REQUIRED)],
    Docstring(
        "(len :x)",
        ("x: PelListLiteral or PelString",),
        "Number of elements in a literal list, or characters in a string.",
        "(len [1 2 3 4]) ; => 4",
    ),
)
def _len(interp, a):
    x = a["x"]
    if isinstance(x, (ListLit, str)):
        return len(x)
    raise TypeMismatch(f"len: expected a literal list or string, got {type_name(x)} {display(x)}")


def _compare(op: str, fn):
    @builtin(
        op,
        [("x", _REQUIRED), ("y", _REQUIRED)],
        Docstring(
            f"({op} :x :y)",
            ("x: PelNum", "y: PelNum"),
            f"Returns #t when :x is {'greater' if op == 'gt' else 'less'} than :y, else #f.",
            f"({op} 3 2)",
        ),
    )
    def impl(interp, a):
        return fn(_num(a["x"], op, ":x"), _num(a["y"], op, ":y"))

    return impl


_compare("gt", lambda x, y: x > y)
_compare("lt", lambda x, y: x < y)


@builtin(
    "eq",
    [("x", _REQUIRED), ("y", _REQUIRED)],
    Docstring(
        "(eq :x :y)",
        ("x: PelValue", "y: PelValue"),
        "Structural equality. Closures are equal only to themselves.",
        '(eq [1 "a"] [1 "a"]) ; => #t',
    ),
)
def _eq(interp, a):
    return values_equal(a["x"], a["y"])


@builtin(
    "concat",
    [("x", _REQUIRED), ("y", _REQUIRED)],
    Docstring(
        "(concat :x :y)",
        ("x: PelString - first part", "y: PelString - second part"),
        "Joins two strings.",
        '(concat "hello, " "world") ; => "hello, world"',
    ),
)
def _concat(interp, a):
    return _str(a["x"], "concat", ":x") + _str(a["y"], "concat", ":y")


PRINT_DOC = Docstring(
    signature='(print :vals :sep "" :nl #t)',
    types=(
        "vals: PelValue - a single value, or a literal list [...] whose items are printed in turn",
        'sep: PelString (optional) - text placed between list items, default ""',
        "nl: PelBool (optional) - whether a newline follows the output, default #t",
    ),
    description=(
        "Writes vals to standard output; strings are written without quotes.\n"
        "A literal list is written item by item, joined with sep.\n"
        "Returns vals unchanged, so print can sit in the middle of a pipe."
    ),
    examples='(print "hi")\n(print :vals ["hello" name] :sep " ")\n[1 2 3] ▷ (print :vals ["items:" ^] :sep " ")',
)


@builtin("print", [("vals", _REQUIRED), ("sep", ""), ("nl", True)], PRINT_DOC)
def _print(interp, a):
    vals = a["vals"]
    sep = _str(a["sep"], "print", ":sep")
    nl = a["nl"]
    if not isinstance(nl, bool):
        raise TypeMismatch(f"print: :nl must be a PelBool, got {display(nl)}")
    if isinstance(vals, ListLit):
        text = sep.join(to_text(v) for v in vals.items)
    else:
        text = to_text(vals)
    interp.write(text + ("\n" if nl else ""))
    return vals


# -- non-strict forms ----------------------------------------------------------


@builtin(
    "def",
    [("name", _REQUIRED), ("value", _REQUIRED)],
    Docstring(
        "(def :name :value)",
        ("name: PelSymbol (unevaluated) - the name to bind", "value: PelValue - evaluated and bound"),
        "Binds name to the value of :value in the current scope and returns the value.",
        "(def pi 3.14)\n(lambda [:x] (* x x)) ▷ (def square ^)",
    ),
    strict=False,
)
def _def(interp, a):
    name: Thunk = a["name"]
    if not isinstance(name.expr, Symbol):
        raise DefTargetNotSymbol(
            f"def: the name must be a symbol, got {_src(name.expr)}", name.expr.span
        )
    value = interp.force(a["value"])
    if isinstance(value, Closure) and value.name is None:
        value = replace(value, name=name.expr.name)
    return name.env.define(name.expr.name, value)


def _src(expr) -> str:
    return pretty(expr)


@builtin(
    "lambda",
    [("params", _REQUIRED), ("body", _REQUIRED)],
    Docstring(
        "(lambda :params :body)",
        (
            "params: PelListLiteral of keys (unevaluated); a key followed by a value gives that parameter a default",
            "body: expression evaluated when every parameter is bound",
        ),
        "Creates a strict closure over the current environment.",
        "(lambda [:x :y 10] (+ x y))",
    ),
    strict=False,
)
def _lambda(interp, a):
    ptk: Thunk = a["params"]
    spec = ptk.expr
    if not isinstance(spec, LiteralList):
        raise BadParamSpec(
            f"lambda: parameters must be a literal list of keys like [:x :y], got {_src(spec)}",
            spec.span,
        )
    params: list[Param] = []
    for item in spec.items:
        if not isinstance(item, PairExpr):
            raise BadParamSpec(
                f"lambda: parameter {_src(item)} is not a key (write :name)", item.span
            )
        if any(p.name == item.key for p in params):
            raise BadParamSpec(f"lambda: duplicate parameter :{item.key}", item.span)
        params.append(Param(item.key, item.value))
    body: Thunk = a["body"]
    return Closure(tuple(params), body=body.expr, env=body.env, strict=True)


@builtin(
    "if",
    [("cond", _REQUIRED), ("then", _REQUIRED), ("else", NIL)],
    Docstring(
        "(if :cond :then :else #nil)",
        (
            "cond: PelBool - must be exactly #t or #f; #nil is an error",
            "then: expression evaluated when cond is #t",
            "else: expression evaluated when cond is #f (optional, default #nil)",
        ),
        "Evaluates exactly one branch.",
        '(if (gt 3 2) "yes" "no")\nx ▷ (if :cond ^ :then 1 :else 2)',
    ),
    strict=False,
)
def _if(interp, a):
    cond = _bool(interp.force(a["cond"]), "if")
    return interp.force(a["then"] if cond else a["else"])


@builtin(
    "case",
    [("scrut", _REQUIRED), ("body", _REQUIRED)],
    Docstring(
        "(case :scrut :body)",
        (
            "scrut: PelValue - evaluated once, then piped into each condition",
            "body: PelListLiteral (unevaluated) of alternating condition / consequence",
        ),
        "Returns the consequence of the first condition that holds, or #nil.\n"
        "A condition is #t (always holds), a string (judged by the LLM against\n"
        "the scrut), or a call/pipe that receives the scrut and must return a PelBool.",
        '(case xs [(len) ▷ (gt 5) "long" #t "short"])',
    ),
    strict=False,
)
def _case(interp, a):
    from .evaluator import pipe_into

    body: Thunk = a["body"]
    if not isinstance(body.expr, LiteralList):
        raise OddCaseBody(
            f"case: :body must be a literal list [cond consequence ...], got {_src(body.expr)}",
            body.expr.span,
        )
    items = _unfold(body.expr.items)
    if len(items) % 2:
        raise OddCaseBody(
            f"case: :body needs condition/consequence pairs, got {len(items)} elements",
            body.expr.span,
        )
    scrut = interp.force(a["scrut"])
    env = body.env
    for cond, consequence in zip(items[0::2], items[1::2]):
        if isinstance(cond, Atom) and isinstance(cond.value, bool):
            hit = cond.value
        elif isinstance(cond, Atom) and isinstance(cond.value, str):
            hit = _backend(interp).eval_condition(display(scrut), cond.value)
        else:
            hit = interp.eval(pipe_into(scrut, cond), env)
            if not isinstance(hit, bool):
                raise ConditionNotBool(
                    f"case: condition {_src(cond)} returned {display(hit)}, not #t or #f",
                    cond.span,
                )
        if hit:
            return interp.eval(consequence, env)
    return NIL


def _unfold(items) -> list:
    # a key inside a case body folds with its neighbour; split it back out
    out = []
    for it in items:
        if isinstance(it, PairExpr):
            out.append(Atom(Key(it.key), it.span))
            if it.value is not None:
                out.append(it.value)
        else:
            out.append(it)
    return out


def _backend(interp):
    if interp.backend is None:
        raise BackendError("no LLM backend configured")
    return interp.backend


@builtin(
    "for",
    [("coll", _REQUIRED), ("iterator", _REQUIRED), ("body", _REQUIRED)],
    Docstring(
        "(for :coll :iterator :body)",
        (
            "coll: PelListLiteral - items to iterate over",
            "iterator: PelSymbol (unevaluated) - bound to each item in turn",
            "body: expression evaluated once per item",
        ),
        "Returns a literal list of the body results, one per item of :coll.",
        "(for :coll [1 2 3] :iterator i :body (* i 2)) ; => [2 4 6]",
    ),
    strict=False,
)
def _for(interp, a):
    it: Thunk = a["iterator"]
    if not isinstance(it.expr, Symbol):
        raise IteratorNotSymbol(f"for: :iterator must be a symbol, got {_src(it.expr)}", it.expr.span)
    coll = interp.force(a["coll"])
    if not isinstance(coll, ListLit):
        raise IterTargetNotList(f"for: :coll must be a literal list, got {type_name(coll)} {display(coll)}")
    body: Thunk = a["body"]
    out = []
    for item in coll.items:
        frame = body.env.child()
        frame.install(it.expr.name, item)
        out.append(interp.eval(body.expr, frame))
    return ListLit(tuple(out))


def _sequence(a, fn: str) -> tuple[list, Any]:
    t: Thunk = a["exprs"]
    if not isinstance(t.expr, LiteralList):
        raise TypeMismatch(f"{fn}: expected a literal list of expressions, got {_src(t.expr)}", t.expr.span)
    return list(t.expr.items), t.env


@builtin(
    "do",
    [("exprs", _REQUIRED)],
    Docstring(
        "(do :exprs)",
        ("exprs: PelListLiteral (unevaluated) of expressions; (do a b c) is shorthand for (do [a b c])",),
        "Evaluates the expressions in order and returns the last value (#nil when empty).",
        '(do (print "Starting...") (def x 5) (+ x 10))',
    ),
    strict=False,
)
def _do(interp, a):
    exprs, env = _sequence(a, "do")
    value = NIL
    for e in exprs:
        value = interp.eval(e, env)
    return value


@builtin(
    "do/async",
    [("exprs", _REQUIRED)],
    Docstring(
        "(do/async :exprs)",
        ("exprs: PelListLiteral (unevaluated) of independent expressions",),
        "Evaluates the expressions concurrently. After all finish, returns the value\n"
        "of the last listed expression. The first error in listing order is raised.",
        "(do/async (MAIN/FINANCE :query \"budget?\") (MAIN/SALES :query \"sales?\"))",
    ),
    strict=False,
)
def _do_async(interp, a):
    from .scheduler import run_parallel

    exprs, env = _sequence(a, "do/async")
    if not exprs:
        return NIL
    results = run_parallel([(lambda e=e: interp.eval(e, env)) for e in exprs], interp.max_tasks)
    return results[-1]


@builtin(
    "summarize",
    [("text", _REQUIRED)],
    Docstring(
        "(summarize :text)",
        ("text: PelString - text to condense",),
        "Asks the LLM backend for a summary of :text and returns it verbatim.",
        "(meeting ...) ▷ (summarize)",
    ),
)
def _summarize(interp, a):
    text = _str(a["text"], "summarize", ":text")
    if not text.strip():
        raise BackendError("summarize: empty input")
    return _backend(interp).summarize_text(text)


MEETING_DOC = Docstring(
    "(meeting :group :rounds :topic :context #nil)",
    (
        "group: PelListLiteral of PelString - agent paths taking part",
        "rounds: PelNum - discussion rounds, at least 1",
        "topic: PelString - what the agents discuss",
        "context: PelValue (optional) - extra information shown to every agent",
    ),
    "Runs a round-robin discussion between agents and returns the transcript\n"
    "as text, one 'SPEAKER: utterance' line per turn.",
    '(meeting :group ["MAIN/A" "MAIN/B"] :rounds 2 :topic "plan") ▷ (summarize)',
)


@builtin(
    "meeting",
    [("group", _REQUIRED), ("rounds", _REQUIRED), ("topic", _REQUIRED), ("context", NIL)],
    MEETING_DOC,
)
def _meeting(interp, a):
    if interp.agents is None:
        raise UnknownAgent("meeting: no agent organisation is loaded")
    return interp.agents.meeting(interp, a["group"], a["rounds"], a["topic"], a["context"])


def builtin_names() -> frozenset[str]:
    return frozenset(BUILTINS)

