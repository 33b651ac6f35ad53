"""Dependency analysis and concurrent execution of top-level forms."""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .core import NIL, Environment
from .errors import PelException
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

# positional parameter order of the binding forms the analysis understands
_LAMBDA_PARAMS = ("params", "body")
_FOR_PARAMS = ("coll", "iterator", "body")
_DEF_PARAMS = ("name", "value")


@dataclass
class FormMeta:
    index: int
    defines: set[str] = field(default_factory=set)
    uses: set[str] = field(default_factory=set)


@dataclass
class DepGraph:
    nodes: list[FormMeta]
    edges: list[tuple[int, int]]

    def preds(self, j: int) -> set[int]:
        return {i for i, k in self.edges if k == j}

    def succs(self, i: int) -> set[int]:
        return {k for j, k in self.edges if j == i}


def _builtin_names() -> frozenset[str]:
    from .builtins import builtin_names

    return builtin_names()


def _args(call: Call, names: Sequence[str]) -> dict[str, Element | None] | None:
    """Map a call's arguments to parameter names, or None if malformed."""
    if call.args and all(isinstance(a, PairExpr) for a in call.args):
        return {a.key: a.value for a in call.args}  # type: ignore[union-attr]
    if any(isinstance(a, PairExpr) for a in call.args) or len(call.args) > len(names):
        return None
    return dict(zip(names, call.args))


class _Scan:
    """One left-to-right pass collecting defines and free uses."""

    def __init__(self, builtins: frozenset[str]):
        self.builtins = builtins
        self.defines: set[str] = set()
        self.uses: set[str] = set()

    def visit(self, e: Element | None, bound: frozenset[str]) -> None:
        if e is None or isinstance(e, (Atom, Quoted)):
            return
        if isinstance(e, Symbol):
            n = e.name
            if n != CARET and n not in bound and n not in self.builtins and n not in self.defines:
                self.uses.add(n)
            return
        if isinstance(e, PairExpr):
            self.visit(e.value, bound)
        elif isinstance(e, PipeChain):
            for s in e.stages:
                self.visit(s, bound)
        elif isinstance(e, LiteralList):
            for x in e.items:
                self.visit(x, bound)
        elif isinstance(e, Call):
            self.visit_call(e, bound)

    def visit_call(self, call: Call, bound: frozenset[str]) -> None:
        op = call.op.name if isinstance(call.op, Symbol) and call.op.name not in bound else None
        if op == "def":
            a = _args(call, _DEF_PARAMS)
            if a is not None:
                self.visit(a.get("value"), bound)
                name = a.get("name")
                if isinstance(name, Symbol):
                    self.defines.add(name.name)
                return
        elif op == "lambda":
            a = _args(call, _LAMBDA_PARAMS)
            if a is not None and isinstance(a.get("params"), LiteralList):
                params = a["params"].items  # type: ignore[union-attr]
                names = {p.key for p in params if isinstance(p, PairExpr)}
                for p in params:
                    # defaults are evaluated in the defining scope
                    self.visit(p.value if isinstance(p, PairExpr) else p, bound)
                self.visit(a.get("body"), bound | names)
                return
        elif op == "for":
            a = _args(call, _FOR_PARAMS)
            if a is not None and isinstance(a.get("iterator"), Symbol):
                self.visit(a.get("coll"), bound)
                self.visit(a.get("body"), bound | {a["iterator"].name})  # type: ignore[union-attr]
                return
        self.visit(call.op, bound)
        for x in call.args:
            self.visit(x, bound)


def free_symbols(expr: Element, bound: Iterable[str] = ()) -> set[str]:
    """Symbols read by ``expr`` that are not bound locally or builtin."""
    scan = _Scan(_builtin_names())
    scan.visit(expr, frozenset(bound))
    return scan.uses


def form_meta(index: int, expr: Element) -> FormMeta:
    scan = _Scan(_builtin_names())
    scan.visit(expr, frozenset())
    return FormMeta(index, scan.defines, scan.uses)


def analyze(program: Sequence[Expr]) -> DepGraph:
    """Build the read/write dependency DAG over top-level forms.

    A closure looks its free symbols up when called, so a form that reads a
    symbol also (transitively) reads whatever the defining form read.
    """
    nodes = [form_meta(i, e) for i, e in enumerate(program)]
    effective: list[set[str]] = []
    for j, node in enumerate(nodes):
        eff = set(node.uses)
        for i in range(j):
            if nodes[i].defines & node.uses:
                eff |= effective[i]
        effective.append(eff)
    edges = []
    for j, nj in enumerate(nodes):
        for i in range(j):
            ni = nodes[i]
            if (
                effective[j] & ni.defines
                or nj.defines & ni.defines
                or nj.defines & effective[i]
            ):
                edges.append((i, j))
    return DepGraph(nodes, edges)


def default_jobs() -> int:
    # same default as ThreadPoolExecutor: tasks are mostly waiting on LLM I/O
    return min(32, (os.cpu_count() or 1) + 4)


@dataclass
class TraceEvent:
    index: int
    kind: str  # "start" | "finish"
    at: float


def run_concurrent(
    program: Sequence[Expr],
    interp,
    env: Environment | None = None,
    max_tasks: int | None = None,
    trace: list[TraceEvent] | None = None,
) -> Any:
    """Evaluate forms as tasks that start once their predecessors finish."""
    if not program:
        return NIL
    env = env or interp.global_env
    graph = analyze(program)
    n = len(program)
    preds = [graph.preds(j) for j in range(n)]
    succs = [graph.succs(i) for i in range(n)]
    waiting = [len(p) for p in preds]
    results: dict[int, Any] = {}
    errors: dict[int, PelException] = {}
    cancelled: set[int] = set()
    trace_lock = threading.Lock()

    def record(i: int, kind: str) -> None:
        if trace is not None:
            with trace_lock:
                trace.append(TraceEvent(i, kind, time.perf_counter()))

    def task(i: int) -> Any:
        record(i, "start")
        try:
            return interp.eval(program[i], env)
        finally:
            record(i, "finish")

    def cancel_from(i: int) -> None:
        stack = list(succs[i])
        while stack:
            k = stack.pop()
            if k not in cancelled:
                cancelled.add(k)
                stack.extend(succs[k])

    with ThreadPoolExecutor(max_workers=max_tasks or default_jobs()) as pool:
        running: dict[Future, int] = {}
        for i in range(n):
            if waiting[i] == 0:
                running[pool.submit(task, i)] = i
        while running:
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in done:
                i = running.pop(fut)
                err = fut.exception()
                if err is not None:
                    if not isinstance(err, PelException):
                        raise err
                    errors[i] = err
                    cancel_from(i)
                    continue
                results[i] = fut.result()
                for k in sorted(succs[i]):
                    waiting[k] -= 1
                    if waiting[k] == 0 and k not in cancelled:
                        running[pool.submit(task, k)] = k
    if errors:
        first = min(errors)
        e = errors[first]
        e.form_index = first
        raise e
    return results[n - 1]


def run_parallel(callables: Sequence[Callable[[], Any]], max_tasks: int | None = None) -> list[Any]:
    """Run thunks concurrently; results in listing order, first error wins.

    Each call gets its own short-lived pool so that a ``do/async`` running
    inside a scheduled form can never starve waiting on its own workers.
    """
    if not callables:
        return []
    workers = min(len(callables), max_tasks or default_jobs())
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(c) for c in callables]
        wait(futures)
    for f in futures:
        err = f.exception()
        if err is not None:
            raise err
    return [f.result() for f in futures]
