"""Hierarchical agents: org loading, router/terminal calls and meetings.

Terminal agents answer through the backend directly. Router agents ask the
backend for a Pel program and run it in an environment where only their
own children are callable; the program's final value is the answer.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .core import NIL, Closure, Docstring, Environment, ListLit, Param, Thunk, display, is_num
from .errors import (
    BackendError,
    CapabilityError,
    LexError,
    MalformedOrg,
    ParseError,
    PelException,
    PreconditionFailed,
    RouterCodeInvalid,
    TypeMismatch,
    UnknownAgent,
    UnparseableFix,
)
from .grammar import CapabilityConfig, check
from .llm import EXPECT_TYPES, coerce_reply
from .parser import parse
from .syntax import Atom, Symbol, walk

ROUTER = "router"
TERMINAL = "terminal"
DEFAULT_HEAL_CAP = 3

AGENT_DOC = Docstring(
    '(AGENT :query :context #nil :expect "string")',
    (
        "query: PelString - the request for the agent",
        "context: PelValue (optional) - extra information; a bare symbol is also visible to a router under its own name",
        'expect: PelString (optional) - "string", "num" or "bool"; the reply is coerced to it',
    ),
    "Asks the agent. Terminal agents reply directly; router agents write and run\n"
    "a Pel program over their sub-agents and reply with its final value.",
    '(MAIN/FINANCE :query "what is the budget?" :expect "num") ▷ (def budget ^)',
)


@dataclass(frozen=True)
class AgentSpec:
    path: str
    role: str = ""
    kind: str = TERMINAL
    children: tuple[str, ...] = ()
    tools: str = ""


def parse_org(data: Any) -> list[AgentSpec]:
    """Validate the org JSON (an array of agent objects) into specs."""
    if not isinstance(data, list) or not data:
        raise MalformedOrg("org file must be a non-empty JSON array of agents")
    specs: dict[str, AgentSpec] = {}
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or not isinstance(entry.get("path"), str) or not entry["path"]:
            raise MalformedOrg(f"agent #{i + 1} needs a non-empty string 'path'")
        path = entry["path"]
        if path in specs:
            raise MalformedOrg(f"duplicate agent path '{path}'")
        kind = entry.get("kind", TERMINAL)
        if kind not in (ROUTER, TERMINAL):
            raise MalformedOrg(f"agent '{path}': kind must be 'router' or 'terminal'")
        children = entry.get("children", [])
        if not isinstance(children, list) or not all(isinstance(c, str) for c in children):
            raise MalformedOrg(f"agent '{path}': children must be a list of paths")
        tools = entry.get("tools", "")
        if isinstance(tools, list):
            tools = "; ".join(str(t) for t in tools)
        specs[path] = AgentSpec(path, str(entry.get("role", "")), kind, tuple(children), str(tools))

    parent: dict[str, str] = {}
    for spec in specs.values():
        if spec.kind == ROUTER and not spec.children:
            raise MalformedOrg(f"router '{spec.path}' has no children")
        if spec.kind == TERMINAL and spec.children:
            raise MalformedOrg(f"terminal '{spec.path}' cannot have children")
        for c in spec.children:
            if c not in specs:
                raise MalformedOrg(f"'{spec.path}' lists unknown child '{c}'")
            if not c.startswith(spec.path + "/"):
                raise MalformedOrg(f"child '{c}' of '{spec.path}' must be named '{spec.path}/...'")
            if c in parent:
                raise MalformedOrg(f"'{c}' is a child of both '{parent[c]}' and '{spec.path}'")
            parent[c] = spec.path
    roots = [p for p in specs if p not in parent]
    if len(roots) != 1:
        raise MalformedOrg(
            f"org must have exactly one root, found {len(roots)}: {', '.join(roots) or 'none'} "
            "(every other agent must be listed as some router's child)"
        )
    return list(specs.values())


def load_org(path: str | Path, **kw) -> Organisation:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedOrg(f"org file is not valid JSON: {e}")
    return Organisation(parse_org(data), **kw)


class Organisation:
    """Registry of agents plus the call/meeting machinery."""

    def __init__(
        self,
        specs: Sequence[AgentSpec],
        heal_cap: int = DEFAULT_HEAL_CAP,
        async_mode: bool = False,
        max_tasks: int | None = None,
        trace: list | None = None,
    ):
        self.specs = {s.path: s for s in specs}
        self.root = next(p for p in self.specs if not any(p in s.children for s in specs))
        self.heal_cap = heal_cap
        self.async_mode = async_mode
        self.max_tasks = max_tasks
        self.trace = trace
        self.events: list[str] = []
        self._lock = threading.Lock()

    def log(self, line: str) -> None:
        with self._lock:
            self.events.append(line)

    def transcript(self) -> str:
        return "\n".join(self.events) + "\n"

    def get(self, path: str) -> AgentSpec:
        try:
            return self.specs[path]
        except KeyError:
            raise UnknownAgent(f"unknown agent '{path}'")

    # -- registration -----------------------------------------------------

    def closure(self, path: str) -> Closure:
        spec = self.get(path)

        def impl(interp, a):
            return self._call_from_pel(interp, spec, a)

        params = (
            Param("query"),
            Param("context", Atom(NIL)),
            Param("expect", Atom("string")),
        )
        return Closure(params, impl=impl, strict=False, name=path, doc=AGENT_DOC)

    def install(self, interp) -> None:
        interp.agents = self
        for path in self.specs:
            interp.global_env.install(path, self.closure(path))

    # -- calling ----------------------------------------------------------

    def _call_from_pel(self, interp, spec: AgentSpec, a: dict) -> Any:
        query = interp.force(a["query"])
        if not isinstance(query, str):
            raise TypeMismatch(f"{spec.path}: :query must be a PelString, got {display(query)}")
        ctx_thunk: Thunk = a["context"]
        context = interp.force(ctx_thunk)
        expect = interp.force(a["expect"])
        if expect not in EXPECT_TYPES:
            raise TypeMismatch(f'{spec.path}: :expect must be "string", "num" or "bool", got {display(expect)}')
        alias = ctx_thunk.expr.name if isinstance(ctx_thunk.expr, Symbol) else None
        return self.call(interp, spec.path, query, context, expect, alias)

    def call(self, interp, path: str, query: str, context: Any = NIL,
             expect: str | None = "string", context_alias: str | None = None,
             depth: int = 0) -> Any:
        spec = self.get(path)
        self.log(f"CALL {path} expect={expect} query={query!r} context={display(context)}")
        backend = _backend(interp)
        if spec.kind == TERMINAL:
            value = backend.agent_reply(path, query, context, expect or "string", spec.role, spec.tools)
        else:
            value = self._route(interp, spec, query, context, context_alias, depth)
            if expect is not None:
                value = coerce_value(value, expect)
        self.log(f"RESULT {path} {display(value)}")
        return value

    def run_task(self, interp, task: str, context: Any = NIL) -> Any:
        """Hand a task to the root agent; returns its raw final value."""
        return self.call(interp, self.root, task, context, expect=None)

    def _children_doc(self, spec: AgentSpec) -> str:
        lines = []
        for c in spec.children:
            child = self.specs[c]
            lines.append(f"- {c} ({child.kind}): {child.role or '(no role)'}")
        return "\n".join(lines)

    def _route(self, interp, spec: AgentSpec, query: str, context: Any,
               alias: str | None, depth: int) -> Any:
        backend = _backend(interp)
        src = backend.router_program(spec.path, spec.role, self._children_doc(spec), query, context)
        heals = 0
        while True:
            self.log(f"PROGRAM {spec.path}\n{src}")
            try:
                return self._run_router_program(interp, spec, src, context, alias, depth)
            except PelException as e:
                self.log(f"ERROR {spec.path} {type(e).__name__}: {e.message}")
                structural = isinstance(e, (ParseError, LexError, CapabilityError))
                if heals >= self.heal_cap:
                    if structural:
                        raise RouterCodeInvalid(
                            f"router {spec.path} produced invalid Pel after {heals} repair attempt(s): {e.message}",
                            e.span,
                        )
                    raise
                heals += 1
                try:
                    src = backend.propose_fix(e, src, e.context)
                except (BackendError, UnparseableFix) as fix_err:
                    self.log(f"HEAL-FAILED {spec.path} {fix_err.message}")
                    if structural:
                        raise RouterCodeInvalid(
                            f"router {spec.path} produced invalid Pel and could not be repaired: {e.message}",
                            e.span,
                        )
                    raise e

    def _run_router_program(self, interp, spec: AgentSpec, src: str, context: Any,
                            alias: str | None, depth: int) -> Any:
        program = parse(src, name=f"<{spec.path}>")
        children = set(spec.children)
        for form in program:
            for node in walk(form, into_quotes=False):
                if isinstance(node, Symbol) and node.name in self.specs and node.name not in children:
                    raise UnknownAgent(
                        f"{spec.path} may only call its sub-agents ({', '.join(spec.children)}), "
                        f"not '{node.name}'",
                        node.span,
                    )
        names = {"context"} | ({alias} if alias else set())
        caps = CapabilityConfig(closed_symbol_set=True, allowed_symbols=frozenset(children | names))
        check(program, caps)
        env = self.router_env(interp, spec, context, alias)
        if self.async_mode and len(program) > 1:
            from .scheduler import run_concurrent

            trace = self.trace if depth == 0 and spec.path == self.root else None
            return run_concurrent(program, interp, env, self.max_tasks, trace)
        value: Any = NIL
        for form in program:
            value = interp.eval(form, env)
        return value

    def router_env(self, interp, spec: AgentSpec, context: Any, alias: str | None) -> Environment:
        base = interp.make_global_env()
        base.install("meeting", self._scoped_meeting(spec))
        for c in spec.children:
            base.install(c, self.closure(c))
        env = Environment(base)
        env.install("context", context)
        if alias:
            env.install(alias, context)
        return env

    def _scoped_meeting(self, spec: AgentSpec) -> Closure:
        from .builtins import BUILTINS

        original = BUILTINS["meeting"]
        allowed = frozenset(spec.children)

        def impl(interp, a):
            return self.meeting(interp, a["group"], a["rounds"], a["topic"], a["context"], allowed)

        return Closure(original.params, impl=impl, strict=True, name="meeting", doc=original.doc)

    # -- meetings -----------------------------------------------------------

    def meeting(self, interp, group: Any, rounds: Any, topic: Any, context: Any = NIL,
                allowed: Iterable[str] | None = None) -> str:
        if not isinstance(group, ListLit) or not group.items or not all(isinstance(g, str) for g in group):
            raise TypeMismatch("meeting: :group must be a non-empty literal list of agent path strings")
        if not is_num(rounds) or float(rounds) != int(rounds):
            raise TypeMismatch(f"meeting: :rounds must be a whole number, got {display(rounds)}")
        if rounds < 1:
            raise PreconditionFailed(f"meeting: :rounds must be at least 1, got {display(rounds)}")
        if not isinstance(topic, str):
            raise TypeMismatch(f"meeting: :topic must be a PelString, got {display(topic)}")
        allowed = None if allowed is None else set(allowed)
        members = []
        for path in group:
            spec = self.get(path)
            if allowed is not None and path not in allowed:
                raise UnknownAgent(f"meeting: '{path}' is not a sub-agent of the caller")
            members.append(spec)
        backend = _backend(interp)
        lines: list[str] = []
        turn = 0
        for _ in range(int(rounds)):
            for spec in members:
                turn += 1
                said = backend.meeting_turn(spec.path, spec.role, turn, topic, context, "\n".join(lines))
                lines.append(f"{spec.path}: {said}")
        text = "\n".join(lines)
        self.log(f"MEETING {', '.join(m.path for m in members)} rounds={int(rounds)} turns={turn}\n{text}")
        return text


def coerce_value(value: Any, expect: str) -> Any:
    """Coerce a router's final value to the caller's :expect type."""
    if expect == "string":
        return value if isinstance(value, str) else display(value)
    if expect == "num" and is_num(value):
        return value
    if expect == "bool" and isinstance(value, bool):
        return value
    return coerce_reply(value if isinstance(value, str) else display(value), expect)


def _backend(interp):
    if interp.backend is None:
        raise BackendError("no LLM backend configured")
    return interp.backend
