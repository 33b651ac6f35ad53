"""LLM backends.

Every LLM touchpoint (natural-language case conditions, ``summarize``, the
REPL helper agent, agent queries and router code generation) goes through
:class:`LlmBackend`. Subclasses only implement :meth:`LlmBackend.request`;
prompt rendering and reply parsing live here so the mock and the HTTP
client behave identically.

Mock script format, one rule per line::

    # comment
    @default error            # or: echo
    @latency agent 0.1        # seconds slept before answering that kind
    KIND | pattern | reply

``pattern`` is ``*`` or one or more substrings joined by ``&&``, all of
which must occur in the rendered prompt. ``\\n`` in a pattern or reply
stands for a newline. The first matching rule wins.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import NIL, display
from .errors import BackendError, CoercionError, ParseError, LexError, UnparseableFix

PROMPT_VERSION = "1"
KINDS = ("condition", "fix", "agent", "summarize", "complete")
EXPECT_TYPES = ("string", "num", "bool")

CONDITION_PROMPT = """\
You judge whether a condition holds for a value.
VALUE:
```
{scrut}
```
CONDITION: {condition}
Reply with exactly true or false."""

SUMMARIZE_PROMPT = """\
You write concise summaries.
TEXT:
```
{text}
```
Reply with the summary only."""

FIX_PROMPT = """\
You repair Pel code. The snippet below raised an error.
ERROR: {message}
SNIPPET:
```
{snippet}
```
DOCUMENTATION:
```
{doc}
```
Reply with a corrected Pel snippet only, no commentary."""

TERMINAL_PROMPT = """\
[agent {path}] [mode terminal]
ROLE: {role}
TOOLS: {tools}
QUERY:
```
{query}
```
CONTEXT:
```
{context}
```
Reply with the answer only, as a {expect}."""

ROUTER_PROMPT = """\
[agent {path}] [mode router]
ROLE: {role}
You coordinate these sub-agents by writing a Pel program. Call them as
(PATH :query "..." :context value :expect "string"|"num"|"bool").
SUB-AGENTS:
{children}
TASK:
```
{query}
```
CONTEXT (bound to the symbol `context`):
```
{context}
```
Reply with a Pel program only. Its final expression is your answer."""

MEETING_PROMPT = """\
[agent {path}] [mode meeting] [turn {turn}]
ROLE: {role}
TOPIC: {topic}
CONTEXT:
```
{context}
```
TRANSCRIPT SO FAR:
```
{transcript}
```
Reply with your next contribution only."""

_NUMBER = re.compile(r"-?\d+(\.\d+)?")
_TRUE = {"true", "yes", "#t"}
_FALSE = {"false", "no", "#f"}


def parse_bool(reply: str) -> bool:
    word = reply.strip().strip(".").lower()
    if word in _TRUE:
        return True
    if word in _FALSE:
        return False
    raise BackendError(f"unparseable boolean reply: {reply.strip()!r}")


def coerce_reply(reply: str, expect: str) -> Any:
    if expect == "string":
        return reply.strip()
    if expect == "num":
        text = reply.strip()
        if not _NUMBER.fullmatch(text):
            raise CoercionError(f"expected a number but the agent replied {text!r}")
        return float(text) if "." in text else int(text)
    if expect == "bool":
        try:
            return parse_bool(reply)
        except BackendError:
            raise CoercionError(f"expected #t/#f but the agent replied {reply.strip()!r}")
    raise CoercionError(f':expect must be one of "string", "num", "bool", got {expect!r}')


class LlmBackend:
    def request(self, kind: str, prompt: str) -> str:
        raise NotImplementedError

    def complete(self, prompt: str) -> str:
        return self.request("complete", prompt)

    def eval_condition(self, scrut_display: str, condition: str) -> bool:
        if not condition.strip():
            raise BackendError("empty natural-language condition")
        reply = self.request(
            "condition", CONDITION_PROMPT.format(scrut=scrut_display, condition=condition)
        )
        return parse_bool(reply)

    def summarize_text(self, text: str) -> str:
        if not text.strip():
            raise BackendError("empty input")
        return self.request("summarize", SUMMARIZE_PROMPT.format(text=text))

    def propose_fix(self, error, snippet: str, doc=None) -> str:
        """Ask for a replacement snippet; it must parse to be returned."""
        from .parser import parse

        doc_text = doc.render() if doc is not None else "(none)"
        reply = self.request(
            "fix", FIX_PROMPT.format(message=error.message, snippet=snippet, doc=doc_text)
        )
        fix = _strip_fences(reply)
        try:
            if not parse(fix):
                raise ParseError("empty fix")
        except (ParseError, LexError) as e:
            raise UnparseableFix(f"helper agent proposed unparseable code: {e.message}")
        return fix

    def agent_reply(
        self,
        agent_path: str,
        query: str,
        context: Any = NIL,
        expect: str = "string",
        role: str = "",
        tools: str = "",
    ) -> Any:
        if expect not in EXPECT_TYPES:
            raise CoercionError(f':expect must be one of "string", "num", "bool", got {expect!r}')
        prompt = TERMINAL_PROMPT.format(
            path=agent_path,
            role=role or "(none)",
            tools=tools or "(none)",
            query=query,
            context=_ctx(context),
            expect=expect,
        )
        return coerce_reply(self.request("agent", prompt), expect)

    def router_program(self, agent_path: str, role: str, children: str, query: str, context: Any) -> str:
        prompt = ROUTER_PROMPT.format(
            path=agent_path, role=role or "(none)", children=children, query=query, context=_ctx(context)
        )
        return _strip_fences(self.request("agent", prompt))

    def meeting_turn(self, agent_path: str, role: str, turn: int, topic: str, context: Any, transcript: str) -> str:
        prompt = MEETING_PROMPT.format(
            path=agent_path,
            role=role or "(none)",
            turn=turn,
            topic=topic,
            context=_ctx(context),
            transcript=transcript or "(empty)",
        )
        return self.request("agent", prompt).strip()


def _ctx(context: Any) -> str:
    if context is NIL or context is None:
        return "(none)"
    return display(context)


def _strip_fences(reply: str) -> str:
    text = reply.strip()
    m = re.fullmatch(r"```[a-zA-Z]*\n(.*?)\n?```", text, re.S)
    return m.group(1).strip() if m else text


@dataclass(frozen=True)
class MockRule:
    kind: str
    patterns: tuple[str, ...]
    reply: str

    def matches(self, kind: str, prompt: str) -> bool:
        if kind != self.kind:
            return False
        return all(p == "*" or p in prompt for p in self.patterns)


def _unescape(s: str) -> str:
    return s.replace("\\n", "\n")


@dataclass
class MockScript:
    rules: list[MockRule] = field(default_factory=list)
    default: str = "error"
    latency: dict[str, float] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> MockScript:
        script = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("@"):
                parts = line[1:].split()
                if parts[:1] == ["default"] and len(parts) == 2 and parts[1] in ("error", "echo"):
                    script.default = parts[1]
                elif parts[:1] == ["latency"] and len(parts) == 3:
                    script.latency[parts[1]] = float(parts[2])
                else:
                    raise ValueError(f"mock script line {lineno}: bad directive {line!r}")
                continue
            fields = [f.strip() for f in raw.split("|", 2)]
            if len(fields) != 3 or fields[0] not in KINDS:
                raise ValueError(f"mock script line {lineno}: expected 'KIND | pattern | reply'")
            patterns = tuple(_unescape(p.strip()) for p in fields[1].split("&&"))
            script.rules.append(MockRule(fields[0], patterns, _unescape(fields[2])))
        return script

    @classmethod
    def load(cls, path: str | Path) -> MockScript:
        return cls.parse(Path(path).read_text(encoding="utf-8"))


class ScriptedMock(LlmBackend):
    """Deterministic backend answering from a :class:`MockScript`."""

    def __init__(self, script: MockScript | str | None = None):
        if script is None:
            script = MockScript()
        elif isinstance(script, str):
            script = MockScript.parse(script)
        self.script = script
        self.calls: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedMock:
        return cls(MockScript.load(path))

    def request(self, kind: str, prompt: str) -> str:
        with self._lock:
            self.calls.append((kind, prompt))
        delay = self.script.latency.get(kind, self.script.latency.get("*", 0.0))
        if delay:
            time.sleep(delay)
        for rule in self.script.rules:
            if rule.matches(kind, prompt):
                return rule.reply
        if self.script.default == "echo":
            return prompt
        first = prompt.strip().splitlines()[0] if prompt.strip() else ""
        raise BackendError(f"mock backend has no rule for {kind} request ({first[:60]})")


class HttpChat(LlmBackend):
    """Chat-completions client configured from PEL_LLM_URL / _MODEL / _KEY."""

    def __init__(self, base_url: str | None = None, model: str | None = None,
                 api_key: str | None = None, timeout: float = 30.0):
        self.base_url = base_url if base_url is not None else os.environ.get("PEL_LLM_URL", "")
        self.model = model or os.environ.get("PEL_LLM_MODEL", "")
        self.api_key = api_key if api_key is not None else os.environ.get("PEL_LLM_KEY", "")
        self.timeout = timeout

    def request(self, kind: str, prompt: str) -> str:
        if not self.base_url:
            raise BackendError("HTTP backend not configured (set PEL_LLM_URL)")
        body = json.dumps(
            {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(
            self.base_url.rstrip("/") + "/chat/completions", data=body, headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError, ValueError) as e:
            raise BackendError(f"HTTP backend request failed: {e}")
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("HTTP backend returned an unexpected response shape")
