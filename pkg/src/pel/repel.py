"""REPeL: the read-eval-print loop with restarts and self-healing.

Each top-level form runs against a snapshot of the global frame. When a
form raises, the frame is rolled back to that snapshot (so earlier forms'
bindings survive) and the user, or an answers script, picks one of five
restarts.
"""

from __future__ import annotations

import sys
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Iterator, Sequence, TextIO

from .core import display
from .errors import BackendError, LexError, ParseError, PelException, Source, UnparseableFix
from .parser import parse
from .syntax import (
    Call,
    Element,
    Expr,
    LiteralList,
    PairExpr,
    PipeChain,
    Quoted,
    pretty,
    walk,
)

PROMPT = "Pel> "
CONTINUATION = "...  "
MENU_PROMPT = "Select option (1-5): "
HEAL_PROMPT = "Choice (a/e/r)? "
DEFAULT_HEAL_CAP = 3


class Restart(Enum):
    REWRITE_PROGRAM = 1
    REWRITE_FROM_ERROR = 2
    REWRITE_EXPRESSION = 3
    ABORT = 4
    SELF_HEAL = 5


RESTART_LABELS = {
    Restart.REWRITE_PROGRAM: "Rewrite entire program",
    Restart.REWRITE_FROM_ERROR: "Rewrite from error point forward",
    Restart.REWRITE_EXPRESSION: "Rewrite only the current expression",
    Restart.ABORT: "Abort evaluation",
    Restart.SELF_HEAL: "Use self-healing mode",
}


def render_error(error: PelException) -> str:
    """Header, numbered source lines with a caret underline, docstring context."""
    span = error.span
    lines: list[str] = []
    if span is None:
        where = f" in form {error.form_index + 1}" if error.form_index is not None else ""
        lines.append(f"Error{where}: {error.message}")
    else:
        if span.end_line == span.line:
            pos = f"line {span.line}, col {span.col}-{span.end_col}"
        else:
            pos = f"line {span.line}, col {span.col} to line {span.end_line}, col {span.end_col}"
        lines.append(f"Error at {pos}: {error.message}")
        if span.source is not None:
            lines.extend(_listing(span))
    if error.context is not None:
        lines.append("error context:")
        lines.append(error.context.render())
    return "\n".join(lines)


def _listing(span, before: int = 2) -> list[str]:
    source = span.source
    first = max(1, span.line - before)
    width = len(str(span.end_line))
    out = []
    for n in range(first, span.end_line + 1):
        text = source.line(n)
        out.append(f"{n:>{width}} | {text}")
        if n < span.line:
            continue
        lo = span.col if n == span.line else 1
        hi = span.end_col if n == span.end_line else max(len(text), lo)
        out.append(" " * (width + 3 + lo - 1) + "^" * max(1, hi - lo + 1))
    return out


def numbered(text: str) -> str:
    rows = text.split("\n")
    width = len(str(len(rows)))
    return "\n".join(f"{i:>{width}} | {row}" for i, row in enumerate(rows, 1))


def locate(form: Expr, error: PelException) -> Element:
    """The node of ``form`` the error points at (the form itself by default)."""
    span = error.span
    if span is None or form.span is None or form.span.source is not span.source:
        return form
    best: Element = form
    for node in walk(form, into_quotes=False):
        s = node.span
        if s is None or s.source is not span.source:
            continue
        if (s.start, s.end) == (span.start, span.end):
            return node
        if s.contains(span) and (best.span is None or s.end - s.start < best.span.end - best.span.start):
            best = node
    return best


def replace_node(e: Element, target: Element, new: Expr) -> Element:
    if e is target:
        return new
    if isinstance(e, Call):
        return Call(replace_node(e.op, target, new), [replace_node(a, target, new) for a in e.args], e.span)
    if isinstance(e, LiteralList):
        return LiteralList([replace_node(a, target, new) for a in e.items], e.span, e.implicit)
    if isinstance(e, PipeChain):
        return PipeChain([replace_node(s, target, new) for s in e.stages], e.span, e.pipe_spans)
    if isinstance(e, PairExpr) and e.value is not None:
        return PairExpr(e.key, replace_node(e.value, target, new), e.span)
    if isinstance(e, Quoted):
        return Quoted(replace_node(e.inner, target, new), e.span)
    return e


def is_complete(text: str) -> bool:
    """False when more lines could still turn ``text`` into a valid program."""
    try:
        parse(text)
    except (ParseError, LexError) as e:
        return not e.incomplete
    return True


@dataclass
class _Retry:
    form: Expr


@dataclass
class _Replace:
    forms: list[Expr]


class _Abort:
    pass


ABORTED = _Abort()


class Session:
    """A REPeL session bound to one interpreter.

    ``answers`` switches to scripted mode: restart choices, heal decisions
    and replacement code are taken from it in order, and each prompt is
    echoed together with its answer so transcripts are plain text.
    """

    def __init__(
        self,
        interp,
        out: TextIO | None = None,
        answers: Iterable[str] | None = None,
        auto_heal: bool = False,
        heal_cap: int = DEFAULT_HEAL_CAP,
        caps=None,
        async_mode: bool = False,
        jobs: int | None = None,
        trace: list | None = None,
        show_values: bool = True,
    ):
        self.interp = interp
        self.out = out if out is not None else (interp.out or sys.stdout)
        if interp.out is None:
            interp.out = self.out
        self.scripted = answers is not None
        self._answers: Iterator[str] = iter(list(answers)) if answers is not None else iter(())
        self.auto_heal = auto_heal
        self.heal_cap = heal_cap
        self.caps = caps
        self.async_mode = async_mode
        self.jobs = jobs
        self.trace = trace
        self.show_values = show_values
        self.env = interp.global_env
        self.history: list[str] = []
        self.unresolved = 0
        self.last_value: Any = None

    # -- io -------------------------------------------------------------------

    def emit(self, text: str = "") -> None:
        self.interp.write(text + "\n")

    def ask(self, prompt: str) -> str | None:
        if self.scripted:
            answer = next(self._answers, None)
            if answer is None:
                self.emit(prompt)
                return None
            self.emit(prompt + answer)
            return answer
        try:
            self.out.flush()
            return input(prompt)
        except EOFError:
            return None

    # -- running --------------------------------------------------------------

    def parse_unit(self, text: str, name: str = "<input>") -> list[Expr]:
        program = parse(Source(text, name))
        if self.caps is not None:
            from .grammar import check

            check(program, self.caps)
        return program

    def run_source(self, text: str, name: str = "<input>") -> int:
        """Evaluate a whole program through the restart protocol; 0 or 1."""
        try:
            forms = self.parse_unit(text, name)
        except PelException as e:
            forms = self._recover_unparsed(e)
            if forms is None:
                self.unresolved += 1
                return 1
        self.history.append(text)
        if self.async_mode:
            return self._run_async(forms)
        ok = self.run_forms(forms)
        if not ok:
            self.unresolved += 1
        return 0 if ok else 1

    def _run_async(self, forms: Sequence[Expr]) -> int:
        from .scheduler import run_concurrent

        try:
            value = run_concurrent(forms, self.interp, self.env, self.jobs, self.trace)
            self.last_value = value
        except PelException as e:
            self.emit(render_error(e))
            self.emit("Evaluation aborted (restarts are not offered in async mode).")
            self.unresolved += 1
            return 1
        if self.show_values:
            self.emit(f"⇒ {display(value)}")
        return 0

    def run_forms(self, forms: Sequence[Expr]) -> bool:
        queue = deque(forms)
        while queue:
            form = queue.popleft()
            snapshot = self.env.snapshot()
            heals = [0]
            while True:
                try:
                    value = self.interp.eval(form, self.env)
                except PelException as e:
                    self.env.restore(snapshot)
                    outcome = self.handle_error(e, form, heals)
                    if isinstance(outcome, _Retry):
                        form = outcome.form
                        continue
                    if isinstance(outcome, _Replace):
                        queue = deque(outcome.forms)
                        break
                    return False
                self.last_value = value
                if self.show_values:
                    self.emit(f"⇒ {display(value)}")
                break
        return True

    def _recover_unparsed(self, error: PelException) -> list[Expr] | None:
        # nothing ran yet: every restart amounts to supplying new source
        while True:
            self.emit(render_error(error))
            outcome = self._menu(error, None, [0])
            if isinstance(outcome, _Replace):
                return outcome.forms
            if isinstance(outcome, _Retry):
                return [outcome.form]
            return None

    # -- restarts ---------------------------------------------------------------

    def handle_error(self, error: PelException, form: Expr, heals: list[int]):
        self.emit(render_error(error))
        return self._menu(error, form, heals)

    def _menu(self, error: PelException, form: Expr | None, heals: list[int]):
        if self.auto_heal:
            while heals[0] < self.heal_cap:
                heals[0] += 1
                outcome = self.self_heal(error, form, auto=True)
                if outcome is not None:
                    return outcome
            self.emit(f"Self-healing gave up after {self.heal_cap} proposal(s).")
        while True:
            self.emit("Possible restarts:")
            for r in Restart:
                self.emit(f"{r.value}. {RESTART_LABELS[r]}")
            answer = self.ask(MENU_PROMPT)
            if answer is None:
                self.emit("No more input; aborting evaluation.")
                return ABORTED
            choice = answer.strip()
            if choice not in {"1", "2", "3", "4", "5"}:
                self.emit("Invalid choice; enter a number from 1 to 5.")
                continue
            restart = Restart(int(choice))
            if restart is Restart.ABORT:
                self.emit("Evaluation aborted.")
                return ABORTED
            if restart is Restart.SELF_HEAL:
                outcome = self.self_heal(error, form, auto=False)
            elif restart is Restart.REWRITE_EXPRESSION and form is not None:
                outcome = self._read_replacement(form, locate(form, error), "Replacement expression: ")
            else:
                label = "New program: " if restart is Restart.REWRITE_PROGRAM else "Code from the error point forward: "
                outcome = self._read_program(label)
            if outcome is not None:
                return outcome

    def _read_program(self, prompt: str):
        text = self.ask(prompt)
        if text is None:
            return None
        try:
            forms = self.parse_unit(text.replace("\\n", "\n"), "<rewrite>")
        except PelException as e:
            self.emit(render_error(e))
            return None
        return _Replace(forms)

    def _read_replacement(self, form: Expr, target: Element, prompt: str):
        text = self.ask(prompt)
        if text is None:
            return None
        return self._splice(form, target, text.replace("\\n", "\n"), "<replacement>")

    def _splice(self, form: Expr | None, target: Element | None, text: str, name: str):
        try:
            exprs = self.parse_unit(text, name)
        except PelException as e:
            self.emit(render_error(e))
            return None
        if len(exprs) != 1:
            self.emit(f"Expected exactly one expression, got {len(exprs)}.")
            return None
        if form is None or target is None:
            return _Retry(exprs[0])
        return _Retry(replace_node(form, target, exprs[0]))

    def self_heal(self, error: PelException, form: Expr | None, auto: bool):
        self.emit("SELF-HEALING...")
        backend = self.interp.backend
        target = locate(form, error) if form is not None else None
        if target is not None:
            snippet = target.span.text if target.span is not None else pretty(target)
        else:
            snippet = error.span.source.text if error.span is not None and error.span.source else ""
        try:
            if backend is None:
                raise BackendError("no LLM backend configured")
            fix = backend.propose_fix(error, snippet, error.context)
        except (BackendError, UnparseableFix) as e:
            self.emit(f"Self-healing failed: {e.message}")
            return None
        self.emit("Helper agent proposed rewrite:")
        self.emit(fix)
        if auto:
            self.emit("Auto-accepting the proposed rewrite.")
            text = fix
        else:
            self.emit("Press 'a' to accept, 'e' to edit, 'r' to abort.")
            while True:
                answer = self.ask(HEAL_PROMPT)
                if answer is None or answer.strip() == "r":
                    self.emit("Rewrite rejected.")
                    return None
                if answer.strip() == "a":
                    text = fix
                    break
                if answer.strip() == "e":
                    edited = self.ask("Edited code: ")
                    if edited is None:
                        return None
                    text = edited.replace("\\n", "\n")
                    break
                self.emit("Please answer a, e or r.")
        outcome = self._splice(form, target, text, "<fix>")
        if outcome is not None:
            self.emit(numbered(text))
        return outcome

    # -- the loop ---------------------------------------------------------------

    def read_units(self, stream: TextIO) -> Iterator[str]:
        """Yield complete units of input.

        Interactively a unit ends as soon as the text is complete; from a
        script it ends at a blank line (or end of input) once complete, so
        several lines can be submitted together.
        """
        interactive = not self.scripted and stream.isatty()
        buf: list[str] = []
        while True:
            if interactive:
                try:
                    line = input(PROMPT if not buf else CONTINUATION)
                except EOFError:
                    line = None
            else:
                raw = stream.readline()
                line = raw.rstrip("\n") if raw else None
            if line is None:
                text = "\n".join(buf)
                if text.strip():
                    yield text
                return
            if not buf and not line.strip():
                continue
            buf.append(line)
            text = "\n".join(buf)
            if (interactive or not line.strip()) and is_complete(text):
                yield text.rstrip("\n")
                buf = []

    def repl(self, stream: TextIO | None = None) -> int:
        stream = stream if stream is not None else sys.stdin
        for unit in self.read_units(stream):
            if not (not self.scripted and stream.isatty()):
                rows = unit.split("\n")
                self.emit(PROMPT + rows[0])
                for row in rows[1:]:
                    self.emit(" " * len(PROMPT) + row)
            self.run_source(unit)
        return 1 if self.unresolved else 0
