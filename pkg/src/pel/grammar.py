"""Capability gating and grammar export.

A :class:`CapabilityConfig` switches language constructs off. ``validate``
reports every use of a disabled construct with its span, and the two
exporters emit the grammar that remains: EBNF text, or a regular
expression matching exactly the programs up to a given bracket nesting
depth (the context-free grammar unrolled ``depth`` times).
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CapabilityError, DepthTooLarge, Span
from .syntax import (
    CARET,
    Call,
    Element,
    Expr,
    LiteralList,
    PairExpr,
    PipeChain,
    Quoted,
    Symbol,
    nesting_depth,
    walk,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

REGEX_SIZE_CAP = 1 << 20
ASYNC_SYMBOL = "do/async"


@dataclass(frozen=True)
class CapabilityConfig:
    allow_pipe: bool = True
    allow_quote: bool = True
    allow_literal_list: bool = True
    allow_do_async: bool = True
    disabled_symbols: frozenset[str] = frozenset()
    max_nesting_depth: int | None = None
    # when set, only builtins plus allowed_symbols (plus names the program
    # binds itself) may appear as symbols
    closed_symbol_set: bool = False
    allowed_symbols: frozenset[str] = frozenset()

    @classmethod
    def from_mapping(cls, data: dict) -> CapabilityConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown capability keys: {', '.join(sorted(unknown))}")
        kw = dict(data)
        for k in ("disabled_symbols", "allowed_symbols"):
            if k in kw:
                kw[k] = frozenset(kw[k])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> CapabilityConfig:
        with open(path, "rb") as f:
            return cls.from_mapping(tomllib.load(f))

    def blocked_symbols(self) -> frozenset[str]:
        blocked = set(self.disabled_symbols)
        if not self.allow_do_async:
            blocked.add(ASYNC_SYMBOL)
        return frozenset(blocked)

    def permitted_symbols(self) -> frozenset[str]:
        """The closed symbol set (only meaningful with closed_symbol_set)."""
        from .builtins import builtin_names

        return (builtin_names() | self.allowed_symbols | {CARET}) - self.blocked_symbols()


@dataclass(frozen=True)
class CapabilityViolation:
    construct: str
    span: Span | None
    flag: str
    message: str


def _bound_names(program: Sequence[Expr]) -> set[str]:
    # def targets, lambda parameters and for iterators the program introduces
    names: set[str] = set()
    for form in program:
        for node in walk(form, into_quotes=False):
            if not (isinstance(node, Call) and isinstance(node.op, Symbol)):
                continue
            op, args = node.op.name, node.args
            named = {a.key: a.value for a in args if isinstance(a, PairExpr)}
            if op == "def":
                target = named.get("name", args[0] if args and not named else None)
                if isinstance(target, Symbol):
                    names.add(target.name)
            elif op == "lambda":
                spec = named.get("params", args[0] if args and not named else None)
                if isinstance(spec, LiteralList):
                    names.update(p.key for p in spec.items if isinstance(p, PairExpr))
            elif op == "for":
                it = named.get("iterator", args[1] if len(args) > 1 and not named else None)
                if isinstance(it, Symbol):
                    names.add(it.name)
    return names


def validate(program: Sequence[Expr], caps: CapabilityConfig) -> list[CapabilityViolation]:
    """Every use of a construct the capabilities forbid, in source order."""
    out: list[CapabilityViolation] = []
    blocked = caps.blocked_symbols()
    permitted = caps.permitted_symbols() | _bound_names(program) if caps.closed_symbol_set else None
    for form in program:
        if caps.max_nesting_depth is not None:
            d = nesting_depth(form)
            if d > caps.max_nesting_depth:
                out.append(CapabilityViolation(
                    "nesting", form.span, "max_nesting_depth",
                    f"nesting depth {d} exceeds the limit of {caps.max_nesting_depth}",
                ))
        for node in walk(form):
            if isinstance(node, PipeChain) and not caps.allow_pipe:
                for ps in node.pipe_spans or [node.span]:
                    out.append(CapabilityViolation("pipe", ps, "allow_pipe", "pipe disabled"))
            elif isinstance(node, Quoted) and not caps.allow_quote:
                out.append(CapabilityViolation("quote", node.span, "allow_quote", "quote disabled"))
            elif isinstance(node, LiteralList) and not node.implicit and not caps.allow_literal_list:
                out.append(CapabilityViolation(
                    "literal_list", node.span, "allow_literal_list", "literal lists disabled"
                ))
            elif isinstance(node, Symbol):
                name = node.name
                if name in blocked:
                    flag = "allow_do_async" if name == ASYNC_SYMBOL and not caps.allow_do_async else "disabled_symbols"
                    out.append(CapabilityViolation("symbol", node.span, flag, f"symbol '{name}' disabled"))
                elif permitted is not None and name not in permitted:
                    out.append(CapabilityViolation(
                        "symbol", node.span, "closed_symbol_set",
                        f"symbol '{name}' is not in the allowed symbol set",
                    ))
    return out


def check(program: Sequence[Expr], caps: CapabilityConfig) -> None:
    violations = validate(program, caps)
    if violations:
        raise CapabilityError(violations)


# -- EBNF ------------------------------------------------------------------


def _ebnf_str(s: str) -> str:
    return f"'{s}'" if '"' in s else f'"{s}"'


def export_ebnf(caps: CapabilityConfig = CapabilityConfig()) -> str:
    primaries = ["atom", "list"]
    if caps.allow_literal_list:
        primaries.append("literal_list")
    if caps.allow_quote:
        primaries.append("quoted_expression")
    lines = [
        "(* A program is zero or more expressions. *)",
        "program = { expression } ;",
    ]
    if caps.allow_pipe:
        lines.append("expression = primary , { PIPE , primary } ;")
    else:
        lines.append("expression = primary ;")
    lines += [
        "primary = " + " | ".join(primaries) + " ;",
        "(* KEY followed by a non-KEY element folds into a key/value pair. *)",
        "atom = BOOL | NIL | NUMBER | STRING | SYMBOL | KEY ;",
        "list = LPAREN , { expression } , RPAREN ;",
    ]
    if caps.allow_literal_list:
        lines.append("literal_list = LBRACKET , { expression } , RBRACKET ;")
    if caps.allow_quote:
        lines.append("(* Keys under a quote stay literal keys. *)")
        lines.append("quoted_expression = QUOTE , expression ;")
    lines += ['LPAREN = "(" ;', 'RPAREN = ")" ;']
    if caps.allow_literal_list:
        lines += ['LBRACKET = "[" ;', 'RBRACKET = "]" ;']
    if caps.allow_quote:
        lines.append("QUOTE = \"'\" ;")
    if caps.allow_pipe:
        lines.append('PIPE = "▷" | "|>" ;')
    lines += [
        'BOOL = "#t" | "#f" ;',
        'NIL = "#nil" ;',
        "STRING = '\"' , { ? any character except the double quote ? } , '\"' ;",
        'KEY = ":" , key_char , { key_char } ;',
        "key_char = letter | digit | "
        + " | ".join(_ebnf_str(c) for c in "_+*/?!<=>.-")
        + " ;",
        'NUMBER = [ "-" ] , digit , { digit } , [ "." , digit , { digit } ] ;',
        "digit = " + " | ".join(f'"{d}"' for d in "0123456789") + " ;",
        "letter = ? ASCII letter a-z or A-Z ? ;",
    ]
    blocked = sorted(caps.blocked_symbols())
    if caps.closed_symbol_set:
        names = sorted(caps.permitted_symbols())
        lines.append("(* Closed symbol set. *)")
        lines.append("SYMBOL = " + " | ".join(_ebnf_str(n) for n in names) + " ;")
    else:
        lines.append(
            "SYMBOL = ? maximal run of characters other than whitespace, "
            "parentheses, brackets, double quote, apostrophe, semicolon, "
            "vertical bar and U+25B7 that is not BOOL, NIL, KEY or NUMBER ? ;"
        )
        if blocked:
            lines.append("(* SYMBOL excludes: " + ", ".join(blocked) + " *)")
    lines.append("(* Ignored: whitespace, and comments from ';' to end of line. *)")
    return "\n".join(lines) + "\n"


# -- bounded-depth regex -----------------------------------------------------

_BREAK = r"\s()\[\]\"';|▷"
SC = f"[^{_BREAK}]"
WS = r"(?:\s|;[^\n]*(?![^\n]))"
WS0 = WS + "*"
STRING = r'"[^"]*"'
PIPE = r"(?:▷|\|>)"
# a symbol run may not continue one that is already open
_RUN_START = rf"(?:(?<!{SC})|(?<=\|>))"
_TERMINAL_RUNS = (r"#t", r"#f", r"#nil", r":[a-zA-Z0-9_+*/?!<=>.\-]+", r"-?\d+(?:\.\d+)?")


def _run_pattern(caps: CapabilityConfig) -> str:
    if caps.closed_symbol_set:
        names = sorted(caps.permitted_symbols(), key=lambda s: (-len(s), s))
        alts = list(_TERMINAL_RUNS) + [re.escape(n) for n in names]
        return _RUN_START + "(?:" + "|".join(alts) + f")(?!{SC})"
    blocked = sorted(caps.blocked_symbols(), key=lambda s: (-len(s), s))
    guard = ""
    if blocked:
        guard = "(?!(?:" + "|".join(re.escape(n) for n in blocked) + f")(?!{SC}))"
    return _RUN_START + guard + f"{SC}+(?!{SC})"


def _start_class(caps: CapabilityConfig) -> str:
    # first characters a primary can begin with
    chars = r"(\"" + ("'" if caps.allow_quote else "") + (r"\[" if caps.allow_literal_list else "")
    return f"(?=[{chars}]|{SC})"


def export_regex(caps: CapabilityConfig = CapabilityConfig(), depth: int = 3,
                 size_cap: int = REGEX_SIZE_CAP) -> str:
    """Regex accepting exactly the programs of nesting depth <= ``depth``."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if caps.max_nesting_depth is not None:
        depth = max(0, min(depth, caps.max_nesting_depth))
    atom = f"(?:{STRING}|{_run_pattern(caps)}|\\({WS0}\\))"
    quotes = f"(?:'{WS0})*" if caps.allow_quote else ""
    pipe = f"(?:{WS0}{PIPE}{WS0}{_start_class(caps)})?" if caps.allow_pipe else ""

    def seq(element: str) -> str:
        # an element directly followed by a pipe must be followed by another
        # element: the lookahead after the pipe rules out a dangling pipe
        return f"{WS0}(?:{element}{pipe}{WS0})*"

    primary = atom
    for _ in range(depth):
        element = quotes + primary
        inner = seq(element)
        alts = [atom, f"\\({inner}\\)"]
        if caps.allow_literal_list:
            alts.append(f"\\[{inner}\\]")
        primary = "(?:" + "|".join(alts) + ")"
        if len(primary) > size_cap:
            raise DepthTooLarge(
                f"regex for depth {depth} exceeds the {size_cap}-byte size cap"
            )
    pattern = seq(quotes + primary)
    if len(pattern.encode("utf-8")) > size_cap:
        raise DepthTooLarge(f"regex for depth {depth} exceeds the {size_cap}-byte size cap")
    return pattern


def compile_regex(caps: CapabilityConfig = CapabilityConfig(), depth: int = 3) -> re.Pattern:
    return re.compile(export_regex(caps, depth))


def program_depth(program: Iterable[Element]) -> int:
    return max((nesting_depth(e) for e in program), default=0)
