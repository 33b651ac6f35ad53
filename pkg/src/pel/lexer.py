from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .errors import LexError, Source, Span

PIPE_CHAR = "▷"  # ▷
ASCII_PIPE = "|>"

BOOL_RE = re.compile(r"#t|#f")
NIL_RE = re.compile(r"#nil")
KEY_RE = re.compile(r":[a-zA-Z0-9_+*/?!<=>.-]+")
NUMBER_RE = re.compile(r"-?\d+(\.\d+)?")

# characters that terminate a symbol run
SYMBOL_BREAK = set(" \t\r\n\f\v()[]\"';|") | {PIPE_CHAR}

DELIMS = {"(": "LPAREN", ")": "RPAREN", "[": "LBRACKET", "]": "RBRACKET", "'": "QUOTE"}


class TokenKind(enum.Enum):
    LPAREN = "LPAREN"
    RPAREN = "RPAREN"
    LBRACKET = "LBRACKET"
    RBRACKET = "RBRACKET"
    QUOTE = "QUOTE"
    PIPE = "PIPE"
    BOOL = "BOOL"
    NIL = "NIL"
    STRING = "STRING"
    KEY = "KEY"
    NUMBER = "NUMBER"
    SYMBOL = "SYMBOL"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    col_start: int
    col_end: int
    span: Span = field(compare=False, repr=False)

    @property
    def value(self) -> str:
        if self.kind is TokenKind.STRING:
            return self.text[1:-1]
        return self.text


def is_symbol_char(ch: str) -> bool:
    return ch not in SYMBOL_BREAK and not ch.isspace()


def classify_run(run: str) -> TokenKind:
    # every other terminal is a prefix-language of the symbol run, so the
    # longest match is the whole run; ties resolve by terminal precedence
    if BOOL_RE.fullmatch(run):
        return TokenKind.BOOL
    if NIL_RE.fullmatch(run):
        return TokenKind.NIL
    if KEY_RE.fullmatch(run):
        return TokenKind.KEY
    if NUMBER_RE.fullmatch(run):
        return TokenKind.NUMBER
    return TokenKind.SYMBOL


class _Cursor:
    def __init__(self, source: Source):
        self.source = source
        self.text = source.text
        self.pos = 0
        self.line = 1
        self.col = 1

    def peek(self, k: int = 0) -> str:
        i = self.pos + k
        return self.text[i] if i < len(self.text) else ""

    def advance(self) -> str:
        ch = self.text[self.pos]
        self.pos += 1
        if ch == "\n":
            self.line += 1
            self.col = 1
        else:
            self.col += 1
        return ch

    def span_from(self, start: int, line: int, col: int) -> Span:
        # end column is inclusive: the column of the last consumed char
        end_line, end_col = self.line, self.col - 1
        if end_col == 0:
            # last consumed char was a newline
            end_line -= 1
            end_col = len(self.source.line(end_line)) + 1
        return Span(start, self.pos, line, col, end_line, end_col, self.source)


def tokenize(source: str | Source) -> list[Token]:
    """Split Pel source into tokens, dropping whitespace and `;` comments."""
    if isinstance(source, str):
        source = Source(source)
    cur = _Cursor(source)
    tokens: list[Token] = []

    def emit(kind: TokenKind, start: int, line: int, col: int) -> None:
        span = cur.span_from(start, line, col)
        tokens.append(
            Token(kind, cur.text[start : cur.pos], line, col, span.end_col, span)
        )

    while cur.pos < len(cur.text):
        ch = cur.peek()
        start, line, col = cur.pos, cur.line, cur.col
        if ch.isspace():
            cur.advance()
        elif ch == ";":
            while cur.pos < len(cur.text) and cur.peek() != "\n":
                cur.advance()
        elif ch in DELIMS:
            cur.advance()
            emit(TokenKind[DELIMS[ch]], start, line, col)
        elif ch == PIPE_CHAR:
            cur.advance()
            emit(TokenKind.PIPE, start, line, col)
        elif ch == "|":
            if cur.peek(1) != ">":
                cur.advance()
                raise LexError(
                    "unexpected '|' (did you mean the pipe '|>'?)",
                    cur.span_from(start, line, col),
                )
            cur.advance()
            cur.advance()
            emit(TokenKind.PIPE, start, line, col)
        elif ch == '"':
            cur.advance()
            while cur.pos < len(cur.text) and cur.peek() != '"':
                cur.advance()
            if cur.pos >= len(cur.text):
                err = LexError("unterminated string", cur.span_from(start, line, col))
                err.incomplete = True
                raise err
            cur.advance()
            emit(TokenKind.STRING, start, line, col)
        else:
            while cur.pos < len(cur.text) and is_symbol_char(cur.peek()):
                cur.advance()
            emit(classify_run(cur.text[start : cur.pos]), start, line, col)
    return tokens
