from __future__ import annotations

from .core import NIL, Key
from .errors import ParseError, Source, Span
from .lexer import Token, TokenKind, tokenize
from .syntax import (
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

# operators whose bare multi-argument form is folded into one literal list
SEQUENCE_OPS = ("do", "do/async")

_CLOSERS = {TokenKind.LPAREN: TokenKind.RPAREN, TokenKind.LBRACKET: TokenKind.RBRACKET}
_CLOSER_TEXT = {TokenKind.RPAREN: ")", TokenKind.RBRACKET: "]"}


def fold_pairs(elements: list[Expr], allow_pairs: bool = True) -> list[Element]:
    """Fold `:key value` runs into PairExpr nodes.

    A key followed by another key, or ending the list, pairs with nothing
    (PairExpr.value is None, evaluating to #nil).
    """
    if not allow_pairs:
        return list(elements)
    out: list[Element] = []
    i = 0
    while i < len(elements):
        e = elements[i]
        if _is_key(e):
            nxt = elements[i + 1] if i + 1 < len(elements) else None
            if nxt is not None and not _is_key(nxt):
                out.append(PairExpr(e.value.name, nxt, _join(e.span, nxt.span)))
                i += 2
                continue
            out.append(PairExpr(e.value.name, None, e.span))
        else:
            out.append(e)
        i += 1
    return out


def _is_key(e: Expr) -> bool:
    return isinstance(e, Atom) and isinstance(e.value, Key)


def _join(a: Span | None, b: Span | None) -> Span | None:
    if a is None or b is None:
        return a or b
    return a.merge(b)


class Parser:
    def __init__(self, tokens: list[Token], source: Source | None = None):
        self.tokens = tokens
        self.pos = 0
        if source is None and tokens:
            source = tokens[0].span.source
        self.source = source

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def eof_span(self) -> Span | None:
        if self.source is not None:
            text = self.source.text
            n = len(text)
            line = text.count("\n", 0, n) + 1
            col = n - (text.rfind("\n", 0, n) + 1) + 1
            return Span(n, n, line, col, line, col, self.source)
        if self.tokens:
            return self.tokens[-1].span
        return None

    def parse_program(self) -> list[Expr]:
        exprs: list[Expr] = []
        while self.peek() is not None:
            exprs.append(self.parse_expression(allow_pairs=True))
        return fold_pairs(exprs, allow_pairs=True)

    def parse_expression(self, allow_pairs: bool) -> Expr:
        first = self.parse_primary(allow_pairs)
        tok = self.peek()
        if tok is None or tok.kind is not TokenKind.PIPE:
            return first
        stages = [first]
        pipe_spans: list[Span] = []
        while tok is not None and tok.kind is TokenKind.PIPE:
            pipe = self.next()
            pipe_spans.append(pipe.span)
            nxt = self.peek()
            if nxt is None or nxt.kind in (TokenKind.RPAREN, TokenKind.RBRACKET):
                err = ParseError("pipe is missing its right-hand expression", pipe.span)
                err.incomplete = nxt is None
                raise err
            stages.append(self.parse_primary(allow_pairs))
            tok = self.peek()
        return PipeChain(stages, _join(first.span, stages[-1].span), pipe_spans)

    def parse_primary(self, allow_pairs: bool) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.eof_span())
        kind = tok.kind
        if kind in _CLOSERS:
            return self.parse_list(allow_pairs)
        self.next()
        if kind is TokenKind.QUOTE:
            if self.peek() is None:
                err = ParseError("quote at end of input", tok.span)
                err.incomplete = True
                raise err
            inner = self.parse_expression(allow_pairs=False)
            return Quoted(inner, _join(tok.span, inner.span))
        if kind in (TokenKind.RPAREN, TokenKind.RBRACKET):
            raise ParseError(f"unbalanced '{tok.text}' with no opening delimiter", tok.span)
        if kind is TokenKind.PIPE:
            raise ParseError("pipe is missing its left-hand expression", tok.span)
        return atom_from_token(tok)

    def parse_list(self, allow_pairs: bool) -> Expr:
        opener = self.next()
        closer = _CLOSERS[opener.kind]
        elements: list[Expr] = []
        while True:
            tok = self.peek()
            if tok is None:
                err = ParseError(
                    f"unbalanced '{opener.text}' opened at line {opener.line}, "
                    f"col {opener.col_start}",
                    self.eof_span(),
                )
                err.incomplete = True
                raise err
            if tok.kind is closer:
                end = self.next()
                break
            if tok.kind in (TokenKind.RPAREN, TokenKind.RBRACKET):
                raise ParseError(
                    f"unbalanced delimiters: expected '{_CLOSER_TEXT[closer]}' "
                    f"but found '{tok.text}'",
                    tok.span,
                )
            elements.append(self.parse_expression(allow_pairs))
        span = opener.span.merge(end.span)
        if opener.kind is TokenKind.LBRACKET:
            return LiteralList(fold_pairs(elements, allow_pairs), span)
        if not elements:
            return Atom(NIL, span)
        op, args = elements[0], fold_pairs(elements[1:], allow_pairs)
        if (
            isinstance(op, Symbol)
            and op.name in SEQUENCE_OPS
            and args
            and not any(isinstance(a, PairExpr) for a in args)
            and not (len(args) == 1 and isinstance(args[0], LiteralList))
        ):
            inner = _join(args[0].span, args[-1].span)
            args = [LiteralList(list(args), inner, implicit=True)]
        return Call(op, args, span)


def atom_from_token(tok: Token) -> Expr:
    kind = tok.kind
    if kind is TokenKind.BOOL:
        return Atom(tok.text == "#t", tok.span)
    if kind is TokenKind.NIL:
        return Atom(NIL, tok.span)
    if kind is TokenKind.NUMBER:
        value = float(tok.text) if "." in tok.text else int(tok.text)
        return Atom(value, tok.span)
    if kind is TokenKind.STRING:
        return Atom(tok.value, tok.span)
    if kind is TokenKind.KEY:
        return Atom(Key(tok.text[1:]), tok.span)
    return Symbol(tok.text, tok.span)


def parse_program(tokens: list[Token], source: Source | None = None) -> list[Expr]:
    return Parser(tokens, source).parse_program()


def parse(text: str | Source, name: str = "<input>") -> list[Expr]:
    """Tokenize and parse source text into top-level expressions."""
    source = text if isinstance(text, Source) else Source(text, name)
    return parse_program(tokenize(source), source)
