"""Hypothesis strategies for random Pel syntax trees and values."""

from __future__ import annotations

from hypothesis import strategies as st

from pel.core import NIL, Key
from pel.syntax import Atom, Call, LiteralList, PairExpr, PipeChain, Quoted, Symbol

SYMBOL_NAMES = ["f", "g", "x", "y", "my-foo", "MAIN/FINANCE", "+", "gt", "a?", "<=>", "#x", "-"]
KEY_NAMES = ["a", "b", "name", "x-y", "at", "k1"]

numbers = st.one_of(
    st.integers(min_value=-10**6, max_value=10**6),
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False).filter(
        lambda f: f != int(f) or abs(f) < 1e15
    ),
)
strings = st.text(
    alphabet=st.characters(blacklist_characters='"', blacklist_categories=("Cs",)), max_size=8
)


def atoms(keys: bool = True):
    options = [
        numbers.map(Atom),
        strings.map(Atom),
        st.booleans().map(Atom),
        st.just(Atom(NIL)),
        st.sampled_from(SYMBOL_NAMES).map(Symbol),
    ]
    if keys:
        options.append(st.sampled_from(KEY_NAMES).map(lambda k: Atom(Key(k))))
    return st.one_of(*options)


def _fold(items: list, allow_pairs: bool) -> list:
    # keep trees in the shape the parser produces: keys fold with neighbours
    from pel.parser import fold_pairs

    return fold_pairs(items, allow_pairs)


def exprs(max_depth: int = 3, allow_pairs: bool = True, pipes: bool = True, quotes: bool = True):
    """Parsed-shape expressions whose bracket nesting is at most max_depth."""

    def primary(depth: int, pairs: bool):
        base = atoms()
        if depth == 0:
            return base
        sub = expression(depth - 1, pairs)
        opts = [
            base,
            st.tuples(st.sampled_from(SYMBOL_NAMES).map(Symbol), st.lists(sub, max_size=3)).map(
                lambda t: Call(t[0], _fold(t[1], pairs))
            ),
            st.lists(sub, max_size=4).map(lambda xs: LiteralList(_fold(xs, pairs))),
        ]
        return st.one_of(*opts)

    memo: dict = {}

    def expression(depth: int, pairs: bool):
        if (depth, pairs) in memo:
            return memo[depth, pairs]
        memo[depth, pairs] = st.deferred(lambda: built)
        prim = primary(depth, pairs)
        opts = [prim]
        if pipes:
            opts.append(st.lists(prim, min_size=2, max_size=3).map(PipeChain))
        if quotes:
            # under a quote nothing folds into pairs
            opts.append(expression(depth, False).map(Quoted))
        built = st.one_of(*opts)
        memo[depth, pairs] = built
        return built

    return expression(max_depth, allow_pairs)


def programs(max_depth: int = 2, **kw):
    return st.lists(exprs(max_depth, **kw), max_size=4).map(lambda xs: _fold(xs, True))
