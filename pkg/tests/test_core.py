import pytest
from hypothesis import given
from hypothesis import strategies as st

from pel.core import (
    NIL,
    Closure,
    Environment,
    Key,
    ListLit,
    Pair,
    Param,
    display,
    make_partial,
    values_equal,
)
from pel.errors import DuplicateArgument, RedefinitionOfBuiltin, UnboundSymbol, UnknownNamedArgument
from conftest import run


def add_closure():
    return Closure((Param("x"), Param("y")), body=None, name="add")


def test_lookup_after_def(interp):
    interp.run("(def pi 3.14)")
    assert interp.global_env.lookup("pi") == 3.14


def test_lookup_missing():
    with pytest.raises(UnboundSymbol):
        Environment().lookup("nonexistent")


def test_child_shadows_parent():
    parent = Environment()
    parent.define("x", 1)
    child = parent.child()
    child.define("x", 2)
    assert child.lookup("x") == 2
    assert parent.lookup("x") == 1


def test_define_returns_value(interp):
    assert interp.run('(def name "Behnam")') == "Behnam"


def test_redefine_user_symbol(interp):
    interp.run("(def a 1)")
    assert interp.run("(def a 2) a") == 2


def test_builtin_is_protected_globally(interp):
    with pytest.raises(RedefinitionOfBuiltin):
        interp.run("(def print 1)")


def test_builtin_name_allowed_as_parameter():
    assert run("((lambda [:len] (+ len 1)) 2)") == 3


def test_partial_binds_x():
    add5 = make_partial(add_closure(), {"x": 5})
    assert add5.bound == {"x": 5}
    assert [p.name for p in add5.unbound] == ["y"]


def test_partial_of_nothing_is_equal_copy():
    c = add_closure()
    copy = make_partial(c, {})
    assert copy is not c
    assert (copy.params, dict(copy.bound), copy.name) == (c.params, dict(c.bound), c.name)


def test_partial_duplicate():
    with pytest.raises(DuplicateArgument):
        make_partial(make_partial(add_closure(), {"x": 5}), {"x": 6})


def test_partial_unknown_name():
    with pytest.raises(UnknownNamedArgument):
        make_partial(add_closure(), {"z": 1})


def test_original_closure_unchanged():
    c = add_closure()
    make_partial(c, {"x": 1})
    assert c.bound == {}


def test_nil_has_no_truthiness():
    with pytest.raises(TypeError):
        bool(NIL)


@pytest.mark.parametrize(
    "value, text",
    [
        (3.0, "3"),
        (2.5, "2.5"),
        ("hi", '"hi"'),
        (True, "#t"),
        (False, "#f"),
        (NIL, "#nil"),
        (Key("a"), ":a"),
        (Pair(Key("a"), 1), ":a 1"),
        (ListLit.of(1, "b", ListLit.of()), '[1 "b" []]'),
    ],
)
def test_display(value, text):
    assert display(value) == text


def test_closure_display_and_identity_equality():
    c = run("(lambda [:x :y] x)")
    assert display(c) == "#<closure anon 2>"
    d = run("(lambda [:x :y] x)")
    assert values_equal(c, c) and not values_equal(c, d)


def test_bool_is_not_a_number():
    assert not values_equal(True, 1)
    assert values_equal(1, 1.0)


scalars = st.one_of(st.integers(), st.text(max_size=5), st.booleans(), st.just(NIL))


@given(st.lists(scalars, max_size=6))
def test_list_equality_is_structural(xs):
    assert values_equal(ListLit(tuple(xs)), ListLit(tuple(xs)))
    assert values_equal(ListLit(tuple(xs)), ListLit(tuple(xs) + (1,))) is False
