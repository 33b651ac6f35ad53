"""Pel: a Lisp-inspired orchestration language for LLM-written programs."""

from .core import NIL, Closure, Environment, Key, ListLit, Pair, display
from .errors import PelException
from .evaluator import Interpreter
from .parser import parse

__all__ = [
    "NIL",
    "Closure",
    "Environment",
    "Interpreter",
    "Key",
    "ListLit",
    "Pair",
    "PelException",
    "display",
    "parse",
    "run",
]

__version__ = "0.1.0"


def run(source: str, backend=None):
    """Evaluate ``source`` in a fresh interpreter and return the last value."""
    return Interpreter(backend=backend).run(source)
