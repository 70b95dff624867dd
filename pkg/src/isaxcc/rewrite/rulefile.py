"""User rule files.

Grammar (one rule per top-level form, ``;`` starts a comment)::

    (rule NAME LHS RHS [GUARD ...])

Patterns are s-expressions ``(symbol child ...)``.  An atom starting with
``?`` is a pattern variable; any other atom is a leaf symbol such as
``const:0:i32``.  Guards are ``(is-const ?v)`` and ``(const-range ?v LO HI)``
(inclusive); all guards must hold.
"""

from __future__ import annotations

import re
from typing import Callable

from ..egraph import EGraph, RewriteRule, Subst, is_var

_TOKEN = re.compile(r"\s*(?:;[^\n]*\n?)*\s*([()]|[^\s()]+)")


class RuleFileError(Exception):
    pass


def _tokens(text: str) -> list[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group(1) is not None:
            out.append(m.group(1))
        pos = m.end()
    if text[pos:].strip() and not text[pos:].strip().startswith(";"):
        raise RuleFileError(f"unexpected text at offset {pos}")
    return out


def _read(tokens: list[str], k: int):
    if k >= len(tokens):
        raise RuleFileError("unexpected end of input")
    tok = tokens[k]
    if tok == ")":
        raise RuleFileError("unbalanced ')'")
    if tok != "(":
        return tok, k + 1
    items = []
    k += 1
    while True:
        if k >= len(tokens):
            raise RuleFileError("missing ')'")
        if tokens[k] == ")":
            return items, k + 1
        item, k = _read(tokens, k)
        items.append(item)


def _pattern(sexp):
    if isinstance(sexp, str):
        return sexp if is_var(sexp) else (sexp,)
    if not sexp or not isinstance(sexp[0], str) or is_var(sexp[0]):
        raise RuleFileError(f"malformed pattern {sexp}")
    return (sexp[0],) + tuple(_pattern(c) for c in sexp[1:])


def _guard(sexp) -> Callable[[EGraph, Subst], bool]:
    if not isinstance(sexp, list) or not sexp:
        raise RuleFileError(f"malformed guard {sexp}")
    kind = sexp[0]
    if kind == "is-const" and len(sexp) == 2:
        var = sexp[1]
        return lambda g, s: g.const_of(s[var]) is not None
    if kind == "const-range" and len(sexp) == 4:
        var, lo, hi = sexp[1], int(sexp[2]), int(sexp[3])

        def in_range(g: EGraph, s: Subst) -> bool:
            c = g.const_of(s[var])
            return c is not None and lo <= c[0] <= hi

        return in_range
    raise RuleFileError(f"unknown guard {sexp}")


def parse_rules(text: str) -> list[RewriteRule]:
    tokens = _tokens(text)
    rules = []
    k = 0
    while k < len(tokens):
        form, k = _read(tokens, k)
        if not isinstance(form, list) or len(form) < 4 or form[0] != "rule":
            raise RuleFileError(f"expected (rule NAME LHS RHS [GUARD...]), got {form}")
        name = form[1]
        lhs, rhs = _pattern(form[2]), _pattern(form[3])
        guards = [_guard(gd) for gd in form[4:]]
        guard = None
        if guards:
            guard = lambda g, s, gs=tuple(guards): all(gd(g, s) for gd in gs)  # noqa: E731
        try:
            rules.append(RewriteRule(name, lhs, rhs, guard))
        except ValueError as e:
            raise RuleFileError(str(e)) from None
    return rules
