"""The shipped internal rule set: algebraic identities over the dataflow."""

from __future__ import annotations

from typing import Callable, Optional

from ..egraph import EGraph, RewriteRule, Subst, const_symbol
from ..ir.interp import _cmp, eval_binary
from ..ir.types import bit_width, parse_type, wrap

_FOLDABLE = ("addi", "subi", "muli", "shli", "shri", "andi", "ori")


def _const(g: EGraph, subst: Subst, var: str) -> Optional[tuple[int, str]]:
    return g.const_of(subst[var])


def _width(ty: str) -> int:
    return bit_width(parse_type(ty))


def _lit(value: int, ty: str) -> tuple:
    return (const_symbol(wrap(value, parse_type(ty)), ty),)


# -- guards / right-hand sides -------------------------------------------


def _shl_to_mul(g: EGraph, s: Subst):
    c = _const(g, s, "?c")
    if c is None or not 0 <= c[0] < _width(c[1]):
        return None
    return ("muli", "?x", _lit(1 << c[0], c[1]))


def _mul_to_shl(g: EGraph, s: Subst):
    c = _const(g, s, "?c")
    if c is None or c[0] <= 1 or c[0] & (c[0] - 1):
        return None
    return ("shli", "?x", _lit(c[0].bit_length() - 1, c[1]))


def _shr_combine(g: EGraph, s: Subst):
    a, b = _const(g, s, "?a"), _const(g, s, "?b")
    if a is None or b is None or a[1] != b[1]:
        return None
    w = _width(a[1])
    if not (0 <= a[0] < w and 0 <= b[0] < w and a[0] + b[0] < w):
        return None
    return ("shri", "?x", _lit(a[0] + b[0], a[1]))


def _fold(code: str) -> Callable:
    def rhs(g: EGraph, s: Subst):
        a, b = _const(g, s, "?a"), _const(g, s, "?b")
        if a is None or b is None or a[1] != b[1]:
            return None
        return _lit(eval_binary(code, a[0], b[0], parse_type(a[1])), a[1])

    return rhs


def _fold_cmp(pred: str) -> Callable:
    def rhs(g: EGraph, s: Subst):
        a, b = _const(g, s, "?a"), _const(g, s, "?b")
        if a is None or b is None or a[1] != b[1]:
            return None
        return _lit(_cmp(pred, a[0], b[0], parse_type(a[1])), "i1")

    return rhs


def _is(value: int) -> Callable:
    def guard(g: EGraph, s: Subst) -> bool:
        c = _const(g, s, "?c")
        return c is not None and c[0] == value

    return guard


def _mul_zero(g: EGraph, s: Subst):
    c = _const(g, s, "?c")
    if c is None or c[0] != 0:
        return None
    return _lit(0, c[1])


def _factor(g: EGraph, s: Subst):
    a, b = _const(g, s, "?a"), _const(g, s, "?b")
    if a is None or b is None or a[1] != b[1]:
        return None
    return ("muli", "?x", _lit(a[0] + b[0], a[1]))


def _sub_to_add(g: EGraph, s: Subst):
    c = _const(g, s, "?c")
    if c is None:
        return None
    return ("addi", "?x", _lit(-c[0], c[1]))


def _select_const(g: EGraph, s: Subst):
    c = _const(g, s, "?c")
    if c is None:
        return None
    return "?a" if c[0] else "?b"


_REFLEXIVE = {"eq": 1, "ne": 0, "slt": 0, "sle": 1, "sgt": 0, "sge": 1, "ult": 0, "ule": 1, "ugt": 0, "uge": 1}


def _fold_chain(g, s) -> bool:
    # Re-associate only (x op c1) op c2 with non-constant x: enough to fold
    # constant chains, and it cannot enumerate bracketings of long reductions
    # or spin through self-referential classes such as 0 = 0 * c.
    return g.const_of(s["?a"]) is None and g.const_of(s["?b"]) is not None and g.const_of(s["?c"]) is not None


def internal_rules(include_ac: bool = True) -> list[RewriteRule]:
    """The baseline internal rule set, in scheduling order."""
    rules = [
        RewriteRule("shl-to-mul", ("shli", "?x", "?c"), _shl_to_mul),
        RewriteRule("mul-to-shl", ("muli", "?x", "?c"), _mul_to_shl),
        RewriteRule("shr-combine", ("shri", ("shri", "?x", "?a"), "?b"), _shr_combine),
        RewriteRule("sub-to-add", ("subi", "?x", "?c"), _sub_to_add),
        RewriteRule("add-zero", ("addi", "?x", "?c"), "?x", _is(0)),
        RewriteRule("mul-one", ("muli", "?x", "?c"), "?x", _is(1)),
        RewriteRule("mul-zero", ("muli", "?x", "?c"), _mul_zero),
        RewriteRule("factor-mul", ("addi", ("muli", "?x", "?a"), ("muli", "?x", "?b")), _factor),
        RewriteRule("select-const", ("select", "?c", "?a", "?b"), _select_const),
        RewriteRule("select-same", ("select", "?c", "?a", "?a"), "?a"),
    ]
    for code in _FOLDABLE:
        rules.append(RewriteRule(f"fold-{code}", (code, "?a", "?b"), _fold(code)))
    for pred, value in _REFLEXIVE.items():
        rules.append(RewriteRule(f"fold-cmpi-{pred}", (f"cmpi:{pred}", "?a", "?b"), _fold_cmp(pred)))
        rules.append(
            RewriteRule(
                f"cmpi-{pred}-self",
                (f"cmpi:{pred}", "?a", "?a"),
                lambda g, s, value=value: _lit(value, "i1"),
            )
        )
    if include_ac:
        for code in ("addi", "muli"):
            rules.append(RewriteRule(f"{code}-comm", (code, "?a", "?b"), (code, "?b", "?a")))
            rules.append(
                RewriteRule(
                    f"{code}-assoc",
                    (code, (code, "?a", "?b"), "?c"),
                    (code, "?a", (code, "?b", "?c")),
                    _fold_chain,
                )
            )
    return rules
