"""Placement-insensitive structural equality of functions.

Two functions are structurally equal when every block has the same sequence
of ordering-relevant operations (terminators, side effects, loops) and the
operand dataflow of each is the same term.  Where a pure operation sits in
its block, or whether a subterm is shared, does not matter.  Loads remember
how many effects of their block precede them, so moving a load across a
store is a real difference.
"""

from __future__ import annotations

from typing import Any

from .core import Block, Function, root_kind

_LOAD_LIKE = ("load", "memload")


class _Interner:
    def __init__(self) -> None:
        self.table: dict[tuple, int] = {}

    def __call__(self, key: tuple) -> int:
        return self.table.setdefault(key, len(self.table))


def _attrs(op) -> tuple:
    return tuple(sorted((k, v if not isinstance(v, list) else tuple(v)) for k, v in op.attrs.items()))


def function_key(f: Function, intern: _Interner) -> int:
    env: dict[str, int] = {}
    for k, (name, t) in enumerate(f.params):
        env[name] = intern(("param", k, str(t)))
    for k, (name, t) in enumerate(f.statics):
        env[name] = intern(("static", k, str(t)))

    def operand(v: Any) -> int:
        if isinstance(v, int):
            return intern(("lit", v))
        return env[v]

    def block(b: Block, path: tuple) -> int:
        for k, (name, t) in enumerate(b.args):
            env[name] = intern(("arg", path, k, str(t)))
        effects = 0
        roots: list[int] = []
        for op in b.ops:
            kind = root_kind(op)
            operands = tuple(operand(v) for v in op.operands)
            types = tuple(str(t) for t in op.result_types)
            if kind is None:
                key: tuple = (op.opcode, _attrs(op), types, operands)
                if op.opcode in _LOAD_LIKE:
                    key += (("epoch", path, effects),)
                node = intern(key)
                for r in op.results:
                    env[r] = node
                continue
            if op.opcode == "for":
                pos = path + (len(roots),)
                body = block(op.body, pos)
                node = intern(("for", _attrs(op), types, operands, body))
                for k, r in enumerate(op.results):
                    env[r] = intern(("result", pos, k))
            else:
                node = intern((op.opcode, _attrs(op), types, operands))
                for k, r in enumerate(op.results):
                    env[r] = intern(("result", path + (len(roots),), k))
            roots.append(node)
            if kind != "terminator":
                effects += 1
        return intern(("block", tuple(roots)))

    body = block(f.body, ())
    sig = tuple((str(t)) for _, t in f.params)
    return intern(("func", f.name, sig, tuple(str(t) for _, t in f.statics), body))


def structurally_equal(a: Function, b: Function) -> bool:
    intern = _Interner()
    return function_key(a, intern) == function_key(b, intern)
