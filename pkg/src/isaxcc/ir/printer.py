"""Canonical text form.

Parameters and static arrays keep their names; every other value is
renumbered ``%0, %1, ...`` in definition order.  A bare ``yield`` or
``return`` closing a block is left implicit.
"""

from __future__ import annotations

from typing import Any

from .core import Block, Function, Operand, Operation

INDENT = "  "


class Namer:
    def __init__(self, fixed: dict[str, str] | None = None):
        self.names: dict[str, str] = dict(fixed or {})
        self.counter = 0

    def define(self, name: str) -> str:
        new = str(self.counter)
        self.counter += 1
        self.names[name] = new
        return "%" + new

    def use(self, operand: Operand) -> str:
        if isinstance(operand, int):
            return str(operand)
        try:
            return "%" + self.names[operand]
        except KeyError:
            raise ValueError(f"use of undefined value %{operand}") from None


def format_attr_value(value: Any) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(format_attr_value(v) for v in value) + "]"
    if isinstance(value, str) and not value.isidentifier():
        return '"' + value + '"'
    return str(value)


def format_attrs(attrs: dict) -> str:
    items = ", ".join(f"{k} = {format_attr_value(attrs[k])}" for k in sorted(attrs))
    return "{" + items + "}"


def print_function(f: Function) -> str:
    fixed = {name: name for name, _ in f.params}
    fixed.update({name: name for name, _ in f.statics})
    namer = Namer(fixed)
    params = ", ".join(f"%{n}: {t}" for n, t in f.params)
    lines = [f"func @{f.name}({params}) {{"]
    lines.extend(block_lines(f.body, namer, 1, implicit="return"))
    lines.append("}")
    return "\n".join(lines) + "\n"


def block_lines(block: Block, namer: Namer, depth: int, implicit: str) -> list[str]:
    lines: list[str] = []
    ops = list(block.ops)
    if ops and ops[-1].opcode == implicit and not ops[-1].operands:
        ops.pop()
    for op in ops:
        lines.extend(op_lines(op, namer, depth))
    return lines


def op_lines(op: Operation, namer: Namer, depth: int) -> list[str]:
    pad = INDENT * depth
    use = namer.use
    if op.opcode == "for":
        lb, ub, step = (use(b) for b in op.bounds)
        inits = [use(v) for v in op.inits]
        results = [namer.define(r) for r in op.results]
        body = op.body
        iv = namer.define(body.args[0][0])
        carried = [namer.define(a) for a, _ in body.args[1:]]
        head = f"for {iv} = {lb} to {ub} step {step}"
        if carried:
            pairs = ", ".join(f"{a} = {i}" for a, i in zip(carried, inits))
            head += f" iter_args({pairs})"
        if op.attrs:
            head += " attrs " + format_attrs(dict(op.attrs))
        if results:
            head = ", ".join(results) + " = " + head
        lines = [pad + head + " {"]
        lines.extend(block_lines(body, namer, depth + 1, implicit="yield"))
        lines.append(pad + "}")
        return lines

    operands = [use(v) for v in op.operands]
    results = [namer.define(r) for r in op.results]
    lhs = ", ".join(results) + " = " if results else ""
    ty = " : " + ", ".join(str(t) for t in op.result_types) if op.result_types else ""
    code = op.opcode
    if code == "const":
        text = f"const {op.attrs['value']}{ty}"
    elif code == "cmpi":
        text = f"cmpi {op.attrs['pred']}, {', '.join(operands)}{ty}"
    elif code == "readrf":
        text = f"readrf {op.attrs['reg']}{ty}"
    elif code == "writerf":
        text = f"writerf {op.attrs['reg']}, {operands[0]}"
    elif code in ("blockload", "blockstore"):
        text = f"{code} {operands[0]}, {operands[1]}, {op.attrs['len']}"
    elif code == "isax.call":
        text = f"isax.call @{op.attrs['callee']}({', '.join(operands)}){ty}"
    else:
        text = code
        if operands:
            text += " " + ", ".join(operands)
        text += ty
    return [pad + lhs + text]
