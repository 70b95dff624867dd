"""Unrolling and tiling of ``for`` operations at the IR level.

Both transforms require literal bounds and a factor that divides the trip
count; no epilogue loops are generated.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from ..ir.core import Block, Function, Operation, Region, trip_count
from ..ir.types import INDEX


class TransformError(Exception):
    pass


def _literal_bounds(op: Operation) -> tuple[int, int, int]:
    lb, ub, step = op.bounds
    if not all(isinstance(b, int) for b in (lb, ub, step)):
        raise TransformError("loop bounds must be literal constants")
    return lb, ub, step


def rename_op(op: Operation, mapping: dict[str, str], suffix: str) -> Operation:
    """Copy ``op`` giving every value it defines a fresh ``suffix``-ed name."""
    operands = tuple(mapping.get(v, v) if isinstance(v, str) else v for v in op.operands)
    regions = []
    for region in op.regions:
        blocks = []
        for b in region.blocks:
            args = []
            for a, t in b.args:
                mapping[a] = a + suffix
                args.append((a + suffix, t))
            ops = tuple(rename_op(o, mapping, suffix) for o in b.ops)
            blocks.append(Block(tuple(args), ops))
        regions.append(Region(tuple(blocks)))
    results = []
    for r in op.results:
        mapping[r] = r + suffix
        results.append(r + suffix)
    return replace(op, operands=operands, results=tuple(results), regions=tuple(regions))


def _strip_unroll(attrs) -> dict:
    return {k: v for k, v in attrs.items() if k != "unroll"}


def unroll(op: Operation, factor: int) -> Operation:
    """Replicate the body ``factor`` times inside a loop of step ``step*factor``."""
    lb, ub, step = _literal_bounds(op)
    n = trip_count(lb, ub, step)
    if factor < 2:
        raise TransformError("unroll factor must be at least 2")
    if n % factor:
        raise TransformError(f"unroll factor {factor} does not divide trip count {n}")
    body = op.body
    iv = body.args[0][0]
    carried = [a for a, _ in body.args[1:]]
    ops: list[Operation] = []
    for k in range(factor):
        suffix = f".u{k}"
        mapping: dict[str, str] = {}
        if k:
            off = f"{iv}{suffix}.off"
            ops.append(Operation("const", (), (off,), (INDEX,), {"value": k * step}))
            ops.append(Operation("addi", (iv, off), (iv + suffix,), (INDEX,)))
            mapping[iv] = iv + suffix
            for a, v in zip(body.args[1:], carried):
                mapping[a[0]] = v
            copies = [rename_op(o, mapping, suffix) for o in body.ops]
        else:
            copies = list(body.ops)
        term = copies.pop()
        ops.extend(copies)
        carried = [v for v in term.operands]
    ops.append(Operation("yield", tuple(carried)))
    new_body = Block(body.args, tuple(ops))
    return replace(
        op,
        operands=(lb, ub, step * factor) + tuple(op.inits),
        attrs=_strip_unroll(op.attrs),
        regions=(Region((new_body,)),),
    )


def tile(op: Operation, size: int) -> Operation:
    """Split into an outer loop of step ``step*size`` and an inner 0..step*size loop."""
    lb, ub, step = _literal_bounds(op)
    n = trip_count(lb, ub, step)
    if size < 2 or size > n:
        raise TransformError(f"tile size {size} outside [2, {n}]")
    if n % size:
        raise TransformError(f"tile size {size} does not divide trip count {n}")
    body = op.body
    iv = body.args[0][0]
    io, ii = f"{iv}.o", f"{iv}.i"
    outer_args = tuple((f"{a}.o", t) for a, t in body.args[1:])
    inner_results = tuple(f"{a}.t" for a, _ in body.args[1:])
    inner_ops = (Operation("addi", (io, ii), (iv,), (INDEX,)),) + body.ops
    inner = Operation(
        "for",
        (0, step * size, step) + tuple(a for a, _ in outer_args),
        inner_results,
        op.result_types,
        dict(op.attrs),
        (Region((Block(((ii, INDEX),) + body.args[1:], inner_ops),)),),
    )
    outer_body = Block(((io, INDEX),) + outer_args, (inner, Operation("yield", inner_results)))
    return replace(
        op,
        operands=(lb, ub, step * size) + tuple(op.inits),
        attrs={},
        regions=(Region((outer_body,)),),
    )


def apply_to_function(f: Function, kind: str, factor: int, index: Optional[int] = None) -> Function:
    """Transform the ``index``-th top-level loop of ``f`` (default: the only one)."""
    loops = [k for k, op in enumerate(f.body.ops) if op.opcode == "for"]
    if index is None:
        if len(loops) != 1:
            raise TransformError("function must contain exactly one top-level loop")
        index = 0
    pos = loops[index]
    target = f.body.ops[pos]
    new = unroll(target, factor) if kind == "unroll" else tile(target, factor)
    ops = f.body.ops[:pos] + (new,) + f.body.ops[pos + 1 :]
    return replace(f, body=Block(f.body.args, ops))


def unroll_directives(f: Function) -> Function:
    """Honor ``unroll = full`` / ``unroll = N`` attributes throughout ``f``."""

    def visit_block(b: Block) -> Block:
        return Block(b.args, tuple(visit(op) for op in b.ops))

    def visit(op: Operation) -> Operation:
        if op.opcode != "for":
            return op
        op = replace(op, regions=(Region((visit_block(op.body),)),))
        u = op.attrs.get("unroll")
        if u is None:
            return op
        lb, ub, step = _literal_bounds(op)
        n = trip_count(lb, ub, step)
        factor = n if u == "full" else int(u)
        if factor < 2:
            return replace(op, attrs=_strip_unroll(op.attrs))
        return unroll(op, factor)

    return replace(f, body=visit_block(f.body))
