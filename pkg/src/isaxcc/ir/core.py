"""Operations, blocks, regions and functions of the mini IR.

Values are referred to by name (without the leading ``%``).  A ``for``
operation keeps its bounds in the first three operand slots; each bound is
either a value name or an ``int`` literal.  Every other operand is a value
name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Optional, Union

from .types import ArrayType, Type

Operand = Union[str, int]

BINARY_OPS = ("addi", "subi", "muli", "shli", "shri", "andi", "ori")
CMP_PREDICATES = ("eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge")
TERMINATORS = ("yield", "return")
HARDWARE_OPS = ("readrf", "writerf", "blockload", "blockstore", "memload", "memstore")
SIDE_EFFECT_OPS = ("store", "memstore", "blockstore", "writerf")


@dataclass(frozen=True)
class OpSchema:
    operands: Optional[int]  # None: variadic
    results: Optional[int]
    attrs: frozenset = frozenset()
    required: frozenset = frozenset()


_LOOP_ATTRS = frozenset({"unroll", "pipeline", "tile"})

SCHEMAS: dict[str, OpSchema] = {
    "const": OpSchema(0, 1, frozenset({"value"}), frozenset({"value"})),
    **{op: OpSchema(2, 1) for op in BINARY_OPS},
    "cmpi": OpSchema(2, 1, frozenset({"pred"}), frozenset({"pred"})),
    "select": OpSchema(3, 1),
    "load": OpSchema(2, 1),
    "store": OpSchema(3, 0),
    "for": OpSchema(None, None, _LOOP_ATTRS),
    "yield": OpSchema(None, 0),
    "return": OpSchema(None, 0),
    "readrf": OpSchema(0, 1, frozenset({"reg"}), frozenset({"reg"})),
    "writerf": OpSchema(1, 0, frozenset({"reg"}), frozenset({"reg"})),
    "blockload": OpSchema(2, 0, frozenset({"len"}), frozenset({"len"})),
    "blockstore": OpSchema(2, 0, frozenset({"len"}), frozenset({"len"})),
    "memload": OpSchema(1, 1),
    "memstore": OpSchema(2, 0),
    "isax.call": OpSchema(None, None, frozenset({"callee"}), frozenset({"callee"})),
}


@dataclass(frozen=True)
class Operation:
    opcode: str
    operands: tuple[Operand, ...] = ()
    results: tuple[str, ...] = ()
    result_types: tuple[Type, ...] = ()
    attrs: Mapping[str, Any] = field(default_factory=dict)
    regions: tuple["Region", ...] = ()

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    # for-loop accessors
    @property
    def bounds(self) -> tuple[Operand, Operand, Operand]:
        assert self.opcode == "for"
        return self.operands[0], self.operands[1], self.operands[2]

    @property
    def inits(self) -> tuple[Operand, ...]:
        assert self.opcode == "for"
        return self.operands[3:]

    @property
    def body(self) -> "Block":
        return self.regions[0].blocks[0]

    def constant_trip_count(self) -> Optional[int]:
        lb, ub, step = self.bounds
        if not all(isinstance(b, int) for b in (lb, ub, step)):
            return None
        return trip_count(lb, ub, step)


@dataclass(frozen=True)
class Block:
    args: tuple[tuple[str, Type], ...] = ()
    ops: tuple[Operation, ...] = ()

    @property
    def terminator(self) -> Optional[Operation]:
        if self.ops and self.ops[-1].is_terminator:
            return self.ops[-1]
        return None


@dataclass(frozen=True)
class Region:
    blocks: tuple[Block, ...] = ()


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[tuple[str, Type], ...]
    body: Block
    statics: tuple[tuple[str, ArrayType], ...] = ()
    is_isax: bool = False

    def walk(self) -> Iterator[Operation]:
        yield from walk_ops(self.body)

    def loops(self) -> list[Operation]:
        return [op for op in self.walk() if op.opcode == "for"]


def walk_ops(block: Block) -> Iterator[Operation]:
    for op in block.ops:
        yield op
        for region in op.regions:
            for b in region.blocks:
                yield from walk_ops(b)


def trip_count(lb: int, ub: int, step: int) -> int:
    """Iterations executed by ``for i = lb to ub step step``."""
    if step == 0:
        raise ValueError("loop step must be nonzero")
    # ceil((ub - lb) / step), clamped at zero
    return max(0, -((lb - ub) // step))


def root_kind(op: Operation) -> Optional[str]:
    """Ordering role of an operation inside its block (None for pure ops)."""
    if op.opcode in TERMINATORS:
        return "terminator"
    if op.opcode == "for":
        return "control_flow"
    if op.opcode in SIDE_EFFECT_OPS:
        return "side_effect"
    if op.opcode == "isax.call" and not op.results:
        return "side_effect"
    return None


def make_for(
    iv: str,
    lb: Operand,
    ub: Operand,
    step: Operand,
    body_ops: list[Operation],
    iter_args: tuple[tuple[str, Type], ...] = (),
    inits: tuple[str, ...] = (),
    results: tuple[str, ...] = (),
    attrs: Optional[dict] = None,
) -> Operation:
    from .types import INDEX

    body = Block(((iv, INDEX),) + tuple(iter_args), tuple(body_ops))
    return Operation(
        "for",
        (lb, ub, step) + tuple(inits),
        tuple(results),
        tuple(t for _, t in iter_args),
        dict(attrs or {}),
        (Region((body,)),),
    )
