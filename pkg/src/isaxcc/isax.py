"""ISAX descriptions: parsing, architectural semantics, semantic translation
to core IR, and decomposition into a control skeleton plus dataflow
components.

File format::

    isax @name(rs1, rs2[, rd]) {
      static %buf : array<N x i32> [partition cyclic K | block K | complete];
      ...ops...
    }

Registers written by ``writerf`` are outputs; the others are inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .bridge import FUNCTION_SCOPE, ProgramGraph, encode, for_scope, parse_arg, parse_epoch
from .egraph import head
from .ir.core import Block, Function, Operation, Region, walk_ops
from .ir.interp import Interpreter, MachineState
from .ir.parser import ParseError, Parser
from .ir.types import I64, INDEX, ArrayType, PartitionDirective, PtrType, Type
from .ir.verifier import VerifyError, verify
from .rewrite.loops import unroll_directives


class IsaxError(Exception):
    pass


class UntranslatableBuffer(IsaxError):
    pass


@dataclass(frozen=True)
class IsaxDescription:
    name: str
    registers: tuple[str, ...]
    statics: tuple[tuple[str, ArrayType], ...]
    body: Function

    @property
    def effects(self) -> bool:
        return any(op.opcode in ("memstore", "blockstore", "store") for op in self.body.walk())

    @property
    def outputs(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(op.attrs["reg"] for op in self.body.walk() if op.opcode == "writerf"))

    @property
    def inputs(self) -> tuple[str, ...]:
        outs = set(self.outputs)
        return tuple(r for r in self.registers if r not in outs)


def parse_isax(text: str) -> IsaxDescription:
    p = Parser(text)
    p.expect("ident", "isax")
    name = p.expect("symbol").text[1:]
    p.punct("(")
    regs: list[str] = []
    if not p.at("punct", ")"):
        while True:
            regs.append(p.expect("ident").text)
            if not p.accept("punct", ","):
                break
    p.punct(")")
    if len(set(regs)) != len(regs):
        raise ParseError(f"duplicate register in @{name}")
    p.punct("{")
    statics: list[tuple[str, ArrayType]] = []
    while p.accept("ident", "static"):
        arr = p.value_name()
        p.punct(":")
        tok = p.tok
        t = p.parse_type()
        if not isinstance(t, ArrayType):
            raise p.error("static buffers must have array type", tok)
        if p.accept("ident", "partition"):
            kind = p.expect("ident").text
            factor = 1 if kind == "complete" else p.integer()
            t = replace(t, partition=PartitionDirective(kind, factor))
        p.punct(";")
        statics.append((arr, t))
        p.define(arr, t)
    ops: list[Operation] = []
    while not p.accept("punct", "}"):
        if p.at("eof"):
            raise p.error("unterminated ISAX body")
        ops.append(p.parse_op())
    if not ops or not ops[-1].is_terminator:
        ops.append(Operation("return"))
    p.expect("eof")
    body = Function(name, (), Block((), tuple(ops)), tuple(statics), is_isax=True)
    diags = verify(body)
    declared = set(regs)
    arrays = {a for a, _ in statics}
    for op in body.walk():
        if op.opcode in ("readrf", "writerf") and op.attrs["reg"] not in declared:
            diags.append(f"'{op.opcode}': undeclared register {op.attrs['reg']}")
        if op.opcode in ("blockload", "blockstore"):
            arr = op.operands[0] if op.opcode == "blockload" else op.operands[1]
            if arr not in arrays:
                diags.append(f"'{op.opcode}': undeclared static array %{arr}")
    if diags:
        raise VerifyError(diags)
    return IsaxDescription(name, tuple(regs), tuple(statics), body)


def interpret_isax(d: IsaxDescription, regs: dict[str, int], state: MachineState) -> Optional[int]:
    """Architectural execution: registers in, memory/register file out.

    Mutates ``state``; returns the value written to the output register, if
    any.  Scratchpads start uninitialized on every execution.
    """
    state.regfile.update(regs)
    for arr, _ in d.statics:
        state.scratchpads.pop(arr, None)
    Interpreter(d.body, state).run([])
    outs = d.outputs
    return state.regfile[outs[0]] if outs else None


# ---------------------------------------------------------------------------
# semantic translation


@dataclass(frozen=True)
class BufferAccess:
    """A main-memory region touched by the ISAX: ``[lo, hi)`` elements from ``param``."""

    param: str
    lo: int
    hi: int
    kind: str  # read | write


@dataclass(frozen=True)
class TranslatedIsax:
    name: str
    params: tuple[tuple[str, Type], ...]
    body: Function
    effects: bool
    result_type: Optional[Type]
    registers: tuple[str, ...]  # register feeding each parameter
    accesses: tuple[BufferAccess, ...] = ()
    source: Optional[IsaxDescription] = field(default=None, compare=False)

    @property
    def reads_memory(self) -> bool:
        return any(op.opcode == "load" for op in self.body.walk())

    def handler(self):
        """Interpreter callback executing the translated body in place."""

        def run(args, state: MachineState):
            return Interpreter(self.body, state).run(list(args))

        return run

    def architectural_handler(self):
        """Interpreter callback executing the original description."""
        if self.source is None:
            raise IsaxError("no source description")

        def run(args, state: MachineState):
            regs = dict(zip(self.registers, args))
            out = interpret_isax(self.source, regs, state)
            return [] if out is None else [out]

        return run


def _positions(d: IsaxDescription) -> dict[int, int]:
    """Top-level position of every operation (by identity)."""
    pos: dict[int, int] = {}
    for k, top in enumerate(d.body.body.ops):
        pos[id(top)] = k
        for op in walk_ops(Block((), (top,))):
            pos[id(op)] = k
    return pos


def semantic_translate(d: IsaxDescription) -> TranslatedIsax:
    body = d.body
    top = body.body.ops
    pos = _positions(d)
    types: dict[str, Type] = {}
    for op in body.walk():
        types.update(zip(op.results, op.result_types))

    # registers -> parameters
    readers: dict[str, list[str]] = {}
    for op in body.walk():
        if op.opcode == "readrf":
            readers.setdefault(op.attrs["reg"], []).append(op.results[0])
    rename: dict[str, str] = {}
    params: list[tuple[str, Type]] = []
    for reg in d.inputs:
        names = readers.get(reg)
        if not names:
            params.append((reg, I64))
            continue
        first = names[0]
        if any(types[n] != types[first] for n in names):
            raise IsaxError(f"register {reg} read with different types")
        params.append((first, types[first]))
        for n in names[1:]:
            rename[n] = first

    # output register
    result_type: Optional[Type] = None
    ret_value = None
    writes = [op for op in body.walk() if op.opcode == "writerf"]
    if len(writes) > 1:
        raise IsaxError("at most one writerf is supported")
    if writes:
        w = writes[0]
        non_term = [op for op in top if not op.is_terminator]
        if not non_term or non_term[-1] is not w:
            raise IsaxError("writerf must be the last operation of the ISAX body")
        ret_value = w.operands[0]
        result_type = types.get(ret_value) or dict(params).get(ret_value)

    # buffers
    mapping: dict[str, tuple[str, str]] = {}  # array -> (role, address value)
    accesses: list[BufferAccess] = []
    for arr, t in d.statics:
        bl = [op for op in body.walk() if op.opcode == "blockload" and op.operands[0] == arr]
        bs = [op for op in body.walk() if op.opcode == "blockstore" and op.operands[1] == arr]
        loads = [op for op in body.walk() if op.opcode == "load" and op.operands[0] == arr]
        stores = [op for op in body.walk() if op.opcode == "store" and op.operands[1] == arr]
        if not (bl or bs or loads or stores):
            continue
        if bl and not bs and not stores and len(bl) == 1:
            op = bl[0]
            if not any(op is x for x in top) or op.attrs["len"] != t.length:
                raise UntranslatableBuffer(f"%{arr}: blockload must fill the whole buffer at top level")
            if any(pos[id(ld)] <= pos[id(op)] for ld in loads):
                raise UntranslatableBuffer(f"%{arr} is read before it is loaded")
            addr = rename.get(op.operands[1], op.operands[1])
            mapping[arr] = ("in", addr)
            accesses.append(BufferAccess(addr, 0, t.length, "read"))
        elif bs and not bl and not loads and len(bs) == 1:
            op = bs[0]
            if not any(op is x for x in top) or op.attrs["len"] != t.length:
                raise UntranslatableBuffer(f"%{arr}: blockstore must drain the whole buffer at top level")
            if any(pos[id(st)] >= pos[id(op)] for st in stores):
                raise UntranslatableBuffer(f"%{arr} is written after it is drained")
            addr = rename.get(op.operands[0], op.operands[0])
            mapping[arr] = ("out", addr)
            accesses.append(BufferAccess(addr, 0, t.length, "write"))
        else:
            raise UntranslatableBuffer(f"%{arr} does not follow the single blockload/blockstore discipline")
        at = types.get(addr) or dict(params).get(addr)
        if not isinstance(at, PtrType) or at.elem != t.elem:
            raise UntranslatableBuffer(f"%{arr}: transfer address must be a pointer to {t.elem}")

    for op in body.walk():
        if op.opcode in ("memload", "memstore"):
            a = op.operands[0] if op.opcode == "memload" else op.operands[1]
            a = rename.get(a, a)
            at = types.get(a) or dict(params).get(a)
            if not isinstance(at, PtrType):
                raise UntranslatableBuffer(f"'{op.opcode}' address must be a pointer")
            accesses.append(BufferAccess(a, 0, 1, "read" if op.opcode == "memload" else "write"))

    zeros: list[str] = []

    def tr_block(b: Block) -> Block:
        out: list[Operation] = []
        for op in b.ops:
            out.extend(tr_op(op))
        return Block(b.args, tuple(out))

    def sub(v):
        return rename.get(v, v) if isinstance(v, str) else v

    def tr_op(op: Operation) -> list[Operation]:
        code = op.opcode
        operands = tuple(sub(v) for v in op.operands)
        if code in ("readrf", "blockload", "blockstore"):
            return []
        if code == "writerf":
            return []
        if code == "return":
            return [Operation("return", (ret_value,) if ret_value is not None else ())]
        if code == "load" and op.operands[0] in mapping:
            return [replace(op, operands=(mapping[op.operands[0]][1], operands[1]))]
        if code == "store" and op.operands[1] in mapping:
            return [replace(op, operands=(operands[0], mapping[op.operands[1]][1], operands[2]))]
        if code == "memload":
            zero = op.results[0] + ".z"
            return [
                Operation("const", (), (zero,), (INDEX,), {"value": 0}),
                Operation("load", (operands[0], zero), op.results, op.result_types),
            ]
        if code == "memstore":
            zero = f"{operands[1]}.z{len(zeros)}"
            zeros.append(zero)
            return [
                Operation("const", (), (zero,), (INDEX,), {"value": 0}),
                Operation("store", (operands[0], operands[1], zero)),
            ]
        if code == "for":
            return [replace(op, operands=operands, regions=(Region((tr_block(op.body),)),))]
        return [replace(op, operands=operands)]

    new_body = tr_block(body.body)
    f = Function(d.name, tuple(params), new_body)
    diags = verify(f)
    if diags:
        raise UntranslatableBuffer("; ".join(diags))
    effects = any(op.opcode == "store" for op in f.walk())
    if effects and result_type is not None:
        raise IsaxError("ISAXs with both memory effects and a result register are not supported")
    if not effects and any(op.opcode == "for" for op in f.walk()):
        raise IsaxError("pure ISAXs with loops are not supported")
    regs = tuple(r for r in d.inputs)
    return TranslatedIsax(d.name, tuple(params), f, effects, result_type, regs, tuple(accesses), d)


# ---------------------------------------------------------------------------
# decomposition

Pattern = Union[str, tuple]


@dataclass(frozen=True)
class Component:
    id: int
    kind: str  # store | yield | return | isax | value
    pattern: Pattern
    scope: str
    position: int

    @property
    def binds(self) -> frozenset:
        out: set[str] = set()

        def walk(p):
            if isinstance(p, str):
                out.add(p)
            else:
                for c in p[1:]:
                    walk(c)

        walk(self.pattern)
        return frozenset(out)


@dataclass(frozen=True)
class TerminatorSlot:
    kind: str  # yield | return


@dataclass(frozen=True)
class LoopSlot:
    scope: str
    lb: int
    ub: int
    step: int
    inits: tuple[Pattern, ...]
    body: "BlockSlot"


@dataclass(frozen=True)
class BlockSlot:
    scope: str
    slots: tuple[Union[LoopSlot, Component, TerminatorSlot], ...]

    @property
    def prefix(self) -> tuple:
        """Slots before the terminator."""
        return self.slots[:-1]


@dataclass
class Skeleton:
    name: str
    body: BlockSlot
    effects: bool
    params: tuple[tuple[str, Type], ...]
    components: list[Component]
    value: Optional[Component] = None  # the returned expression of a pure ISAX
    accesses: tuple[BufferAccess, ...] = ()
    graph: Optional[ProgramGraph] = None
    result_type: Optional[Type] = None
    reads_memory: bool = False

    def depth(self) -> int:
        d, block = 0, self.body
        while True:
            loops = [s for s in block.slots if isinstance(s, LoopSlot)]
            if len(loops) != 1:
                return d
            d += 1
            block = loops[0].body

    def reassemble(self) -> Pattern:
        """Rebuild the encoded body as one pattern term."""

        def block(b: BlockSlot) -> tuple:
            kids = []
            for s in b.slots:
                if isinstance(s, Component):
                    kids.append(s.pattern)
                elif isinstance(s, TerminatorSlot):
                    kids.append((s.kind,))
                else:
                    kids.append(
                        (f"for:{s.scope}", (f"lit:{s.lb}",), (f"lit:{s.ub}",), (f"lit:{s.step}",))
                        + tuple(s.inits)
                        + (block(s.body),)
                    )
            return ("tuple",) + tuple(kids)

        return block(self.body)


def class_pattern(pg: ProgramGraph, cid: int) -> Pattern:
    """Term of ``cid`` in a rewrite-free graph, with leaves as bind variables."""
    g = pg.egraph
    node = g.nodes(cid)[0]
    h = head(node.symbol)
    if h == "param":
        return "?" + node.symbol
    if h == "arg":
        s, k = parse_arg(node.symbol)
        return f"?arg:{s}:{k}"
    if h == "epoch":
        s, n = parse_epoch(node.symbol)
        return f"?epoch:{s}:{n}"
    if h == "result":
        loop = g.nodes(node.children[0])[0]
        return f"?res:{for_scope(loop.symbol)}:{node.symbol.split(':')[1]}"
    return (node.symbol,) + tuple(class_pattern(pg, c) for c in node.children)


def decompose(t: TranslatedIsax) -> Skeleton:
    body = unroll_directives(t.body)
    pg = encode(body)
    g = pg.egraph
    comps: list[Component] = []

    def lit(cid: int) -> int:
        sym = g.nodes(cid)[0].symbol
        if head(sym) != "lit":
            raise IsaxError("ISAX loop bounds must be literal constants")
        return int(sym.split(":")[1])

    def block(tuple_cid: int, scope: str) -> BlockSlot:
        tup = g.nodes(tuple_cid)[0]
        slots: list = []
        for k, rc in enumerate(tup.children):
            node = g.nodes(rc)[0]
            h = head(node.symbol)
            if h == "for":
                s = for_scope(node.symbol)
                kids = node.children
                slots.append(
                    LoopSlot(
                        s,
                        lit(kids[0]),
                        lit(kids[1]),
                        lit(kids[2]),
                        tuple(class_pattern(pg, c) for c in kids[3:-1]),
                        block(kids[-1], s),
                    )
                )
            elif h in ("yield", "return") and not node.children:
                slots.append(TerminatorSlot(h))
            else:
                c = Component(len(comps), h, class_pattern(pg, rc), scope, k)
                comps.append(c)
                slots.append(c)
        return BlockSlot(scope, tuple(slots))

    sk_body = block(pg.root, FUNCTION_SCOPE)
    value = None
    if not t.effects:
        ret = sk_body.slots[-1]
        if not isinstance(ret, Component) or len(ret.pattern) != 2:
            raise IsaxError("a pure ISAX must return exactly one value")
        value = Component(len(comps), "value", ret.pattern[1], FUNCTION_SCOPE, ret.position)
    return Skeleton(t.name, sk_body, t.effects, t.params, comps, value, t.accesses, pg, t.result_type, t.reads_memory)


def load_isax(text: str) -> tuple[IsaxDescription, TranslatedIsax, Skeleton]:
    d = parse_isax(text)
    t = semantic_translate(d)
    return d, t, decompose(t)
