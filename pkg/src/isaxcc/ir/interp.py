"""Reference interpreter; the semantic oracle for every transformation."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .core import Block, Function, Operation
from .types import IntType, PtrType, Type, bit_width, byte_size, to_unsigned, wrap

DEFAULT_STEP_LIMIT = 1 << 20


class InterpError(Exception):
    pass


class UninitializedRead(InterpError):
    pass


class OutOfBounds(InterpError):
    pass


class StepLimitExceeded(InterpError):
    pass


@dataclass
class MachineState:
    memory: dict[int, int] = field(default_factory=dict)
    regfile: dict[str, int] = field(default_factory=dict)
    scratchpads: dict[str, list[Optional[int]]] = field(default_factory=dict)
    loop_steps: int = 0
    trips: list[int] = field(default_factory=list)

    def write(self, addr: int, value: int, t: Type) -> None:
        n = byte_size(t)
        raw = value & ((1 << (8 * n)) - 1)
        for k, b in enumerate(raw.to_bytes(n, "little")):
            self.memory[addr + k] = b

    def read(self, addr: int, t: Type) -> int:
        n = byte_size(t)
        data = bytearray()
        for k in range(n):
            b = self.memory.get(addr + k)
            if b is None:
                raise UninitializedRead(f"read of uninitialized byte at {addr + k:#x}")
            data.append(b)
        return wrap(int.from_bytes(bytes(data), "little"), t)

    def write_array(self, addr: int, values: Sequence[int], t: Type) -> None:
        for k, v in enumerate(values):
            self.write(addr + k * byte_size(t), v, t)

    def read_array(self, addr: int, count: int, t: Type) -> list[int]:
        return [self.read(addr + k * byte_size(t), t) for k in range(count)]


IsaxHandler = Callable[[Sequence[int], MachineState], Sequence[int]]


def _cmp(pred: str, a: int, b: int, t: Type) -> int:
    if pred.startswith("u"):
        a, b = to_unsigned(a, t), to_unsigned(b, t)
        pred = "s" + pred[1:]
    return int(
        {
            "eq": a == b,
            "ne": a != b,
            "slt": a < b,
            "sle": a <= b,
            "sgt": a > b,
            "sge": a >= b,
        }[pred]
    )


def eval_binary(code: str, a: int, b: int, t: Type) -> int:
    """Semantics of the two-operand integer ops on type ``t``."""
    w = bit_width(t)
    if code == "addi":
        r = a + b
    elif code == "subi":
        r = a - b
    elif code == "muli":
        r = a * b
    elif code == "shli":
        r = a << (b % w)
    elif code == "shri":
        r = wrap(a, t) >> (b % w)
    elif code == "andi":
        r = a & b
    elif code == "ori":
        r = a | b
    else:
        raise InterpError(f"unknown binary op {code}")
    return wrap(r, t)


class Interpreter:
    def __init__(
        self,
        f: Function,
        state: MachineState,
        isax_handlers: Optional[dict[str, IsaxHandler]] = None,
        step_limit: int = DEFAULT_STEP_LIMIT,
    ):
        self.f = f
        self.state = state
        self.handlers = isax_handlers or {}
        self.step_limit = step_limit
        self.statics = dict(f.statics)

    def run(self, args: Sequence[int]) -> list[int]:
        if len(args) != len(self.f.params):
            raise InterpError(f"@{self.f.name} expects {len(self.f.params)} arguments")
        env = {name: wrap(v, t) for (name, t), v in zip(self.f.params, args)}
        for name, t in self.f.statics:
            self.state.scratchpads.setdefault(name, [None] * t.length)
        kind, vals = self.block(self.f.body, env)
        return vals

    def block(self, block: Block, env: dict[str, int]) -> tuple[str, list[int]]:
        for op in block.ops:
            if op.is_terminator:
                return op.opcode, [self.value(env, v) for v in op.operands]
            self.op(op, env)
        raise InterpError("block fell through without terminator")

    def value(self, env: dict[str, int], operand) -> int:
        if isinstance(operand, int):
            return operand
        if operand in self.statics:
            return 0  # scratchpad accesses are indexed, never address-based
        return env[operand]

    def op(self, op: Operation, env: dict[str, int]) -> None:
        code = op.opcode
        st = self.state
        val = lambda k: self.value(env, op.operands[k])  # noqa: E731
        rt = op.result_types[0] if op.result_types else None
        result: Optional[int] = None
        if code == "const":
            result = wrap(op.attrs["value"], rt)
        elif code in ("addi", "subi", "muli", "shli", "shri", "andi", "ori"):
            result = eval_binary(code, val(0), val(1), rt)
        elif code == "cmpi":
            t = self._type_of_operand(op, 0, env)
            result = _cmp(op.attrs["pred"], val(0), val(1), t)
        elif code == "select":
            result = val(1) if val(0) else val(2)
        elif code == "load":
            result = self.load(op.operands[0], val(0), val(1), rt)
        elif code == "store":
            self.store(op.operands[1], val(1), val(2), val(0))
        elif code == "for":
            self.loop(op, env)
            return
        elif code == "readrf":
            reg = op.attrs["reg"]
            if reg not in st.regfile:
                raise UninitializedRead(f"register {reg} not set")
            result = wrap(st.regfile[reg], rt)
        elif code == "writerf":
            st.regfile[op.attrs["reg"]] = wrap(val(0), IntType(64))
        elif code == "blockload":
            arr, addr, n = op.operands[0], val(1), op.attrs["len"]
            elem = self.statics[arr].elem
            pad = st.scratchpads[arr]
            for k, v in enumerate(st.read_array(addr, n, elem)):
                pad[k] = v
        elif code == "blockstore":
            addr, arr, n = val(0), op.operands[1], op.attrs["len"]
            elem = self.statics[arr].elem
            vals = st.scratchpads[arr][:n]
            if any(v is None for v in vals):
                raise UninitializedRead(f"blockstore of uninitialized element of %{arr}")
            st.write_array(addr, vals, elem)
        elif code == "memload":
            result = st.read(val(0), rt)
        elif code == "memstore":
            t = self._type_of_operand(op, 0, env)
            st.write(val(1), val(0), t)
        elif code == "isax.call":
            name = op.attrs["callee"]
            handler = self.handlers.get(name)
            if handler is None:
                raise InterpError(f"no semantics registered for ISAX @{name}")
            outs = list(handler([val(k) for k in range(len(op.operands))], st))
            for r, t, v in zip(op.results, op.result_types, outs):
                env[r] = wrap(v, t)
            return
        else:
            raise InterpError(f"cannot interpret '{code}'")
        if op.results:
            env[op.results[0]] = result

    def _type_of_operand(self, op: Operation, k: int, env) -> Type:
        # operand types are not stored on values; recover them from definitions
        return self.types[op.operands[k]]

    @property
    def types(self) -> dict[str, Type]:
        if not hasattr(self, "_types"):
            from .core import walk_ops

            types = dict(self.f.params)
            for op in walk_ops(self.f.body):
                types.update(zip(op.results, op.result_types))
                for region in op.regions:
                    for b in region.blocks:
                        types.update(b.args)
            self._types = types
        return self._types

    def load(self, base: str, base_val: int, idx: int, t: Type) -> int:
        if base in self.statics:
            pad = self.state.scratchpads[base]
            if not 0 <= idx < len(pad):
                raise OutOfBounds(f"%{base}[{idx}] out of bounds")
            v = pad[idx]
            if v is None:
                raise UninitializedRead(f"read of uninitialized %{base}[{idx}]")
            return v
        return self.state.read(base_val + idx * byte_size(t), t)

    def store(self, base: str, base_val: int, idx: int, value: int) -> None:
        if base in self.statics:
            pad = self.state.scratchpads[base]
            if not 0 <= idx < len(pad):
                raise OutOfBounds(f"%{base}[{idx}] out of bounds")
            pad[idx] = value
            return
        ptr_t = self.types[base]
        assert isinstance(ptr_t, PtrType)
        self.state.write(base_val + idx * byte_size(ptr_t.elem), value, ptr_t.elem)

    def loop(self, op: Operation, env: dict[str, int]) -> None:
        lb, ub, step = (self.value(env, b) for b in op.bounds)
        if step == 0:
            raise InterpError("loop step is zero")
        carried = [self.value(env, v) for v in op.inits]
        body = op.body
        i = lb
        trips = 0
        while (step > 0 and i < ub) or (step < 0 and i > ub):
            self.state.loop_steps += 1
            if self.state.loop_steps > self.step_limit:
                raise StepLimitExceeded(f"exceeded {self.step_limit} loop steps")
            inner = dict(env)
            inner[body.args[0][0]] = i
            for (a, _), v in zip(body.args[1:], carried):
                inner[a] = v
            _, carried = self.block(body, inner)
            trips += 1
            i += step
        self.state.trips.append(trips)
        for r, v in zip(op.results, carried):
            env[r] = v


def interpret(
    f: Function,
    args: Sequence[int],
    state: Optional[MachineState] = None,
    isax_handlers: Optional[dict[str, IsaxHandler]] = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> tuple[list[int], MachineState]:
    """Evaluate ``f`` on ``args``; the input state is never mutated."""
    st = copy.deepcopy(state) if state is not None else MachineState()
    results = Interpreter(f, st, isax_handlers, step_limit).run(args)
    return results, st
