from __future__ import annotations

from typing import Optional

from .core import BINARY_OPS, CMP_PREDICATES, HARDWARE_OPS, SCHEMAS, Block, Function, Operation
from .types import ArrayType, IntType, PtrType, Type, is_integer_like, is_scalar


class VerifyError(Exception):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


def verify(f: Function) -> list[str]:
    """Return diagnostics for ``f``; an empty list means the function is valid."""
    v = _Verifier(f)
    v.run()
    return v.diags


def verify_or_raise(f: Function) -> Function:
    diags = verify(f)
    if diags:
        raise VerifyError(diags)
    return f


class _Verifier:
    def __init__(self, f: Function):
        self.f = f
        self.diags: list[str] = []
        self.defined: set[str] = set()

    def err(self, op: Optional[Operation], msg: str) -> None:
        where = f"'{op.opcode}'" if op is not None else f"@{self.f.name}"
        self.diags.append(f"{where}: {msg}")

    def define(self, op: Optional[Operation], name: str) -> None:
        if name in self.defined:
            self.err(op, f"value %{name} defined more than once")
        self.defined.add(name)

    def run(self) -> None:
        scope: dict[str, Type] = {}
        for name, t in self.f.params:
            self.define(None, name)
            scope[name] = t
        for name, t in self.f.statics:
            self.define(None, name)
            if not isinstance(t, ArrayType):
                self.err(None, f"static %{name} must be an array")
                continue
            self.check_array(name, t)
            scope[name] = t
        self.block(self.f.body, scope, "return")

    def check_array(self, name: str, t: ArrayType) -> None:
        if t.length <= 0:
            self.err(None, f"static %{name} has non-positive length")
        p = t.partition
        if p is not None:
            if p.factor < 1:
                self.err(None, f"static %{name}: partition factor must be >= 1")
            elif p.kind == "cyclic" and t.length % p.factor:
                self.err(None, f"static %{name}: cyclic factor {p.factor} does not divide {t.length}")
            elif p.kind not in ("cyclic", "block", "complete"):
                self.err(None, f"static %{name}: unknown partition kind {p.kind}")

    def block(self, block: Block, outer: dict[str, Type], terminator: str) -> None:
        scope = dict(outer)
        if not block.ops:
            self.err(None, "empty block has no terminator")
            return
        for i, op in enumerate(block.ops):
            last = i == len(block.ops) - 1
            if op.is_terminator and not last:
                self.err(op, "terminator in the middle of a block")
            if last and op.opcode != terminator:
                self.err(op, f"block must end with '{terminator}'")
            self.op(op, scope)

    def use(self, op: Operation, name, scope: dict[str, Type]) -> Optional[Type]:
        if isinstance(name, int):
            return None
        if name not in scope:
            self.err(op, f"operand %{name} does not dominate its use")
            return None
        return scope[name]

    def op(self, op: Operation, scope: dict[str, Type]) -> None:
        schema = SCHEMAS.get(op.opcode)
        if schema is None:
            self.err(op, "unknown opcode")
            return
        if op.opcode in HARDWARE_OPS and not self.f.is_isax:
            self.err(op, "hardware op outside ISAX")
        if op.opcode == "isax.call" and self.f.is_isax:
            self.err(op, "isax.call is only legal in application functions")
        for key in op.attrs:
            if key not in schema.attrs:
                self.err(op, f"unexpected attribute '{key}'")
        for key in schema.required:
            if key not in op.attrs:
                self.err(op, f"missing attribute '{key}'")
        if schema.operands is not None and len(op.operands) != schema.operands:
            self.err(op, f"expected {schema.operands} operands, got {len(op.operands)}")
        if schema.results is not None and len(op.results) != schema.results:
            self.err(op, f"expected {schema.results} results, got {len(op.results)}")
        if len(op.results) != len(op.result_types):
            self.err(op, "result/type count mismatch")
        if op.opcode != "for" and op.regions:
            self.err(op, "unexpected region")

        if op.opcode == "for":
            self.loop(op, scope)
        else:
            types = [self.use(op, v, scope) for v in op.operands]
            if None not in types:
                self.typecheck(op, types)
        for r, t in zip(op.results, op.result_types):
            self.define(op, r)
            scope[r] = t

    def loop(self, op: Operation, scope: dict[str, Type]) -> None:
        if len(op.operands) < 3:
            self.err(op, "missing loop bounds")
            return
        for b in op.bounds:
            t = self.use(op, b, scope)
            if t is not None and not is_integer_like(t):
                self.err(op, "loop bound must be an integer")
        step = op.bounds[2]
        if isinstance(step, int) and step == 0:
            self.err(op, "loop step must be nonzero")
        init_types = [self.use(op, v, scope) for v in op.inits]
        if len(op.results) != len(op.inits):
            self.err(op, "result count must match iter_args")
        if len(op.regions) != 1 or len(op.regions[0].blocks) != 1:
            self.err(op, "loop needs exactly one single-block region")
            return
        body = op.body
        if len(body.args) != 1 + len(op.inits):
            self.err(op, "loop body arguments must be induction variable plus iter_args")
        for (a, t), it in zip(body.args[1:], init_types):
            if it is not None and t != it:
                self.err(op, f"iter_arg %{a} type {t} does not match init {it}")
        for (a, t), rt in zip(body.args[1:], op.result_types):
            if t != rt:
                self.err(op, "result type does not match iter_arg type")
        inner = dict(scope)
        for a, t in body.args:
            self.define(op, a)
            inner[a] = t
        self.block(body, inner, "yield")
        term = body.terminator
        if term is not None and term.opcode == "yield":
            if len(term.operands) != len(op.inits):
                self.err(term, f"yield carries {len(term.operands)} values for {len(op.inits)} iter_args")
            else:
                for v, (a, t) in zip(term.operands, body.args[1:]):
                    vt = self._lookup_after(body, v, inner)
                    if vt is not None and vt != t:
                        self.err(term, f"yield type {vt} does not match iter_arg {t}")

    def _lookup_after(self, body: Block, name, inner: dict[str, Type]) -> Optional[Type]:
        for op in body.ops:
            for r, t in zip(op.results, op.result_types):
                if r == name:
                    return t
        return inner.get(name)

    def typecheck(self, op: Operation, types: list[Type]) -> None:
        code = op.opcode
        rt = op.result_types[0] if op.result_types else None
        if code in BINARY_OPS:
            a, b = types
            if a != b:
                self.err(op, f"operand types differ ({a} vs {b})")
            if not is_integer_like(a):
                self.err(op, f"operand type {a} is not an integer")
            if rt is not None and rt != a:
                self.err(op, "result type must match operand type")
        elif code == "const":
            if rt is not None and not is_integer_like(rt):
                self.err(op, "constant must have integer type")
        elif code == "cmpi":
            if op.attrs.get("pred") not in CMP_PREDICATES:
                self.err(op, f"unknown predicate {op.attrs.get('pred')}")
            if types[0] != types[1]:
                self.err(op, "operand types differ")
            if rt != IntType(1):
                self.err(op, "result must be i1")
        elif code == "select":
            if types[0] != IntType(1):
                self.err(op, "condition must be i1")
            if types[1] != types[2] or rt != types[1]:
                self.err(op, "select arms and result must share a type")
        elif code in ("load", "store"):
            base, idx = (types[0], types[1]) if code == "load" else (types[1], types[2])
            if not isinstance(base, (PtrType, ArrayType)):
                self.err(op, f"base must be a pointer or static array, got {base}")
                return
            if isinstance(base, ArrayType) and not self.f.is_isax:
                self.err(op, "static arrays exist only in ISAX bodies")
            if not is_integer_like(idx):
                self.err(op, "index must be an integer")
            elem = base.elem
            vt = rt if code == "load" else types[0]
            if vt != elem:
                self.err(op, f"element type {elem} does not match {vt}")
        elif code == "readrf":
            if rt is None or not is_scalar(rt):
                self.err(op, "readrf must produce a scalar")
        elif code in ("blockload", "blockstore"):
            arr, addr = (types[0], types[1]) if code == "blockload" else (types[1], types[0])
            if not isinstance(arr, ArrayType):
                self.err(op, "static array operand expected")
            elif op.attrs.get("len", 0) <= 0 or op.attrs["len"] > arr.length:
                self.err(op, "transfer length out of range")
            if not (isinstance(addr, PtrType) or is_integer_like(addr)):
                self.err(op, "address must be a pointer or integer")
        elif code == "memload":
            if not (isinstance(types[0], PtrType) or is_integer_like(types[0])):
                self.err(op, "address must be a pointer or integer")
        elif code == "memstore":
            if not (isinstance(types[1], PtrType) or is_integer_like(types[1])):
                self.err(op, "address must be a pointer or integer")
