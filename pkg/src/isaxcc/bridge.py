"""Translation between IR functions and the e-graph.

Every block becomes a ``tuple`` node whose children are the block's roots
(terminators, side effects and loops) in program order.  Pure operations
become dataflow subtrees below the roots that use them.  Block arguments are
leaves scoped by the loop that owns them, and every load carries an epoch
leaf ``epoch:SCOPE:n`` where ``n`` counts the effect/control roots preceding
it in its block.  A tuple created by ISAX insertion spells out the epoch of
each of its positions in its symbol (``tuple:0,2,3``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .egraph import CostModel, EGraph, ENode, NoWitness, head, parse_const
from .ir.core import BINARY_OPS, Block, Function, Operation, Region, root_kind
from .ir.types import I1, INDEX, ArrayType, PtrType, Type, parse_type
from .ir.verifier import verify_or_raise

FUNCTION_SCOPE = "0"


class BridgeError(Exception):
    pass


@dataclass
class ScopeInfo:
    arg_types: list[Type]
    attrs: dict[str, Any]
    parent: str
    epoch: int  # epoch of the parent block at which the loop sits


@dataclass
class IsaxSig:
    result_types: list[Type] = field(default_factory=list)
    reads_memory: bool = True


@dataclass
class GraphContext:
    name: str
    params: list[tuple[str, Type]]
    scopes: dict[str, ScopeInfo] = field(default_factory=dict)
    isax: dict[str, IsaxSig] = field(default_factory=dict)
    next_scope: int = 1

    def new_scope(self, info: ScopeInfo) -> str:
        sid = str(self.next_scope)
        self.next_scope += 1
        self.scopes[sid] = info
        return sid

    def param_type(self, name: str) -> Type:
        return dict(self.params)[name]

    def ancestors(self, scope: str) -> list[str]:
        out = [scope]
        while scope != FUNCTION_SCOPE:
            scope = self.scopes[scope].parent
            out.append(scope)
        return out


@dataclass
class ProgramGraph:
    egraph: EGraph
    root: int
    ctx: GraphContext
    valuemap: dict[str, int]

    def to_json(self) -> str:
        vm = {k: self.egraph.find(v) for k, v in sorted(self.valuemap.items())}
        return self.egraph.to_json({"root": self.egraph.find(self.root), "valuemap": vm})


def tuple_epochs(node: ENode) -> list[int]:
    """Epoch at each position of a tuple node."""
    _, _, payload = node.symbol.partition(":")
    if payload:
        return [int(x) for x in payload.split(",")]
    return list(range(len(node.children)))


def tuple_symbol(epochs: list[int]) -> str:
    if epochs == list(range(len(epochs))):
        return "tuple"
    return "tuple:" + ",".join(str(e) for e in epochs)


def epoch_symbol(scope: str, n: int) -> str:
    return f"epoch:{scope}:{n}"


def parse_epoch(symbol: str) -> tuple[str, int]:
    _, scope, n = symbol.split(":")
    return scope, int(n)


def parse_arg(symbol: str) -> tuple[str, int]:
    _, scope, k = symbol.split(":")
    return scope, int(k)


def for_scope(symbol: str) -> str:
    return symbol.split(":", 1)[1]


# ---------------------------------------------------------------------------
# encoding


class _Encoder:
    def __init__(self, g: EGraph, ctx: GraphContext, env: dict[str, int]):
        self.g = g
        self.ctx = ctx
        self.env = env

    def operand(self, v) -> int:
        if isinstance(v, int):
            return self.g.add(ENode(f"lit:{v}"))
        if v not in self.env:
            raise BridgeError(f"unmapped value %{v}")
        return self.env[v]

    def block(self, b: Block, scope: str) -> int:
        g = self.g
        epoch = 0
        roots: list[int] = []
        for op in b.ops:
            kind = root_kind(op)
            code = op.opcode
            kids = tuple(self.operand(v) for v in op.operands) if code != "for" else ()
            if code == "const":
                cid = g.add(ENode(f"const:{op.attrs['value']}:{op.result_types[0]}"))
            elif code in BINARY_OPS or code == "select":
                cid = g.add(ENode(code, kids))
            elif code == "cmpi":
                cid = g.add(ENode(f"cmpi:{op.attrs['pred']}", kids))
            elif code == "load":
                cid = g.add(ENode("load", kids + (g.add(ENode(epoch_symbol(scope, epoch))),)))
            elif code == "isax.call":
                name = op.attrs["callee"]
                sig = self.ctx.isax.setdefault(name, IsaxSig(list(op.result_types)))
                if op.results:
                    if len(op.results) != 1:
                        raise BridgeError("a pure ISAX call must have exactly one result")
                    if sig.reads_memory:
                        kids += (g.add(ENode(epoch_symbol(scope, epoch))),)
                cid = g.add(ENode(f"isax:{name}", kids))
            elif code in ("store", "yield", "return"):
                cid = g.add(ENode(code, kids))
            elif code == "for":
                cid = self.loop(op, scope, epoch)
            else:
                raise BridgeError(f"cannot encode '{code}'")
            if code == "for":
                for k, r in enumerate(op.results):
                    self.env[r] = g.add(ENode(f"result:{k}", (cid,)))
            elif op.results:
                self.env[op.results[0]] = cid
            if kind is not None:
                roots.append(cid)
                if kind != "terminator":
                    epoch += 1
        return g.add(ENode("tuple", tuple(roots)))

    def loop(self, op: Operation, scope: str, epoch: int) -> int:
        g = self.g
        body = op.body
        sid = self.ctx.new_scope(ScopeInfo([t for _, t in body.args], dict(op.attrs), scope, epoch))
        bounds = tuple(self.operand(v) for v in op.operands)
        for k, (a, _) in enumerate(body.args):
            self.env[a] = g.add(ENode(f"arg:{sid}:{k}"))
        tup = self.block(body, sid)
        return g.add(ENode(f"for:{sid}", bounds + (tup,)))


def encode(f: Function, isax_sigs: Optional[dict[str, IsaxSig]] = None) -> ProgramGraph:
    verify_or_raise(f)
    g = EGraph()
    ctx = GraphContext(f.name, list(f.params), isax=dict(isax_sigs or {}))
    env = {name: g.add(ENode(f"param:{name}")) for name, _ in f.params}
    root = _Encoder(g, ctx, env).block(f.body, FUNCTION_SCOPE)
    g.rebuild()
    return ProgramGraph(g, root, ctx, dict(env))


# ---------------------------------------------------------------------------
# witness extraction


class _Frame:
    def __init__(self, scope: str, parent: Optional["_Frame"]):
        self.scope = scope
        self.parent = parent
        self.values: dict[int, tuple[Any, Optional[Type]]] = {}
        self.ops: list[Operation] = []
        self.epoch = 0

    def lookup(self, cid: int):
        f: Optional[_Frame] = self
        while f is not None:
            hit = f.values.get(cid)
            if hit is not None:
                return hit
            f = f.parent
        return None


class _Extractor:
    def __init__(self, pg: ProgramGraph, best: dict[int, tuple[float, ENode]]):
        self.pg = pg
        self.g = pg.egraph
        self.ctx = pg.ctx
        self.best = best
        self.counter = 0
        self.active: set[int] = set()
        self.params: dict[int, tuple[str, Type]] = {}

    def node(self, cid: int) -> ENode:
        cid = self.g.find(cid)
        hit = self.best.get(cid)
        if hit is None:
            raise NoWitness(f"class {cid} has no finite witness")
        return hit[1]

    def fresh(self) -> str:
        self.counter += 1
        return f"v{self.counter}"

    def epoch_of(self, node: ENode) -> Optional[tuple[str, int]]:
        """Scope and epoch of a memory-reading node, else None."""
        if not node.children:
            return None
        if head(node.symbol) not in ("load", "isax"):
            return None
        last = self.node(node.children[-1])
        if head(last.symbol) != "epoch":
            return None
        return parse_epoch(last.symbol)

    # -- values ----------------------------------------------------------
    def value(self, cid: int, frame: _Frame) -> tuple[Any, Optional[Type]]:
        cid = self.g.find(cid)
        hit = frame.lookup(cid)
        if hit is not None:
            return hit
        if cid in self.params:
            name, t = self.params[cid]
            return name, t
        node = self.node(cid)
        h = head(node.symbol)
        if h == "param":
            name = node.symbol.split(":", 1)[1]
            return name, self.ctx.param_type(name)
        if h == "lit":
            return int(node.symbol.split(":", 1)[1]), INDEX
        if h in ("arg", "result", "epoch", "tuple", "for", "store", "yield", "return"):
            raise BridgeError(f"internal error: {node.symbol} (class {cid}) is not available here")
        if cid in self.active:
            raise BridgeError("internal error: cyclic witness selection")
        ep = self.epoch_of(node)
        if ep is not None:
            self._check_epoch(ep, frame, cid)
        self.active.add(cid)
        try:
            operands = [self.value(c, frame) for c in (node.children[:-1] if ep else node.children)]
        finally:
            self.active.discard(cid)
        op, t = self.make_pure(node, operands)
        frame.ops.append(op)
        frame.values[cid] = (op.results[0], t)
        return op.results[0], t

    def _check_epoch(self, ep: tuple[str, int], frame: _Frame, cid: int) -> None:
        scope, n = ep
        if scope == frame.scope and n == frame.epoch:
            return
        raise BridgeError(
            f"internal error: memory read of class {cid} at epoch {scope}:{n} "
            f"demanded in block {frame.scope} at epoch {frame.epoch}"
        )

    def make_pure(self, node: ENode, operands: list) -> tuple[Operation, Type]:
        h = head(node.symbol)
        name = self.fresh()
        names = tuple(v for v, _ in operands)
        types = [t for _, t in operands]
        if h == "const":
            value, ty = parse_const(node.symbol)
            t = parse_type(ty)
            return Operation("const", (), (name,), (t,), {"value": value}), t
        if h in BINARY_OPS:
            t = types[0]
            return Operation(h, names, (name,), (t,)), t
        if h == "cmpi":
            pred = node.symbol.split(":", 1)[1]
            return Operation("cmpi", names, (name,), (I1,), {"pred": pred}), I1
        if h == "select":
            return Operation("select", names, (name,), (types[1],)), types[1]
        if h == "load":
            ptr = types[0]
            if not isinstance(ptr, (PtrType, ArrayType)):
                raise BridgeError(f"load from non-pointer of type {ptr}")
            return Operation("load", names, (name,), (ptr.elem,)), ptr.elem
        if h == "isax":
            callee = node.symbol.split(":", 1)[1]
            t = self.ctx.isax[callee].result_types[0]
            return Operation("isax.call", names, (name,), (t,), {"callee": callee}), t
        raise BridgeError(f"cannot materialize '{node.symbol}'")

    # -- blocks ----------------------------------------------------------
    def reads_at(self, roots: list[int], scope: str, epoch: int, frame: _Frame) -> list[int]:
        """Memory reads of ``scope`` at ``epoch`` reachable from ``roots``."""
        out: list[int] = []
        seen: set[int] = set()
        stack = [self.g.find(r) for r in reversed(roots)]
        while stack:
            cid = stack.pop()
            if cid in seen or frame.lookup(cid) is not None:
                continue
            seen.add(cid)
            node = self.node(cid)
            if self.epoch_of(node) == (scope, epoch):
                out.append(cid)
            stack.extend(self.g.find(c) for c in reversed(node.children))
        return out

    def block(self, tuple_cid: int, frame: _Frame) -> list[Operation]:
        tup = self.node(tuple_cid)
        if head(tup.symbol) != "tuple":
            raise BridgeError(f"expected a tuple, found {tup.symbol}")
        epochs = tuple_epochs(tup)
        roots = list(tup.children)
        for p, (rcid, e) in enumerate(zip(roots, epochs)):
            frame.epoch = e
            node = self.node(rcid)
            h = head(node.symbol)
            if h not in ("yield", "return"):
                for load in self.reads_at(roots[p:], frame.scope, e, frame):
                    self.value(load, frame)
            self.root(rcid, node, frame)
        return frame.ops

    def root(self, cid: int, node: ENode, frame: _Frame) -> None:
        h = head(node.symbol)
        if h == "for":
            self.loop(cid, node, frame)
            return
        operands = tuple(self.value(c, frame)[0] for c in node.children)
        if h in ("yield", "return", "store"):
            frame.ops.append(Operation(h, operands))
        elif h == "isax":
            callee = node.symbol.split(":", 1)[1]
            frame.ops.append(Operation("isax.call", operands, attrs={"callee": callee}))
        else:
            raise BridgeError(f"'{node.symbol}' cannot be a root")

    def loop(self, cid: int, node: ENode, frame: _Frame) -> None:
        sid = for_scope(node.symbol)
        info = self.ctx.scopes[sid]
        bounds_inits = [self.value(c, frame) for c in node.children[:-1]]
        inner = _Frame(sid, frame)
        arg_names = []
        for k, t in enumerate(info.arg_types):
            name = self.fresh()
            arg_names.append((name, t))
            leaf = self.g.lookup(ENode(f"arg:{sid}:{k}"))
            if leaf is not None:
                inner.values[leaf] = (name, t)
        ops = self.block(node.children[-1], inner)
        results = []
        loop_cid = self.g.find(cid)
        for k, t in enumerate(info.arg_types[1:]):
            name = self.fresh()
            results.append(name)
            rc = self.g.lookup(ENode(f"result:{k}", (loop_cid,)))
            if rc is not None:
                frame.values[rc] = (name, t)
        body = Block(tuple(arg_names), tuple(ops))
        frame.ops.append(
            Operation(
                "for",
                tuple(v for v, _ in bounds_inits),
                tuple(results),
                tuple(info.arg_types[1:]),
                dict(info.attrs),
                (Region((body,)),),
            )
        )


def witness_extract(pg: ProgramGraph, cm: Optional[CostModel] = None, verify: bool = True) -> Function:
    """Materialize the cheapest program represented by ``pg``."""
    g = pg.egraph
    g.rebuild()
    best = g.best_nodes(cm or CostModel())
    ex = _Extractor(pg, best)
    frame = _Frame(FUNCTION_SCOPE, None)
    ops = ex.block(pg.root, frame)
    f = Function(pg.ctx.name, tuple(pg.ctx.params), Block((), tuple(ops)))
    if verify:
        verify_or_raise(f)
    return f


# ---------------------------------------------------------------------------
# loop fragments


@dataclass
class Fragment:
    """A loop lifted out of the graph as a standalone function.

    ``freemap`` maps each parameter of ``function`` back to the e-class it
    stands for.
    """

    function: Function
    freemap: dict[str, int]
    loop: int
    scope: str
    parent_scope: str
    epoch: int


def _inner_scopes(g: EGraph, best, loop_cid: int) -> set[str]:
    out: set[str] = set()
    stack, seen = [g.find(loop_cid)], set()
    while stack:
        cid = stack.pop()
        if cid in seen:
            continue
        seen.add(cid)
        node = best[cid][1]
        if head(node.symbol) == "for":
            out.add(for_scope(node.symbol))
        stack.extend(g.find(c) for c in node.children)
    return out


def scope_dependence(g: EGraph, best, scopes: set[str]) -> dict[int, bool]:
    """For each class, whether its witness mentions a leaf of ``scopes``."""
    memo: dict[int, bool] = {}

    def dep(cid: int) -> bool:
        cid = g.find(cid)
        if cid in memo:
            return memo[cid]
        memo[cid] = False
        node = best[cid][1]
        h = head(node.symbol)
        if h in ("arg", "epoch"):
            r = node.symbol.split(":")[1] in scopes
        elif h == "for":
            r = for_scope(node.symbol) in scopes or any(dep(c) for c in node.children)
        else:
            r = any(dep(c) for c in node.children)
        memo[cid] = r
        return r

    for cid in list(best):
        dep(cid)
    return memo


def extract_loop_fragment(pg: ProgramGraph, loop_cid: int, cm: Optional[CostModel] = None) -> Fragment:
    g = pg.egraph
    g.rebuild()
    best = g.best_nodes(cm or CostModel())
    loop_cid = g.find(loop_cid)
    node = best[loop_cid][1]
    if head(node.symbol) != "for":
        raise BridgeError(f"class {loop_cid} is not a loop")
    sid = for_scope(node.symbol)
    inner = _inner_scopes(g, best, loop_cid)
    dep = scope_dependence(g, best, inner)

    ex = _Extractor(pg, best)
    free: dict[int, tuple[str, Type]] = {}
    order: list[int] = []

    def collect(cid: int) -> None:
        cid = g.find(cid)
        if cid in free or cid in seen:
            return
        seen.add(cid)
        n = best[cid][1]
        h = head(n.symbol)
        if not dep[cid] and cid != loop_cid and h not in ("const", "lit", "yield", "epoch") and not h.startswith("tuple"):
            free[cid] = ("", None)
            order.append(cid)
            return
        for c in n.children:
            collect(c)

    seen: set[int] = set()
    collect(loop_cid)
    types = _ClassTypes(pg, best)
    params = []
    for k, cid in enumerate(order):
        name = f"fv{k}"
        t = types.of(cid)
        if t is None:
            raise BridgeError(f"free class {cid} has no value type")
        free[cid] = (name, t)
        params.append((name, t))
    ex.params = free
    info = pg.ctx.scopes[sid]
    frame = _Frame(info.parent, None)
    frame.epoch = info.epoch
    ex.loop(loop_cid, node, frame)
    loop_op = frame.ops[-1]
    ops = frame.ops + [Operation("return", loop_op.results)]
    f = Function(f"{pg.ctx.name}.frag", tuple(params), Block((), tuple(ops)))
    verify_or_raise(f)
    return Fragment(f, {name: cid for cid, (name, _) in free.items()}, loop_cid, sid, info.parent, info.epoch)


class _ClassTypes:
    def __init__(self, pg: ProgramGraph, best):
        self.pg = pg
        self.best = best
        self.memo: dict[int, Optional[Type]] = {}

    def of(self, cid: int) -> Optional[Type]:
        g = self.pg.egraph
        cid = g.find(cid)
        if cid in self.memo:
            return self.memo[cid]
        self.memo[cid] = None
        node = self.best[cid][1]
        h = head(node.symbol)
        ctx = self.pg.ctx
        t: Optional[Type] = None
        if h == "param":
            t = ctx.param_type(node.symbol.split(":", 1)[1])
        elif h == "const":
            t = parse_type(parse_const(node.symbol)[1])
        elif h == "lit":
            t = INDEX
        elif h == "arg":
            s, k = parse_arg(node.symbol)
            t = ctx.scopes[s].arg_types[k]
        elif h == "result":
            loop = self.best[g.find(node.children[0])][1]
            k = int(node.symbol.split(":")[1])
            t = ctx.scopes[for_scope(loop.symbol)].arg_types[k + 1]
        elif h in BINARY_OPS:
            t = self.of(node.children[0])
        elif h == "cmpi":
            t = I1
        elif h == "select":
            t = self.of(node.children[1])
        elif h == "load":
            p = self.of(node.children[0])
            t = p.elem if isinstance(p, (PtrType, ArrayType)) else None
        elif h == "isax":
            rts = ctx.isax[node.symbol.split(":", 1)[1]].result_types
            t = rts[0] if rts else None
        self.memo[cid] = t
        return t


def encode_fragment(pg: ProgramGraph, f: Function, freemap: dict[str, int], parent_scope: str, epoch: int) -> int:
    """Encode the single top-level loop of fragment ``f`` into ``pg``.

    Returns the class of the new loop.  Fragment parameters map to existing
    classes through ``freemap``.
    """
    verify_or_raise(f)
    loops = [op for op in f.body.ops if op.opcode == "for"]
    if len(loops) != 1:
        raise BridgeError("a fragment must contain exactly one top-level loop")
    env: dict[str, int] = {}
    for name, _ in f.params:
        if name not in freemap:
            raise BridgeError(f"unmapped free variable %{name}")
        env[name] = pg.egraph.find(freemap[name])
    enc = _Encoder(pg.egraph, pg.ctx, env)
    for op in f.body.ops:
        if op.opcode == "for":
            return enc.loop(op, parent_scope, epoch)
        if op.opcode == "const":
            env[op.results[0]] = pg.egraph.add(ENode(f"const:{op.attrs['value']}:{op.result_types[0]}"))
        else:
            raise BridgeError(f"unexpected '{op.opcode}' before the fragment loop")
    raise BridgeError("fragment loop not found")


def union_with(pg: ProgramGraph, new: int, original: int) -> int:
    g = pg.egraph
    cid = g.union(new, original)
    g.rebuild()
    return g.find(cid)


def dump(pg: ProgramGraph, fmt: str = "json") -> str:
    if fmt == "json":
        return pg.to_json()
    if fmt == "dot":
        return pg.egraph.to_dot()
    raise ValueError(f"unknown dump format {fmt}")
