from __future__ import annotations

import random
import zlib

import pytest
from hypothesis import given, settings, strategies as st

from isaxcc.bridge import encode, witness_extract
from isaxcc.egraph import CostModel, EGraph, head, is_var, parse_const
from isaxcc.ir import Block, Function, Operation, interpret, parse, structurally_equal
from isaxcc.ir.types import I1, parse_type, wrap
from isaxcc.pipeline import differential_check
from isaxcc.rewrite import (
    ExternalTransform,
    LoopShape,
    RuleFileError,
    TransformError,
    apply_external,
    internal_rules,
    parse_rules,
    plan_external,
    run_internal,
    shape_of,
    tile,
    unroll,
)
from isaxcc.rewrite.loops import apply_to_function

from conftest import fixture_text

TYPES = ("i32", "index")
PARAMS = ("x", "y", "z")


# -- per-rule differential testing -----------------------------------------------


def _child_types(symbol: str, ty: str) -> list[str]:
    h = head(symbol)
    if h == "select":
        return ["i1", ty, ty]
    return [ty, ty]


def _random_operand(rng: random.Random, ty: str):
    if ty == "i1":
        if rng.random() < 0.4:
            return (f"const:{rng.randrange(2)}:i1",)
        pred = rng.choice(("eq", "slt", "ult", "sge"))
        return (f"cmpi:{pred}", ("param:x",), ("param:y",))
    r = rng.random()
    if r < 0.45:
        return (f"param:{rng.choice(PARAMS)}",)
    w = 32 if ty == "i32" else 64
    value = rng.choice((0, 1, 2, 3, 4, 8, 16, rng.randrange(0, w + 4), rng.randrange(-(2**31), 2**31)))
    return (f"const:{wrap(value, parse_type(ty))}:{ty}",)


def _instance(pat, ty: str, rng: random.Random, binding: dict):
    """A random term matching ``pat``; repeated variables get the same subterm."""
    if is_var(pat):
        if pat not in binding:
            binding[pat] = _random_operand(rng, ty)
        return binding[pat]
    kids = _child_types(pat[0], ty) if len(pat) > 1 else []
    if head(pat[0]) == "cmpi":
        kids = [ty, ty]
    return (pat[0],) + tuple(_instance(p, t, rng, binding) for p, t in zip(pat[1:], kids))


def _to_function(term, ty: str) -> Function:
    """Straight-line function computing ``term`` over params x, y, z of type ``ty``."""
    ops: list[Operation] = []
    memo: dict = {}

    def emit(t) -> str:
        if t in memo:
            return memo[t]
        sym = t[0]
        if sym.startswith("param:"):
            return sym.split(":", 1)[1]
        args = tuple(emit(c) for c in t[1:])
        name = f"t{len(ops)}"
        if sym.startswith("const:"):
            v, cty = parse_const(sym)
            ops.append(Operation("const", (), (name,), (parse_type(cty),), {"value": v}))
        else:
            h = head(sym)
            if h == "cmpi":
                ops.append(Operation("cmpi", args, (name,), (I1,), {"pred": sym.split(":")[1]}))
            else:
                ops.append(Operation(sym, args, (name,), (parse_type(ty),), {}))
        memo[t] = name
        return name

    res = emit(term)
    ops.append(Operation("return", (res,)))
    return Function("t", tuple((p, parse_type(ty)) for p in PARAMS), Block((), tuple(ops)))


RULES = internal_rules()


@pytest.mark.parametrize("rule", RULES, ids=[r.name for r in RULES])
def test_rule_is_sound(rule):
    rng = random.Random(zlib.crc32(rule.name.encode()))
    fired = attempts = 0
    while fired < 100:
        attempts += 1
        assert attempts < 20_000, f"{rule.name} fired only {fired} times"
        ty = rng.choice(TYPES)
        lhs = _instance(rule.lhs, ty, rng, {})
        g = EGraph()
        root = g.add_term(lhs)
        matches = [s for c, s in g.ematch(rule.lhs) if g.find(c) == g.find(root)]
        if not matches:
            continue
        new = rule.instantiate(g, matches[0])
        if new is None:
            continue
        fired += 1
        rhs = g.extract(new, CostModel()) if g.find(new) != g.find(root) else lhs
        f_lhs, f_rhs = _to_function(lhs, ty), _to_function(rhs, ty)
        for _ in range(3):
            args = [rng.randrange(-(2**40), 2**40) for _ in PARAMS]
            a = interpret(f_lhs, args)[0]
            b = interpret(f_rhs, args)[0]
            assert a == b, (rule.name, lhs, rhs, args)


def test_gemv_shift_gains_mul():
    pg = encode(parse(fixture_text("gemv.ir")))
    g = pg.egraph
    (cid, s), = g.ematch(("shli", "?x", ("const:2:index",)))
    rep = run_internal(g)
    assert rep.applied["shl-to-mul"] >= 1
    assert "muli" in {n.symbol for n in g.nodes(cid)}


def test_canonical_program_has_no_applications():
    f = parse("func @f(%p: ptr<i32>, %k: index) {\n  %v = load %p, %k : i32\n  store %v, %p, %k\n  return\n}")
    rep = run_internal(encode(f).egraph)
    assert rep.total_applied == 0


# -- user rule files -------------------------------------------------------------------


def test_rule_file_roundtrip():
    rules = parse_rules(
        """
        ; double negation style rewrite
        (rule or-self (ori ?x ?x) ?x)
        (rule and-small (andi ?x ?c) (andi ?c ?x) (const-range ?c 0 255))
        """
    )
    assert [r.name for r in rules] == ["or-self", "and-small"]
    g = EGraph()
    x = g.add_term(("param:x",))
    root = g.add_term(("ori", x, x))
    g.saturate(rules)
    assert g.find(root) == g.find(x)


@pytest.mark.parametrize(
    "text",
    ["(rule r (addi ?x ?y) ?z)", "(rule r (addi ?x ?y)", "(foo)", "(rule r (addi ?x ?y) ?x (bogus ?x))", "(rule r ?x ?x))"],
)
def test_rule_file_errors(text):
    with pytest.raises(RuleFileError):
        parse_rules(text)


# -- external transforms ---------------------------------------------------------------


LOOP8 = """func @f(%p: ptr<i32>, %q: ptr<i32>, %x: i32) {
  %r = for %i = 0 to 8 step 1 iter_args(%acc = %x) {
    %v = load %p, %i : i32
    %w = muli %v, %acc : i32
    %s = addi %acc, %v : i32
    store %w, %q, %i
    yield %s
  }
  return %r
}"""


def _loop_of(f: Function) -> Operation:
    return next(op for op in f.body.ops if op.opcode == "for")


@pytest.mark.parametrize("factor", [2, 4, 8])
def test_unroll_is_sound(factor):
    f = parse(LOOP8)
    g = apply_to_function(f, "unroll", factor)
    loop = _loop_of(g)
    assert loop.constant_trip_count() == 8 // factor
    assert sum(op.opcode == "load" for op in loop.body.ops) == factor
    ok, detail = differential_check(f, g, {}, seed=factor, trials=100)
    assert ok, detail


@pytest.mark.parametrize("size", [2, 4])
def test_tile_is_sound(size):
    f = parse(LOOP8)
    g = apply_to_function(f, "tile", size)
    outer = _loop_of(g)
    inner = _loop_of(Function("i", (), outer.body))
    assert (outer.constant_trip_count(), inner.constant_trip_count()) == (8 // size, size)
    ok, detail = differential_check(f, g, {}, seed=size, trials=100)
    assert ok, detail


def test_unroll_factor_one_rejected():
    with pytest.raises(ValueError):
        ExternalTransform("unroll", 0, 1)
    with pytest.raises(TransformError):
        unroll(_loop_of(parse(LOOP8)), 1)


def test_non_dividing_factor_rejected():
    with pytest.raises(TransformError):
        unroll(_loop_of(parse(LOOP8)), 3)
    with pytest.raises(TransformError):
        tile(_loop_of(parse(LOOP8)), 3)


def test_non_constant_bounds_rejected():
    f = parse("func @f(%n: index) {\n  for %i = 0 to %n step 1 {\n  }\n  return\n}")
    with pytest.raises(TransformError):
        unroll(_loop_of(f), 2)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 3),
    st.sampled_from([1, 2]),
    st.sampled_from([2, 4]),
    st.sampled_from(["unroll", "tile"]),
    st.integers(0, 999),
)
def test_transforms_on_random_bounds(lb, step, factor, kind, seed):
    trips = factor * 2
    ub = lb + trips * step
    text = LOOP8.replace("0 to 8 step 1", f"{lb} to {ub} step {step}")
    f = parse(text)
    g = apply_to_function(f, kind, factor)
    ok, detail = differential_check(f, g, {}, seed=seed, trials=10)
    assert ok, detail


def _gemv_graph():
    return encode(parse(fixture_text("gemv.ir")))


def _inner_loop_class(pg):
    g = pg.egraph
    best = g.best_nodes(CostModel())

    def loops_under(cid):
        node = best[g.find(cid)][1]
        return [c for c in best[g.find(node.children[-1])][1].children if head(best[g.find(c)][1].symbol) == "for"]

    (outer,) = [c for c in best[g.find(pg.root)][1].children if head(best[g.find(c)][1].symbol) == "for"]
    return loops_under(outer)[0]


def test_apply_external_accumulates():
    f = parse(fixture_text("gemv.ir"))
    pg = encode(f)
    inner = _inner_loop_class(pg)
    merged = apply_external(pg, ExternalTransform("unroll", 1, 4, inner))
    fors = [n for n in pg.egraph.nodes(merged) if head(n.symbol) == "for"]
    assert len(fors) == 2
    # default costs keep the smaller original, so the input comes back
    assert structurally_equal(witness_extract(pg), f)


# -- loop shapes and plans ---------------------------------------------------------


def test_shape_of_gemv():
    pg = _gemv_graph()
    g = pg.egraph
    best = g.best_nodes(CostModel())
    top = next(c for c in best[g.find(pg.root)][1].children if head(best[g.find(c)][1].symbol) == "for")
    shape = shape_of(pg, top, best)
    assert shape.depth == 2 and shape.trips == (4, 4)


def test_plan_unroll_full():
    app = LoopShape(2, (4, 4))
    isax = LoopShape(2, (1, 4), unroll_full=(False, True))
    plan = plan_external(app, isax)
    assert [str(t) for t in plan.transforms] == ["Unroll(4)"]
    assert plan.transforms[0].level == 1


def test_plan_identical_is_empty():
    s = LoopShape(2, (4, 4))
    plan = plan_external(s, s)
    assert plan is not None and len(plan) == 0


def test_plan_tile_for_depth_gap():
    app = LoopShape(1, (16,))
    isax = LoopShape(2, (2, 8))
    plan = plan_external(app, isax)
    assert [str(t) for t in plan.transforms] == ["Tile(8)"]


def test_plan_tile_same_depth():
    plan = plan_external(LoopShape(2, (2, 16)), LoopShape(2, (2, 8)))
    assert [str(t) for t in plan.transforms] == ["Tile(8)"]


def test_plan_none_when_not_dividing():
    assert plan_external(LoopShape(1, (10,)), LoopShape(2, (2, 4))) is None
    assert plan_external(LoopShape(3, (2, 2, 2)), LoopShape(1, (4,))) is None
