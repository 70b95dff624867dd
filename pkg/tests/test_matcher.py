from __future__ import annotations

import json
import random

import pytest

from progen import ProgramGen
from isaxcc.bridge import IsaxSig, encode, witness_extract
from isaxcc.egraph import CostModel
from isaxcc.ir import parse, structurally_equal
from isaxcc.matcher import (
    CheckReport,
    insert_isax,
    insert_many,
    match_and_insert,
    skeleton_match,
    tag_components,
    tags_for,
    validate,
)
from isaxcc.pipeline import differential_check, isax_shape, load_isax_text, plan_for
from isaxcc.rewrite import apply_external, internal_rules

from conftest import fixture_text

COST = CostModel(loop_penalty=2.0)


def loaded(name):
    return load_isax_text(fixture_text(f"{name}.isax"))


def _sigs(isax):
    t = isax.translated
    return {isax.name: IsaxSig([t.result_type] if t.result_type else [], t.reads_memory)}


def _graph(f, isax, saturate=True):
    pg = encode(f, _sigs(isax))
    if saturate:
        pg.egraph.saturate(internal_rules())
    tag_components(pg.egraph, isax.skeleton)
    return pg


def oracle(f, isax, index, seed=0, trials=20):
    """Insert only candidate ``index`` in a fresh graph, extract, and compare
    the result run under the ISAX's hardware semantics with the input."""
    pg = _graph(f, isax)
    cand = skeleton_match(pg, isax.skeleton)[index]
    insert_many(pg, isax.skeleton, [cand])
    out = witness_extract(pg, COST)
    assert any(op.opcode == "isax.call" for op in out.walk())
    handlers = {isax.name: isax.translated.architectural_handler()}
    return differential_check(f, out, handlers, seed, trials)[0]


# -- planted sites --------------------------------------------------------------------

VREV_VARIANTS = ("valid", "alias", "carried", "trip8", "offset", "swapped", "nested")


def plant_vrev(variant, rng):
    def plant(gen: ProgramGen, depth: int) -> None:
        if variant == "nested":
            o, kk = gen.fresh("o"), gen.fresh("v")
            gen.emit(depth, f"for {o} = 0 to 2 step 1 {{")
            gen.emit(depth + 1, f"{kk} = load %p, {o} : i32")
            gen.scopes.append(type(gen.scopes[0])([kk], [o]))
            plant_vrev("valid", rng)(gen, depth + 1)
            gen.scopes.pop()
            gen.emit(depth, "}")
            return
        src, dst = ("p", "q") if rng.random() < 0.5 else ("q", "p")
        if variant == "alias":
            dst = src
        k = rng.choice(gen.ints())
        ub = 8 if variant == "trip8" else 4
        three, i, j, x, y = (gen.fresh(b) for b in ("t", "i", "j", "l", "y"))
        gen.emit(depth, f"{three} = const {7 if variant == 'offset' else 3} : index")
        lines = [f"{j} = subi {three}, {i} : index", f"{x} = load %{src}, {j} : i32"]
        if variant == "swapped":
            # reads forward and stores reversed: same shape, other semantics
            lines = [f"{j} = subi {three}, {i} : index", f"{x} = load %{src}, {i} : i32"]
        lines.append(f"{y} = addi {x}, {k} : i32")
        if variant == "carried":
            r, acc, n = gen.fresh("r"), gen.fresh("a"), gen.fresh("n")
            gen.emit(depth, f"{r} = for {i} = 0 to {ub} step 1 iter_args({acc} = {k}) {{")
            lines[-1] = f"{y} = addi {x}, {acc} : i32"
            lines.append(f"store {y}, %{dst}, {i}")
            lines.append(f"{n} = addi {acc}, {x} : i32")
            lines.append(f"yield {n}")
        else:
            gen.emit(depth, f"for {i} = 0 to {ub} step 1 {{")
            target = j if variant == "swapped" else i
            lines.append(f"store {y}, %{dst}, {target}")
        for line in lines:
            gen.emit(depth + 1, line)
        gen.emit(depth, "}")

    return plant


def planted_program(seed):
    rng = random.Random(seed)
    variant = VREV_VARIANTS[seed % len(VREV_VARIANTS)]
    gen = ProgramGen(rng, max_depth=1, max_ops=4)
    return variant, parse(gen.text(plant_vrev(variant, rng)))


@pytest.mark.parametrize("seed", range(60))
def test_plant_and_check_vrev(seed):
    variant, f = planted_program(seed)
    vrev = loaded("vrev")
    pg = _graph(f, vrev)
    cands = skeleton_match(pg, vrev.skeleton)
    reports = [validate(pg, vrev.skeleton, c) for c in cands]
    for idx, rep in enumerate(reports):
        assert rep.ok == oracle(f, vrev, idx, seed=seed), (variant, idx, rep.diagnostics)
    accepted = sum(r.ok for r in reports)
    if variant in ("valid", "nested"):
        assert accepted >= 1
    elif variant in ("alias", "carried", "trip8", "offset", "swapped"):
        assert accepted == 0, (variant, [r.diagnostics for r in reports])


def test_alias_is_an_effects_failure():
    # in-place reversal reads entries the loop already overwrote
    rng = random.Random(3)
    gen = ProgramGen(rng, max_ops=1, stores=False)
    f = parse(gen.text(plant_vrev("alias", rng)))
    vrev = loaded("vrev")
    pg = _graph(f, vrev)
    (cand,) = skeleton_match(pg, vrev.skeleton)
    rep = validate(pg, vrev.skeleton, cand)
    assert not rep.effects and rep.ordering and rep.dominance_visibility
    assert any(d.startswith("effects:") for d in rep.diagnostics)
    assert not oracle(f, vrev, 0)


@pytest.mark.parametrize("seed", range(20))
def test_plant_and_check_mac(seed):
    rng = random.Random(seed)
    mac = loaded("mac")

    def plant(gen, depth):
        a, b, c = (rng.choice(gen.ints()) for _ in range(3))
        m, s = gen.fresh("m"), gen.fresh("s")
        gen.emit(depth, f"{m} = muli {a}, {b} : i32")
        gen.emit(depth, f"{s} = addi {rng.choice((m + ', ' + c, c + ', ' + m))} : i32")
        gen.emit(depth, f"store {s}, %p, %k")

    f = parse(ProgramGen(rng, max_depth=1, max_ops=4).text(plant))
    pg = _graph(f, mac)
    cands = skeleton_match(pg, mac.skeleton)
    assert cands
    for idx, cand in enumerate(cands):
        rep = validate(pg, mac.skeleton, cand)
        assert rep.ok
        if idx < 3:
            assert oracle(f, mac, idx, seed=seed)


# -- structure --------------------------------------------------------------------------


def test_tagging_is_idempotent_and_empty_ok():
    gemv = loaded("gemv")
    pg = encode(parse(fixture_text("gemv.ir")))
    assert tag_components(pg.egraph, []) == 0
    n = tag_components(pg.egraph, gemv.skeleton)
    assert n >= 1
    before = {c: set(pg.egraph.tags(c)) for c in pg.egraph.class_ids()}
    tag_components(pg.egraph, gemv.skeleton)
    assert {c: set(pg.egraph.tags(c)) for c in pg.egraph.class_ids()} == before


def test_tags_equal_pattern_matches():
    gemv = loaded("gemv")
    pg = encode(parse(fixture_text("gemv.ir")))
    g = pg.egraph
    g.saturate(internal_rules())
    tag_components(g, gemv.skeleton)
    for comp in gemv.skeleton.components:
        pat = comp.pattern
        expected = {(g.find(c), tuple(sorted(s.items()))) for c, s in g.ematch(pat)}
        got = {
            (g.find(c), tuple(sorted(s.items()))) for c in g.class_ids() for s in tags_for(g, c, "gemv", comp.id)
        }
        assert got == expected


def test_original_gemv_does_not_match():
    gemv = loaded("gemv")
    pg = _graph(parse(fixture_text("gemv.ir")), gemv)
    assert skeleton_match(pg, gemv.skeleton) == []


def test_unrolled_variant_matches_and_validates():
    gemv = loaded("gemv")
    f = parse(fixture_text("gemv.ir"))
    pg = _graph(f, gemv)
    for tr in plan_for(pg, isax_shape(gemv.translated), COST):
        apply_external(pg, tr, COST)
    pg.egraph.saturate(internal_rules())
    tag_components(pg.egraph, gemv.skeleton)
    cands = skeleton_match(pg, gemv.skeleton)
    reports = [validate(pg, gemv.skeleton, c) for c in cands]
    assert any(r.ok for r in reports)
    ok = [c for c, r in zip(cands, reports) if r.ok]
    for cand in ok:
        # the original loop is not a match; only the unrolled one is
        loop = cand.loops[next(iter(cand.loops))]
        assert any(n.symbol.startswith("for:") for n in pg.egraph.nodes(loop))


def test_depth_mismatch_gives_no_candidates():
    vrev = loaded("vrev")
    pg = _graph(parse(fixture_text("gemv.ir")), vrev)
    assert skeleton_match(pg, vrev.skeleton) == []


def test_insertion_keeps_original_extractable():
    rng = random.Random(11)
    vrev = loaded("vrev")
    f = parse(ProgramGen(rng, max_ops=2).text(plant_vrev("valid", rng)))
    pg = _graph(f, vrev, saturate=False)
    res = match_and_insert(pg, vrev.skeleton)
    assert len(res.inserted) == 1
    with_call = witness_extract(pg, COST)
    assert sum(op.opcode == "isax.call" for op in with_call.walk()) == 1
    no_isax = witness_extract(pg, CostModel(isax_cost=1e6))
    assert structurally_equal(no_isax, f)


def test_pure_insertion_keeps_tuple_arity():
    mac = loaded("mac")
    f = parse(
        "func @f(%a: i32, %b: i32, %c: i32) {\n"
        "  %m = muli %a, %b : i32\n"
        "  %s = addi %m, %c : i32\n"
        "  return %s\n"
        "}"
    )
    pg = _graph(f, mac, saturate=False)
    root_arity = len(pg.egraph.nodes(pg.root)[0].children)
    (cand,) = skeleton_match(pg, mac.skeleton)
    rep = validate(pg, mac.skeleton, cand)
    insert_isax(pg, mac.skeleton, cand, rep)
    tuples = [n for n in pg.egraph.nodes(pg.root) if n.symbol.startswith("tuple")]
    assert len(tuples) == 1 and len(tuples[0].children) == root_arity
    out = witness_extract(pg, COST)
    assert [op.opcode for op in out.walk()] == ["isax.call", "return"]


def test_insertion_refuses_failed_report():
    rng = random.Random(3)
    vrev = loaded("vrev")
    f = parse(ProgramGen(rng, max_ops=1, stores=False).text(plant_vrev("alias", rng)))
    pg = _graph(f, vrev)
    (cand,) = skeleton_match(pg, vrev.skeleton)
    rep = validate(pg, vrev.skeleton, cand)
    with pytest.raises(ValueError):
        insert_isax(pg, vrev.skeleton, cand, rep)


def test_overlapping_candidates_are_applied_once():
    vrev = loaded("vrev")
    rng = random.Random(5)

    def twice(gen, depth):
        plant_vrev("valid", rng)(gen, depth)

    f = parse(ProgramGen(rng, max_ops=1, stores=False).text(twice))
    pg = _graph(f, vrev, saturate=False)
    res = match_and_insert(pg, vrev.skeleton)
    assert len(res.inserted) <= sum(r.ok for r in res.reports)
    anchors = [(pg.egraph.find(c.anchor), c.position) for c in res.inserted]
    assert len(anchors) == len(set(anchors))


def test_check_report_json():
    rep = CheckReport()
    assert rep.ok and rep.to_json()["accepted"]
    rep.fail("ordering", "out of order")
    data = json.loads(json.dumps(rep.to_json()))
    assert data == {
        "ordering": False,
        "dominance_visibility": True,
        "loop_carried_deps": True,
        "effects": True,
        "accepted": False,
        "diagnostics": ["ordering: out of order"],
    }


def test_matching_is_deterministic():
    _, f = planted_program(0)
    vrev = loaded("vrev")
    runs = []
    for _ in range(2):
        pg = _graph(f, vrev)
        cands = skeleton_match(pg, vrev.skeleton)
        runs.append([(c.anchor, c.position, sorted(c.subst.items()), validate(pg, vrev.skeleton, c).to_json()) for c in cands])
    assert runs[0] == runs[1]


def _valid_site(extra=""):
    text = (
        "func @f(%p: ptr<i32>, %q: ptr<i32>, %x: i32) {\n"
        "  %t = const 3 : index\n"
        "  for %i = 0 to 4 step 1 {\n"
        "    %j = subi %t, %i : index\n"
        "    %l = load %q, %j : i32\n"
        "    %y = addi %l, %x : i32\n"
        "    store %y, %p, %i\n"
        "  }\n"
        f"{extra}"
        "  return\n"
        "}"
    )
    vrev = loaded("vrev")
    pg = _graph(parse(text), vrev, saturate=False)
    (cand,) = skeleton_match(pg, vrev.skeleton)
    return pg, vrev, cand


def test_binding_defined_after_span_is_invisible():
    z = "  %z = const 0 : index\n  %late = load %p, %z : i32\n  store %late, %q, %z\n"
    pg, vrev, cand = _valid_site(z)
    assert validate(pg, vrev.skeleton, cand).ok
    g = pg.egraph
    loads = [c for c in g.class_ids() if any(n.symbol == "load" for n in g.nodes(c))]
    late = max(loads)  # encoded last: the load after the loop
    cand.subst["?param:k"] = late
    rep = validate(pg, vrev.skeleton, cand)
    assert not rep.dominance_visibility and not rep.ok


def test_wrong_induction_variable_fails_loop_check():
    pg, vrev, cand = _valid_site()
    cand.subst["?arg:1:0"] = cand.subst["?param:k"]
    rep = validate(pg, vrev.skeleton, cand)
    assert not rep.loop_carried_deps and not rep.ok
