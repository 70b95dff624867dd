from __future__ import annotations

import copy
import random

import pytest

from isaxcc.bridge import encode
from isaxcc.egraph import ENode, head
from isaxcc.ir import HARDWARE_OPS, ParseError
from isaxcc.ir.verifier import VerifyError
from isaxcc.isax import (
    Component,
    IsaxError,
    LoopSlot,
    TerminatorSlot,
    UntranslatableBuffer,
    decompose,
    parse_isax,
    semantic_translate,
)
from isaxcc.pipeline import random_inputs
from isaxcc.rewrite import unroll_directives

from conftest import fixture_text

BUNDLED = ["gemv", "dist", "decompress", "vrev", "mac"]


def load(name):
    d = parse_isax(fixture_text(f"{name}.isax"))
    return d, semantic_translate(d)


def test_gemv_description_has_effects():
    d, _ = load("gemv")
    codes = [op.opcode for op in d.body.walk()]
    assert codes.count("blockload") == 1 and codes.count("blockstore") == 1
    assert d.effects
    inner = [op for op in d.body.walk() if op.opcode == "for" and op.attrs.get("unroll") == "full"]
    assert len(inner) == 1


def test_pure_description():
    d, t = load("mac")
    assert not d.effects and not t.effects
    assert d.outputs == ("rd",)
    assert str(t.result_type) == "i32"


@pytest.mark.parametrize(
    "edit, exc",
    [
        (("_blockld %in, %a, 4", "_blockld %nope, %a, 4"), ParseError),
        (("readrf rs3", "readrf rs9"), VerifyError),
        (("static %in : array<4 x i32>;", "static %in : array<4 x i32> partition cyclic 3;"), VerifyError),
        (("isax @vrev", "isax vrev"), ParseError),
    ],
)
def test_parse_errors(edit, exc):
    text = fixture_text("vrev.isax").replace(*edit)
    with pytest.raises(exc):
        parse_isax(text)


def test_read_before_fill_is_untranslatable():
    text = fixture_text("vrev.isax").replace("  _blockld %in, %a, 4\n", "")
    with pytest.raises(UntranslatableBuffer):
        semantic_translate(parse_isax(text))
    assert issubclass(UntranslatableBuffer, IsaxError)


def test_gemv_translation_eliminates_buffers():
    _, t = load("gemv")
    codes = {op.opcode for op in t.body.walk()}
    assert not codes & set(HARDWARE_OPS)
    assert [str(ty) for _, ty in t.params] == ["ptr<i32>", "ptr<i32>"]
    bases = {op.operands[0] for op in t.body.walk() if op.opcode == "load"}
    bases |= {op.operands[1] for op in t.body.walk() if op.opcode == "store"}
    assert bases == {name for name, _ in t.params}
    assert t.body.statics == ()


def test_pure_translation_only_substitutes_registers():
    d, t = load("mac")
    before = [op.opcode for op in d.body.walk() if op.opcode not in ("readrf", "writerf", "return")]
    after = [op.opcode for op in t.body.walk() if op.opcode != "return"]
    assert before == after


@pytest.mark.parametrize("name", BUNDLED)
def test_no_hardware_ops_survive(name):
    _, t = load(name)
    assert not {op.opcode for op in t.body.walk()} & set(HARDWARE_OPS)


@pytest.mark.parametrize("name", BUNDLED)
def test_translation_soundness(name):
    _, t = load(name)
    arch, soft = t.architectural_handler(), t.handler()
    rng = random.Random(name)
    for _ in range(100):
        args, state = random_inputs(t.body, rng)
        s1, s2 = copy.deepcopy(state), copy.deepcopy(state)
        r1 = arch(args, s1)
        r2 = soft(args, s2)
        assert r1 == r2
        assert s1.memory == s2.memory


# -- decomposition ---------------------------------------------------------------


def test_gemv_skeleton():
    _, t = load("gemv")
    sk = decompose(t)
    assert sk.depth() == 2
    assert sorted(c.kind for c in sk.components) == ["store", "yield"]
    outer = next(s for s in sk.body.slots if isinstance(s, LoopSlot))
    assert (outer.lb, outer.ub, outer.step) == (0, 4, 1)
    inner = next(s for s in outer.body.slots if isinstance(s, LoopSlot))
    # the full-unroll directive collapses the inner trip to one
    assert (inner.ub - inner.lb) // inner.step == 1


def test_pure_skeleton_is_single_block():
    _, t = load("mac")
    sk = decompose(t)
    assert sk.depth() == 0
    assert not any(isinstance(s, LoopSlot) for s in sk.body.slots)
    assert [c.kind for c in sk.components] == ["return"]
    assert sk.value is not None and head(sk.value.pattern[0]) == "addi"


def _subst_for(pg, pattern, out=None):
    """Bind every pattern variable to the leaf class it names."""
    g = pg.egraph
    out = {} if out is None else out
    if isinstance(pattern, str):
        kind, _, rest = pattern[1:].partition(":")
        if kind == "res":
            scope, k = rest.split(":")
            loop = next(c for c in g.class_ids() if any(n.symbol == f"for:{scope}" for n in g.nodes(c)))
            out[pattern] = g.lookup(ENode(f"result:{k}", (loop,)))
        else:
            out[pattern] = g.lookup(ENode(pattern[1:], ()))
        assert out[pattern] is not None, pattern
        return out
    for c in pattern[1:]:
        _subst_for(pg, c, out)
    return out


@pytest.mark.parametrize("name", BUNDLED)
def test_reassembly_reproduces_encoding(name):
    _, t = load(name)
    sk = decompose(t)
    pg = encode(unroll_directives(t.body))
    g = pg.egraph
    n0 = g.node_count
    pattern = sk.reassemble()
    root = g.instantiate(pattern, _subst_for(pg, pattern))
    assert g.find(root) == g.find(pg.root)
    assert g.node_count == n0


@pytest.mark.parametrize("name", BUNDLED)
def test_components_partition_roots(name):
    _, t = load(name)
    sk = decompose(t)
    pg = encode(unroll_directives(t.body))
    g = pg.egraph

    def roots(cid):
        node = g.nodes(cid)[0]
        total = 0
        for c in node.children:
            child = g.nodes(c)[0]
            total += 1
            if head(child.symbol) == "for":
                total += roots(child.children[-1])
        return total

    def slots(block):
        total = 0
        for s in block.slots:
            total += 1
            if isinstance(s, LoopSlot):
                total += slots(s.body)
        return total

    assert roots(pg.root) == slots(sk.body)
    ids = [c.id for c in sk.components]
    assert len(ids) == len(set(ids))
    terms = sum(isinstance(s, TerminatorSlot) for s in _all_slots(sk.body))
    loops = sum(isinstance(s, LoopSlot) for s in _all_slots(sk.body))
    assert len(sk.components) + terms + loops == slots(sk.body)


def _all_slots(block):
    for s in block.slots:
        yield s
        if isinstance(s, LoopSlot):
            yield from _all_slots(s.body)
