"""Skeleton/component matching of ISAXs against a saturated program graph."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .bridge import (
    FUNCTION_SCOPE,
    IsaxSig,
    ProgramGraph,
    for_scope,
    parse_arg,
    parse_epoch,
    tuple_epochs,
    tuple_symbol,
)
from .egraph import EGraph, ENode, head
from .isax import BlockSlot, Component, LoopSlot, Skeleton, TerminatorSlot

Subst = dict[str, int]


@dataclass(frozen=True)
class ComponentTag:
    isax: str
    component: int
    subst: tuple[tuple[str, int], ...]


@dataclass
class MatchCandidate:
    isax: str
    anchor: int  # tuple class (effectful) or value class (pure)
    subst: Subst
    tuple_node: Optional[ENode] = None
    position: int = 0
    length: int = 0
    scope: str = FUNCTION_SCOPE
    scope_map: dict[str, str] = field(default_factory=dict)
    epoch_map: dict[str, list[int]] = field(default_factory=dict)
    loops: dict[str, int] = field(default_factory=dict)  # ISAX scope -> app loop class

    def span(self) -> range:
        return range(self.position, self.position + self.length)


@dataclass
class CheckReport:
    ordering: bool = True
    dominance_visibility: bool = True
    loop_carried_deps: bool = True
    effects: bool = True
    diagnostics: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.ordering and self.dominance_visibility and self.loop_carried_deps and self.effects

    def fail(self, check: str, message: str) -> None:
        setattr(self, check, False)
        self.diagnostics.append(f"{check}: {message}")

    def to_json(self) -> dict:
        return {
            "ordering": self.ordering,
            "dominance_visibility": self.dominance_visibility,
            "loop_carried_deps": self.loop_carried_deps,
            "effects": self.effects,
            "accepted": self.ok,
            "diagnostics": list(self.diagnostics),
        }


# ---------------------------------------------------------------------------
# tagging


def _components(sk: Skeleton) -> list[Component]:
    return list(sk.components) + ([sk.value] if sk.value is not None else [])


def tag_components(g: EGraph, sk_or_components) -> int:
    """Attach a tag to every class where a component pattern matches.

    Returns the number of newly attached tags.
    """
    if isinstance(sk_or_components, Skeleton):
        name, comps = sk_or_components.name, _components(sk_or_components)
    else:
        comps = list(sk_or_components)
        name = ""
    added = 0
    for comp in comps:
        for cid, s in g.ematch(comp.pattern):
            subst = tuple(sorted((k, g.find(v)) for k, v in s.items()))
            added += g.tag(cid, ComponentTag(name, comp.id, subst))
    return added


def tags_for(g: EGraph, cid: int, isax: str, component: int) -> list[Subst]:
    out = []
    for t in sorted(g.tags(cid), key=repr):
        if isinstance(t, ComponentTag) and t.isax == isax and t.component == component:
            out.append({k: g.find(v) for k, v in t.subst})
    return out


# ---------------------------------------------------------------------------
# skeleton matching


def tuple_scopes(pg: ProgramGraph) -> dict[int, list[str]]:
    """Block scope(s) of every tuple class."""
    g = pg.egraph
    out: dict[int, list[str]] = {g.find(pg.root): [FUNCTION_SCOPE]}
    for cid in g.class_ids():
        for n in g.nodes(cid):
            if head(n.symbol) == "for":
                body = g.find(n.children[-1])
                scopes = out.setdefault(body, [])
                s = for_scope(n.symbol)
                if s not in scopes:
                    scopes.append(s)
    return out


def _unify(subst: Subst, other: Subst, g: EGraph) -> Optional[Subst]:
    out = dict(subst)
    for k, v in other.items():
        v = g.find(v)
        cur = out.get(k)
        if cur is None:
            out[k] = v
        elif g.find(cur) != v:
            return None
    return out


@dataclass
class _State:
    subst: Subst
    scope_map: dict[str, str]
    epoch_map: dict[str, list[int]]
    loops: dict[str, int]

    def copy(self) -> "_State":
        return _State(dict(self.subst), dict(self.scope_map), dict(self.epoch_map), dict(self.loops))


class _SkeletonMatcher:
    def __init__(self, pg: ProgramGraph, sk: Skeleton):
        self.pg = pg
        self.g = pg.egraph
        self.sk = sk

    def is_lit(self, cid: int, value: int) -> bool:
        hit = self.g.lookup(ENode(f"lit:{value}"))
        return hit is not None and self.g.find(hit) == self.g.find(cid)

    def slot(self, slot, cid: int, st: _State) -> Iterator[_State]:
        g = self.g
        cid = g.find(cid)
        if isinstance(slot, Component):
            for s in tags_for(g, cid, self.sk.name, slot.id):
                u = _unify(st.subst, s, g)
                if u is not None:
                    nst = st.copy()
                    nst.subst = u
                    yield nst
        elif isinstance(slot, TerminatorSlot):
            if any(n.symbol == slot.kind and not n.children for n in g.nodes(cid)):
                yield st
        else:
            yield from self.loop(slot, cid, st)

    def loop(self, slot: LoopSlot, cid: int, st: _State) -> Iterator[_State]:
        g = self.g
        for node in list(g.nodes(cid)):
            if head(node.symbol) != "for" or len(node.children) != 4 + len(slot.inits):
                continue
            kids = node.children
            if not (self.is_lit(kids[0], slot.lb) and self.is_lit(kids[1], slot.ub) and self.is_lit(kids[2], slot.step)):
                continue
            for s in self.inits(slot.inits, kids[3:-1], st.subst):
                base = st.copy()
                base.subst = s
                base.scope_map[slot.scope] = for_scope(node.symbol)
                base.loops[slot.scope] = cid
                body = g.find(kids[-1])
                for tup in list(g.nodes(body)):
                    if head(tup.symbol) != "tuple" or len(tup.children) != len(slot.body.slots):
                        continue
                    inner = base.copy()
                    inner.epoch_map[slot.scope] = tuple_epochs(tup)
                    yield from self.block(slot.body, list(tup.children), 0, inner)

    def inits(self, pats, kids, subst: Subst) -> Iterator[Subst]:
        if not pats:
            yield subst
            return
        for s in self.g._match(pats[0], self.g.find(kids[0]), subst):
            yield from self.inits(pats[1:], kids[1:], s)

    def block(self, blk: BlockSlot, roots: list[int], k: int, st: _State) -> Iterator[_State]:
        if k == len(blk.slots):
            yield st
            return
        for nst in self.slot(blk.slots[k], roots[k], st):
            yield from self.block(blk, roots, k + 1, nst)

    def window(self, roots: list[int], p: int, st: _State) -> Iterator[_State]:
        prefix = self.sk.body.prefix
        yield from self.block(BlockSlot(self.sk.body.scope, prefix), roots[p : p + len(prefix)], 0, st)


def skeleton_match(pg: ProgramGraph, sk: Skeleton) -> list[MatchCandidate]:
    """Candidate offload sites for ``sk``; components must already be tagged."""
    g = pg.egraph
    g.rebuild()
    out: list[MatchCandidate] = []
    if not sk.effects:
        comp = sk.value
        for cid in g.class_ids():
            for s in tags_for(g, cid, sk.name, comp.id):
                out.append(MatchCandidate(sk.name, cid, s))
        return out
    m = len(sk.body.prefix)
    if m == 0:
        return out
    matcher = _SkeletonMatcher(pg, sk)
    for tcid, scopes in sorted(tuple_scopes(pg).items()):
        for node in list(g.nodes(tcid)):
            if head(node.symbol) != "tuple":
                continue
            roots = list(node.children)
            for p in range(0, len(roots) - m):
                for st in matcher.window(roots, p, _State({}, {}, {}, {})):
                    for scope in scopes:
                        out.append(
                            MatchCandidate(
                                sk.name,
                                tcid,
                                st.subst,
                                node,
                                p,
                                m,
                                scope,
                                dict(st.scope_map),
                                {k: list(v) for k, v in st.epoch_map.items()},
                                dict(st.loops),
                            )
                        )
    return out


# ---------------------------------------------------------------------------
# validation


def _visible_classes(pg: ProgramGraph, scope: str, epoch: int) -> set[int]:
    """Classes with a witness computable just before a root at ``epoch`` of ``scope``."""
    g = pg.egraph
    ctx = pg.ctx
    chain = ctx.ancestors(scope)
    limit = {scope: epoch}
    for child, parent in zip(chain, chain[1:]):
        limit[parent] = ctx.scopes[child].epoch

    def leaf_ok(node: ENode) -> Optional[bool]:
        h = head(node.symbol)
        if h in ("param", "const", "lit"):
            return True
        if h == "arg":
            return parse_arg(node.symbol)[0] in limit
        if h == "epoch":
            s, n = parse_epoch(node.symbol)
            return s in limit and n <= limit[s]
        if h in ("tuple", "for", "store", "yield", "return"):
            return False
        return None

    visible: set[int] = set()
    changed = True
    while changed:
        changed = False
        for cid in g.class_ids():
            if cid in visible:
                continue
            for n in g.nodes(cid):
                ok = leaf_ok(n)
                if ok is None:
                    if head(n.symbol) == "result":
                        loop_ok = False
                        for ln in g.nodes(n.children[0]):
                            if head(ln.symbol) == "for":
                                info = ctx.scopes[for_scope(ln.symbol)]
                                if info.parent in limit and info.epoch < limit[info.parent]:
                                    loop_ok = True
                        ok = loop_ok
                    else:
                        ok = all(g.find(c) in visible for c in n.children)
                if ok:
                    visible.add(cid)
                    changed = True
                    break
    return visible


def _reaches(g: EGraph, starts: list[int], targets: set[int]) -> Optional[int]:
    stack, seen = [g.find(s) for s in starts], set()
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        if c in targets:
            return c
        for n in g.nodes(c):
            stack.extend(g.find(k) for k in n.children)
    return None


def validate(pg: ProgramGraph, sk: Skeleton, cand: MatchCandidate) -> CheckReport:
    g = pg.egraph
    rep = CheckReport()
    if not sk.effects:
        for var, cid in cand.subst.items():
            if var.startswith(("?arg:", "?res:")):
                rep.fail("loop_carried_deps", f"{var} bound in a pure ISAX")
        return rep
    node = cand.tuple_node
    roots = list(node.children)
    epochs = tuple_epochs(node)
    p, m = cand.position, cand.length

    # ordering
    if p < 0 or p + m >= len(roots):
        rep.fail("ordering", "span must end before the block terminator")
        return rep
    for k in cand.span():
        if any(head(n.symbol) in ("yield", "return") for n in g.nodes(roots[k])):
            rep.fail("ordering", f"root {k} of the span is a terminator")

    # dominance / visibility
    visible = _visible_classes(pg, cand.scope, epochs[p])
    for var, cid in sorted(cand.subst.items()):
        if var.startswith("?param:") and g.find(cid) not in visible:
            rep.fail("dominance_visibility", f"{var} -> class {cid} is not computable before the span")
    escaping: set[int] = set()
    for k in cand.span():
        for n in g.nodes(roots[k]):
            if head(n.symbol) == "for":
                for j in range(len(n.children) - 4):
                    r = g.lookup(ENode(f"result:{j}", (g.find(roots[k]),)))
                    if r is not None:
                        escaping.add(g.find(r))
    for e in range(epochs[p] + 1, epochs[p + m]):
        leaf = g.lookup(ENode(f"epoch:{cand.scope}:{e}"))
        if leaf is not None:
            escaping.add(g.find(leaf))
    hit = _reaches(g, roots[p + m :], escaping)
    if hit is not None:
        rep.fail("dominance_visibility", f"class {hit} defined inside the span is used after it")

    # loop-carried dependences: block arguments, loop results and epochs
    def expect(var: str) -> Optional[int]:
        kind, s, k = var[1:].split(":")
        k = int(k)
        if kind == "epoch":
            if s == FUNCTION_SCOPE:
                return g.lookup(ENode(f"epoch:{cand.scope}:{epochs[p + k]}"))
            if s not in cand.scope_map:
                return None
            return g.lookup(ENode(f"epoch:{cand.scope_map[s]}:{cand.epoch_map[s][k]}"))
        if s not in cand.scope_map:
            return None
        if kind == "arg":
            return g.lookup(ENode(f"arg:{cand.scope_map[s]}:{k}"))
        return g.lookup(ENode(f"result:{k}", (g.find(cand.loops[s]),)))

    for var, cid in sorted(cand.subst.items()):
        if var.startswith(("?arg:", "?res:", "?epoch:")):
            want = expect(var)
            if want is None or g.find(want) != g.find(cid):
                rep.fail("loop_carried_deps", f"{var} -> class {cid} does not correspond to the matched loop structure")

    # effects
    acc = list(sk.accesses)
    for i, a in enumerate(acc):
        for b in acc[i + 1 :]:
            if "write" not in (a.kind, b.kind):
                continue
            ca, cb = cand.subst.get(f"?param:{a.param}"), cand.subst.get(f"?param:{b.param}")
            if ca is None or cb is None or g.find(ca) != g.find(cb):
                continue
            if a.hi <= b.lo or b.hi <= a.lo:
                continue
            rep.fail("effects", f"{a.param}[{a.lo}:{a.hi}] and {b.param}[{b.lo}:{b.hi}] may alias")
    return rep


# ---------------------------------------------------------------------------
# insertion


def _isax_children(pg: ProgramGraph, sk: Skeleton, subst: Subst) -> tuple[int, ...]:
    g = pg.egraph
    kids = []
    for name, t in sk.params:
        cid = subst.get(f"?param:{name}")
        if cid is None:
            cid = g.add(ENode(f"const:0:{t}"))
        kids.append(g.find(cid))
    return tuple(kids)


def insert_isax(pg: ProgramGraph, sk: Skeleton, cand: MatchCandidate, report: Optional[CheckReport] = None) -> int:
    return insert_many(pg, sk, [cand], [report] if report is not None else None)[0]


def insert_many(
    pg: ProgramGraph, sk: Skeleton, cands: list[MatchCandidate], reports: Optional[list[CheckReport]] = None
) -> list[int]:
    """Insert non-overlapping accepted candidates; spans sharing a tuple node
    are replaced together in a single variant tuple."""
    g = pg.egraph
    if reports is not None and not all(r.ok for r in reports):
        raise ValueError("cannot insert a candidate that failed validation")
    out: list[int] = []
    if not sk.effects:
        pg.ctx.isax[sk.name] = IsaxSig([sk.result_type], sk.reads_memory)
        for cand in cands:
            kids = _isax_children(pg, sk, cand.subst)
            if sk.reads_memory:
                kids += (g.find(cand.subst["?epoch:0:0"]),)
            cid = g.add(ENode(f"isax:{sk.name}", kids))
            g.union(cid, cand.anchor)
            out.append(cid)
        g.rebuild()
        return out
    pg.ctx.isax.setdefault(sk.name, IsaxSig([], False))
    groups: dict[tuple[int, ENode], list[MatchCandidate]] = {}
    for cand in cands:
        groups.setdefault((g.find(cand.anchor), cand.tuple_node), []).append(cand)
    for (anchor, node), group in groups.items():
        group.sort(key=lambda c: c.position)
        roots = list(node.children)
        epochs = tuple_epochs(node)
        kids: list[int] = []
        eps: list[int] = []
        k = 0
        for cand in group:
            kids += roots[k : cand.position]
            eps += epochs[k : cand.position]
            cid = g.add(ENode(f"isax:{sk.name}", _isax_children(pg, sk, cand.subst)))
            out.append(cid)
            kids.append(cid)
            eps.append(epochs[cand.position])
            k = cand.position + cand.length
        kids += roots[k:]
        eps += epochs[k:]
        variant = g.add(ENode(tuple_symbol(eps), tuple(kids)))
        g.union(variant, anchor)
    g.rebuild()
    return out


def _depth(pg: ProgramGraph, scope: str) -> int:
    return len(pg.ctx.ancestors(scope))


def _covered(g: EGraph, cand: MatchCandidate) -> set[int]:
    roots = list(cand.tuple_node.children)
    seen: set[int] = set()
    stack = [g.find(roots[k]) for k in cand.span()]
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        for n in g.nodes(c):
            stack.extend(g.find(k) for k in n.children)
    return seen


def select_greedy(pg: ProgramGraph, accepted: list[MatchCandidate]) -> list[MatchCandidate]:
    """Outermost anchor first, then earliest position; overlapping ones are skipped."""
    g = pg.egraph
    order = sorted(accepted, key=lambda c: (_depth(pg, c.scope), c.position, g.find(c.anchor)))
    chosen: list[MatchCandidate] = []
    covered: set[int] = set()
    used: dict[int, tuple[ENode, list[range]]] = {}
    for c in order:
        a = g.find(c.anchor)
        if a in covered:
            continue
        if c.tuple_node is None:
            if a in used:
                continue
            used[a] = (None, [])
            chosen.append(c)
            continue
        prev = used.get(a)
        if prev is not None:
            node, spans = prev
            if node != c.tuple_node or any(set(s) & set(c.span()) for s in spans):
                continue
            spans.append(c.span())
        else:
            used[a] = (c.tuple_node, [c.span()])
        covered |= _covered(g, c)
        chosen.append(c)
    return chosen


@dataclass
class MatchResult:
    candidates: list[MatchCandidate]
    reports: list[CheckReport]
    inserted: list[MatchCandidate]
    tags: int

    def explain(self) -> str:
        return json.dumps(
            [
                {"anchor": c.anchor, "position": c.position, "report": r.to_json()}
                for c, r in zip(self.candidates, self.reports)
            ],
            indent=1,
        )


def match_and_insert(pg: ProgramGraph, sk: Skeleton) -> MatchResult:
    """Tag, match, validate and greedily insert one ISAX."""
    tags = tag_components(pg.egraph, sk)
    cands = skeleton_match(pg, sk)
    reports = [validate(pg, sk, c) for c in cands]
    accepted = [c for c, r in zip(cands, reports) if r.ok]
    chosen = select_greedy(pg, accepted)
    if chosen:
        insert_many(pg, sk, chosen)
    return MatchResult(cands, reports, chosen, tags)
