"""Hashconsed e-graph with congruence closure, e-matching, bounded equality
saturation and cost-based extraction.

Terms and patterns are nested tuples ``(symbol, child, ...)``.  In a pattern
a string beginning with ``?`` is a variable and a bare ``int`` stands for an
existing e-class.  Symbols may carry a payload after a colon
(``const:4:i32``, ``arg:3:0``, ``isax:gemv``); :func:`head` strips it.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, NamedTuple, Optional, Union

Pattern = Union[str, int, tuple]
Subst = dict[str, int]


class ENode(NamedTuple):
    symbol: str
    children: tuple[int, ...] = ()


def head(symbol: str) -> str:
    return symbol.split(":", 1)[0]


def is_var(p: Any) -> bool:
    return isinstance(p, str) and p.startswith("?")


def parse_const(symbol: str) -> Optional[tuple[int, str]]:
    """``const:V:T`` -> ``(V, T)``."""
    if not symbol.startswith("const:"):
        return None
    _, value, ty = symbol.split(":", 2)
    return int(value), ty


def const_symbol(value: int, ty: str) -> str:
    return f"const:{value}:{ty}"


@dataclass
class EClass:
    id: int
    nodes: list[ENode] = field(default_factory=list)
    parents: list[tuple[ENode, int]] = field(default_factory=list)
    tags: set = field(default_factory=set)


class NoWitness(Exception):
    pass


@dataclass
class RewriteRule:
    name: str
    lhs: Pattern
    rhs: Union[Pattern, Callable[["EGraph", Subst], Optional[Pattern]]]
    guard: Optional[Callable[["EGraph", Subst], bool]] = None

    def __post_init__(self) -> None:
        if not callable(self.rhs):
            missing = pattern_vars(self.rhs) - pattern_vars(self.lhs)
            if missing:
                raise ValueError(f"rule {self.name}: rhs variables {sorted(missing)} not bound by lhs")

    def instantiate(self, g: "EGraph", subst: Subst) -> Optional[int]:
        if self.guard is not None and not self.guard(g, subst):
            return None
        rhs = self.rhs(g, subst) if callable(self.rhs) else self.rhs
        if rhs is None:
            return None
        return g.instantiate(rhs, subst)


def pattern_vars(p: Pattern) -> set[str]:
    if is_var(p):
        return {p}
    if isinstance(p, tuple):
        out: set[str] = set()
        for c in p[1:]:
            out |= pattern_vars(c)
        return out
    return set()


@dataclass(frozen=True)
class SaturationLimits:
    max_iterations: int = 30
    max_nodes: int = 50_000
    match_cap: int = 1_000

    def __post_init__(self) -> None:
        if min(self.max_iterations, self.max_nodes, self.match_cap) <= 0:
            raise ValueError("saturation limits must be positive")


@dataclass
class SaturationReport:
    iterations: int = 0
    applied: dict[str, int] = field(default_factory=dict)
    hit_limit: bool = False
    stop_reason: str = "saturated"
    nodes: int = 0

    @property
    def total_applied(self) -> int:
        return sum(self.applied.values())


@dataclass
class CostModel:
    """Additive per-node costs.

    Leaves without payload semantics (parameters, block arguments, epochs,
    loop-bound literals) are free; every node with children costs at least
    ``default`` so that chosen witnesses are acyclic.
    """

    base: dict[str, float] = field(default_factory=dict)
    default: float = 1.0
    free_leaves: frozenset = frozenset({"param", "arg", "epoch", "lit", "static"})
    non_affine: frozenset = frozenset({"shli", "shri", "andi"})
    loop_penalty: float = 0.0
    isax_cost: float = 1.0

    def node_cost(self, node: ENode, in_loop: bool) -> float:
        h = head(node.symbol)
        if h == "isax":
            return self.isax_cost
        if not node.children and h in self.free_leaves:
            return 0.0
        cost = self.base.get(h, self.default)
        if in_loop and h in self.non_affine:
            cost += self.loop_penalty
        return cost


class EGraph:
    def __init__(self) -> None:
        self.parent: list[int] = []
        self.classes: dict[int, EClass] = {}
        self.hashcons: dict[ENode, int] = {}
        self.pending: list[int] = []
        self._index: Optional[dict[str, list[int]]] = None

    # -- union-find ------------------------------------------------------
    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def canonicalize(self, node: ENode) -> ENode:
        return ENode(node.symbol, tuple(self.find(c) for c in node.children))

    # -- construction ----------------------------------------------------
    def add(self, node: ENode) -> int:
        node = self.canonicalize(node)
        hit = self.hashcons.get(node)
        if hit is not None:
            return self.find(hit)
        cid = len(self.parent)
        self.parent.append(cid)
        self.classes[cid] = EClass(cid, [node])
        for child in node.children:
            self.classes[child].parents.append((node, cid))
        self.hashcons[node] = cid
        self._index = None
        return cid

    def add_term(self, term: tuple) -> int:
        if isinstance(term, int):
            return self.find(term)
        children = tuple(self.add_term(c) for c in term[1:])
        return self.add(ENode(term[0], children))

    def lookup(self, node: ENode) -> Optional[int]:
        hit = self.hashcons.get(self.canonicalize(node))
        return None if hit is None else self.find(hit)

    def instantiate(self, pattern: Pattern, subst: Subst) -> int:
        if is_var(pattern):
            return self.find(subst[pattern])
        if isinstance(pattern, int):
            return self.find(pattern)
        children = tuple(self.instantiate(c, subst) for c in pattern[1:])
        return self.add(ENode(pattern[0], children))

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        # the older id stays representative, which keeps numbering stable
        if rb < ra:
            ra, rb = rb, ra
        ca, cb = self.classes[ra], self.classes[rb]
        self.parent[rb] = ra
        ca.nodes.extend(cb.nodes)
        ca.parents.extend(cb.parents)
        ca.tags |= cb.tags
        del self.classes[rb]
        self.pending.append(ra)
        self._index = None
        return ra

    def rebuild(self) -> None:
        """Restore the hashcons and congruence invariants after unions."""
        while self.pending:
            todo = sorted({self.find(c) for c in self.pending})
            self.pending = []
            for cid in todo:
                self._repair(self.find(cid))
        for cls in self.classes.values():
            seen: dict[ENode, None] = {}
            for n in cls.nodes:
                seen.setdefault(self.canonicalize(n), None)
            cls.nodes = list(seen)
        self._index = None

    def _repair(self, cid: int) -> None:
        cls = self.classes[cid]
        old, cls.parents = cls.parents, []
        for node, _ in old:
            self.hashcons.pop(node, None)
        fresh: dict[ENode, int] = {}
        for node, pc in old:
            node = self.canonicalize(node)
            pc = self.find(pc)
            other = fresh.get(node)
            if other is not None and self.find(other) != pc:
                pc = self.union(other, pc)
            fresh[node] = self.find(pc)
            self.hashcons[node] = self.find(pc)
        self.classes[self.find(cid)].parents.extend(fresh.items())

    # -- queries ---------------------------------------------------------
    def class_ids(self) -> list[int]:
        return sorted(self.classes)

    def nodes(self, cid: int) -> list[ENode]:
        return self.classes[self.find(cid)].nodes

    @property
    def node_count(self) -> int:
        return sum(len(c.nodes) for c in self.classes.values())

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def const_of(self, cid: int) -> Optional[tuple[int, str]]:
        for n in self.nodes(cid):
            c = parse_const(n.symbol)
            if c is not None:
                return c
        return None

    def tag(self, cid: int, label: Any) -> bool:
        cls = self.classes[self.find(cid)]
        if label in cls.tags:
            return False
        cls.tags.add(label)
        return True

    def tags(self, cid: int) -> set:
        return self.classes[self.find(cid)].tags

    def _symbol_index(self) -> dict[str, list[int]]:
        if self._index is None:
            index: dict[str, set[int]] = {}
            for cid, cls in self.classes.items():
                for n in cls.nodes:
                    index.setdefault(n.symbol, set()).add(cid)
            self._index = {k: sorted(v) for k, v in index.items()}
        return self._index

    # -- e-matching ------------------------------------------------------
    def ematch(self, pattern: Pattern, root: Optional[int] = None) -> list[tuple[int, Subst]]:
        """All ``(class, substitution)`` pairs where ``pattern`` is represented."""
        if root is not None:
            candidates = [self.find(root)]
        elif isinstance(pattern, tuple):
            candidates = self._symbol_index().get(pattern[0], [])
        else:
            candidates = self.class_ids()
        out: list[tuple[int, Subst]] = []
        seen: set = set()
        for cid in candidates:
            for s in self._match(pattern, cid, {}):
                key = (cid, tuple(sorted(s.items())))
                if key not in seen:
                    seen.add(key)
                    out.append((cid, s))
        return out

    def _match(self, pat: Pattern, cid: int, subst: Subst) -> Iterator[Subst]:
        if is_var(pat):
            bound = subst.get(pat)
            if bound is None:
                yield {**subst, pat: cid}
            elif self.find(bound) == cid:
                yield subst
            return
        if isinstance(pat, int):
            if self.find(pat) == cid:
                yield subst
            return
        sym, kids = pat[0], pat[1:]
        for node in self.classes[cid].nodes:
            if node.symbol == sym and len(node.children) == len(kids):
                yield from self._match_children(kids, node.children, subst)

    def _match_children(self, kids, children, subst: Subst) -> Iterator[Subst]:
        if not kids:
            yield subst
            return
        for s in self._match(kids[0], self.find(children[0]), subst):
            yield from self._match_children(kids[1:], children[1:], s)

    # -- saturation -----------------------------------------------------
    def saturate(
        self, rules: list[RewriteRule], limits: SaturationLimits = SaturationLimits()
    ) -> SaturationReport:
        """Run ``rules`` round-robin until fixpoint or a limit trips."""
        self.rebuild()
        report = SaturationReport(applied={r.name: 0 for r in rules})
        for it in range(limits.max_iterations):
            report.iterations = it + 1
            matches = [(r, self.ematch(r.lhs)[: limits.match_cap]) for r in rules]
            changed = False
            for rule, found in matches:
                for cid, subst in found:
                    new = rule.instantiate(self, subst)
                    if new is None:
                        continue
                    if self.find(new) != self.find(cid):
                        self.union(cid, new)
                        report.applied[rule.name] += 1
                        changed = True
                    if self.node_count > limits.max_nodes:
                        break
                if self.node_count > limits.max_nodes:
                    break
            self.rebuild()
            if self.node_count > limits.max_nodes:
                report.hit_limit = True
                report.stop_reason = "node_limit"
                break
            if not changed:
                break
        else:
            report.hit_limit = True
            report.stop_reason = "iteration_limit"
        report.nodes = self.node_count
        return report

    # -- extraction -------------------------------------------------------
    def loop_classes(self) -> set[int]:
        """Classes reachable from the body of some ``for`` node."""
        start = [
            self.find(n.children[-1])
            for cls in self.classes.values()
            for n in cls.nodes
            if head(n.symbol) == "for" and n.children
        ]
        seen: set[int] = set()
        work = deque(start)
        while work:
            c = work.popleft()
            if c in seen:
                continue
            seen.add(c)
            for n in self.classes[c].nodes:
                work.extend(self.find(ch) for ch in n.children)
        return seen

    def best_nodes(self, cm: CostModel) -> dict[int, tuple[float, ENode]]:
        """Cheapest node per class, by a bottom-up cost fixpoint.

        Ties prefer ISAX nodes, then fewer children, then the smaller symbol,
        then the smaller canonical child ids.
        """
        in_loop = self.loop_classes() if cm.loop_penalty else set()
        best: dict[int, tuple] = {}
        ids = self.class_ids()
        changed = True
        while changed:
            changed = False
            for cid in ids:
                for node in self.classes[cid].nodes:
                    kids = tuple(self.find(c) for c in node.children)
                    if any(k not in best for k in kids):
                        continue
                    cost = cm.node_cost(node, cid in in_loop) + sum(best[k][0] for k in kids)
                    key = (cost, 0 if head(node.symbol) == "isax" else 1, len(kids), node.symbol, kids)
                    cur = best.get(cid)
                    if cur is None or key < cur[1]:
                        best[cid] = (cost, key, ENode(node.symbol, kids))
                        changed = True
        return {cid: (v[0], v[2]) for cid, v in best.items()}

    def extract(self, root: int, cm: CostModel) -> tuple:
        best = self.best_nodes(cm)
        root = self.find(root)
        if root not in best:
            raise NoWitness(f"class {root} has no finite witness")

        def build(cid: int) -> tuple:
            node = best[cid][1]
            return (node.symbol,) + tuple(build(c) for c in node.children)

        return build(root)

    def extract_cost(self, root: int, cm: CostModel) -> float:
        best = self.best_nodes(cm)
        root = self.find(root)
        if root not in best:
            raise NoWitness(f"class {root} has no finite witness")
        return best[root][0]

    # -- debug dumps ------------------------------------------------------
    def to_json(self, extra: Optional[dict] = None) -> str:
        data = {
            "classes": [
                {
                    "id": cid,
                    "nodes": [{"symbol": n.symbol, "children": list(n.children)} for n in cls.nodes],
                    "tags": sorted(repr(t) for t in cls.tags),
                }
                for cid, cls in sorted(self.classes.items())
            ],
            "union_find": list(self.parent),
        }
        if extra:
            data.update(extra)
        return json.dumps(data, indent=1)

    def to_dot(self) -> str:
        lines = ["digraph egraph {", "  compound=true;"]
        for cid, cls in sorted(self.classes.items()):
            lines.append(f"  subgraph cluster_{cid} {{ style=dotted; label=\"c{cid}\";")
            for k, n in enumerate(cls.nodes):
                label = n.symbol.replace('"', "'")
                lines.append(f'    n{cid}_{k} [label="{label}"];')
            lines.append("  }")
        for cid, cls in sorted(self.classes.items()):
            for k, n in enumerate(cls.nodes):
                for child in n.children:
                    c = self.find(child)
                    lines.append(f"  n{cid}_{k} -> n{c}_0 [lhead=cluster_{c}];")
        lines.append("}")
        return "\n".join(lines) + "\n"
