"""Loop-shape analysis and external (loop-level) rewriting."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from ..bridge import (
    ProgramGraph,
    encode_fragment,
    extract_loop_fragment,
    for_scope,
    union_with,
)
from ..egraph import CostModel, head
from ..ir.core import trip_count
from .loops import TransformError, apply_to_function

DEFAULT_BUDGET = 3
_NON_AFFINE = ("shli", "shri", "andi", "ori")


@dataclass(frozen=True)
class LoopShape:
    depth: int
    trips: tuple[Optional[int], ...]
    unroll_full: tuple[bool, ...] = ()
    histogram: dict = field(default_factory=dict, compare=False, hash=False)
    affine: bool = True

    @property
    def inner_trip(self) -> Optional[int]:
        return self.trips[-1] if self.trips else None


@dataclass(frozen=True)
class ExternalTransform:
    kind: str  # unroll | tile
    level: int
    factor: int
    target: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("unroll", "tile"):
            raise ValueError(f"unknown transform {self.kind}")
        if self.factor < 2:
            raise ValueError("transform factor must be at least 2")

    def __str__(self) -> str:
        return f"{self.kind.capitalize()}({self.factor})"


@dataclass
class TransformPlan:
    transforms: list[ExternalTransform]

    def __len__(self) -> int:
        return len(self.transforms)


def loop_nest(pg: ProgramGraph, loop_cid: int, best) -> list[int]:
    """Loop classes of the perfect-ish nest rooted at ``loop_cid``.

    Descends while a body holds exactly one loop root.
    """
    g = pg.egraph
    nest = [g.find(loop_cid)]
    while True:
        node = best[nest[-1]][1]
        tup = best[g.find(node.children[-1])][1]
        inner = [g.find(c) for c in tup.children if head(best[g.find(c)][1].symbol) == "for"]
        if len(inner) != 1:
            return nest
        nest.append(inner[0])


def shape_of(pg: ProgramGraph, loop_cid: int, best=None) -> LoopShape:
    g = pg.egraph
    if best is None:
        best = g.best_nodes(CostModel())
    nest = loop_nest(pg, loop_cid, best)
    trips: list[Optional[int]] = []
    full: list[bool] = []
    for cid in nest:
        node = best[cid][1]
        lits = []
        for c in node.children[:3]:
            sym = best[g.find(c)][1].symbol
            lits.append(int(sym.split(":")[1]) if head(sym) == "lit" else None)
        trips.append(trip_count(*lits) if None not in lits else None)
        full.append(pg.ctx.scopes[for_scope(node.symbol)].attrs.get("unroll") == "full")
    hist: Counter = Counter()
    affine = True
    stack, seen = [g.find(best[nest[-1]][1].children[-1])], set()
    while stack:
        cid = stack.pop()
        if cid in seen:
            continue
        seen.add(cid)
        node = best[cid][1]
        h = head(node.symbol)
        hist[h] += 1
        if h in ("load", "store"):
            idx = node.children[1] if h == "load" else node.children[2]
            if _mentions(g, best, idx, _NON_AFFINE):
                affine = False
        stack.extend(g.find(c) for c in node.children)
    return LoopShape(len(nest), tuple(trips), tuple(full), dict(hist), affine)


def _mentions(g, best, cid: int, symbols) -> bool:
    stack, seen = [g.find(cid)], set()
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        node = best[c][1]
        if head(node.symbol) in symbols:
            return True
        stack.extend(g.find(k) for k in node.children)
    return False


def plan_external(app: LoopShape, isax: LoopShape) -> Optional[TransformPlan]:
    """Derive loop restructurings that bring ``app`` into ``isax``'s shape.

    Returns ``None`` when no plan applies; an empty plan means the shapes
    already agree.
    """
    n, t = app.inner_trip, isax.inner_trip
    if n is None or t is None or t < 1:
        return None
    inner = app.depth - 1
    divides = n % t == 0
    if app.depth == isax.depth:
        if isax.unroll_full and isax.unroll_full[-1]:
            if t >= 2 and divides:
                return TransformPlan([ExternalTransform("unroll", inner, t)])
            return None
        if app.trips == isax.trips:
            return TransformPlan([])
        if divides and 2 <= t < n:
            return TransformPlan([ExternalTransform("tile", inner, t)])
        return None
    if app.depth + 1 == isax.depth:
        outer = isax.trips[-2]
        if divides and 2 <= t < n and outer == n // t:
            return TransformPlan([ExternalTransform("tile", inner, t)])
        return None
    if isax.depth == 1 and app.depth == 2:
        if divides and 2 <= t < n:
            return TransformPlan([ExternalTransform("tile", inner, t)])
    return None


def apply_external(pg: ProgramGraph, t: ExternalTransform, cm: Optional[CostModel] = None) -> int:
    """Apply ``t`` to the loop class ``t.target``; returns the merged class."""
    if t.target is None:
        raise TransformError("transform has no target loop class")
    frag = extract_loop_fragment(pg, t.target, cm)
    new_f = apply_to_function(frag.function, t.kind, t.factor)
    new = encode_fragment(pg, new_f, frag.freemap, frag.parent_scope, frag.epoch)
    return union_with(pg, new, frag.loop)
