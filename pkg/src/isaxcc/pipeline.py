"""End-to-end offloading pipeline.

Steps: (1) encode, (2) internal rewriting, (3) external loop rewriting,
(4) semantic translation, (5) decomposition, (6) component tagging,
(7) skeleton matching and ISAX insertion, (8) extraction.
"""

from __future__ import annotations

import logging
import os
import random
from dataclasses import asdict, dataclass, field
from typing import Optional

from .bridge import FUNCTION_SCOPE, IsaxSig, ProgramGraph, encode, witness_extract
from .egraph import CostModel, RewriteRule, SaturationLimits, head
from .ir.core import Function
from .ir.interp import InterpError, MachineState, interpret
from .ir.types import PtrType, Type, byte_size, wrap
from .isax import Skeleton, TranslatedIsax, decompose, parse_isax, semantic_translate
from .matcher import match_and_insert
from .rewrite import (
    ExternalTransform,
    LoopShape,
    apply_external,
    internal_rules,
    loop_nest,
    plan_external,
    shape_of,
)
from .rewrite.loops import TransformError

log = logging.getLogger(__name__)

REGION_BYTES = 1024
REGION_STRIDE = 1 << 16


@dataclass
class PipelineConfig:
    limits: SaturationLimits = field(default_factory=SaturationLimits)
    external_budget: int = 3
    cost: CostModel = field(default_factory=lambda: CostModel(loop_penalty=2.0))
    extra_rules: list[RewriteRule] = field(default_factory=list)
    dump_dir: Optional[str] = None
    dump_format: str = "json"
    check: bool = True
    seed: int = 0
    trials: int = 100

    def __post_init__(self) -> None:
        if self.external_budget <= 0 or self.trials <= 0:
            raise ValueError("budgets and trial counts must be positive")


@dataclass
class IsaxOutcome:
    name: str
    plan: list[str] = field(default_factory=list)
    candidates: int = 0
    accepted: int = 0
    inserted: int = 0
    tags: int = 0
    explain: list = field(default_factory=list)


@dataclass
class PipelineReport:
    initial_enodes: int = 0
    saturated_enodes: int = 0
    internal_rewrites: int = 0
    internal_iterations: int = 0
    external_rewrites: int = 0
    saturation_hit_limit: bool = False
    budget_exhausted: bool = False
    candidates: int = 0
    accepted: int = 0
    isax_calls: int = 0
    differential: str = "skipped"
    differential_detail: str = ""
    seed: int = 0
    trials: int = 0
    isaxes: list[IsaxOutcome] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LoadedIsax:
    translated: TranslatedIsax
    skeleton: Skeleton

    @property
    def name(self) -> str:
        return self.translated.name


def load_isax_text(text: str) -> LoadedIsax:
    t = semantic_translate(parse_isax(text))
    return LoadedIsax(t, decompose(t))


def isax_shape(t: TranslatedIsax) -> Optional[LoopShape]:
    pg = encode(t.body)
    g = pg.egraph
    best = g.best_nodes(CostModel())
    for c in best[g.find(pg.root)][1].children:
        if head(best[g.find(c)][1].symbol) == "for":
            return shape_of(pg, c, best)
    return None


def _reachable_loops(pg: ProgramGraph, best) -> list[int]:
    g = pg.egraph
    out: list[int] = []
    stack, seen = [g.find(pg.root)], set()
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        node = best[c][1]
        if head(node.symbol) == "for":
            out.append(c)
        stack.extend(g.find(k) for k in reversed(node.children))
    return sorted(out)


def plan_for(pg: ProgramGraph, shape: LoopShape, cm: CostModel) -> list[ExternalTransform]:
    """Concrete transforms (with target classes) bringing app nests to ``shape``."""
    g = pg.egraph
    best = g.best_nodes(cm)
    out: list[ExternalTransform] = []
    for loop in _reachable_loops(pg, best):
        plan = plan_external(shape_of(pg, loop, best), shape)
        if not plan:
            continue
        nest = loop_nest(pg, loop, best)
        for t in plan.transforms:
            target = nest[t.level]
            tr = ExternalTransform(t.kind, t.level, t.factor, target)
            if tr not in out:
                out.append(tr)
    return out


class Pipeline:
    def __init__(self, cfg: Optional[PipelineConfig] = None):
        self.cfg = cfg or PipelineConfig()
        self.rules = internal_rules() + list(self.cfg.extra_rules)

    def _dump(self, pg: ProgramGraph, step: str) -> None:
        d = self.cfg.dump_dir
        if not d:
            return
        os.makedirs(d, exist_ok=True)
        fmts = ("json", "dot") if self.cfg.dump_format == "both" else (self.cfg.dump_format,)
        for fmt in fmts:
            text = pg.to_json() if fmt == "json" else pg.egraph.to_dot()
            with open(os.path.join(d, f"{step}.{fmt}"), "w") as fh:
                fh.write(text)

    def saturate(self, pg: ProgramGraph, report: PipelineReport) -> None:
        rep = pg.egraph.saturate(self.rules, self.cfg.limits)
        report.internal_rewrites += rep.total_applied
        report.internal_iterations += rep.iterations
        report.saturation_hit_limit |= rep.stop_reason == "node_limit"

    def run(self, app: Function, isaxes: list[LoadedIsax]) -> tuple[Function, PipelineReport]:
        cfg = self.cfg
        report = PipelineReport(seed=cfg.seed, trials=cfg.trials)
        sigs = {
            i.name: IsaxSig([i.translated.result_type] if i.translated.result_type else [], i.translated.reads_memory)
            for i in isaxes
        }
        pg = encode(app, sigs)  # step 1
        report.initial_enodes = pg.egraph.node_count
        self._dump(pg, "1-encode")
        self.saturate(pg, report)  # step 2
        self._dump(pg, "2-internal")

        budget = cfg.external_budget
        done: set[tuple] = set()
        for isax in isaxes:  # step 3, driven by each ISAX's loop shape
            outcome = IsaxOutcome(isax.name)
            report.isaxes.append(outcome)
            shape = isax_shape(isax.translated)
            if shape is None:
                continue
            for tr in plan_for(pg, shape, cfg.cost):
                key = (tr.kind, tr.factor, pg.egraph.find(tr.target))
                if key in done:
                    # another ISAX already asked for this variant of this loop
                    outcome.plan.append(str(tr))
                    continue
                if report.external_rewrites >= budget:
                    report.budget_exhausted = True
                    break
                try:
                    apply_external(pg, tr, cfg.cost)
                except TransformError as e:
                    log.info("external rewrite %s skipped: %s", tr, e)
                    continue
                done.add(key)
                report.external_rewrites += 1
                outcome.plan.append(str(tr))
                self.saturate(pg, report)
        self._dump(pg, "3-external")

        if not report.budget_exhausted and not report.saturation_hit_limit:
            for isax, outcome in zip(isaxes, report.isaxes):  # steps 6-7
                res = match_and_insert(pg, isax.skeleton)
                outcome.tags = res.tags
                outcome.candidates = len(res.candidates)
                outcome.accepted = sum(r.ok for r in res.reports)
                outcome.inserted = len(res.inserted)
                outcome.explain = [
                    {"anchor": c.anchor, "position": c.position, **r.to_json()}
                    for c, r in zip(res.candidates, res.reports)
                ]
                report.candidates += outcome.candidates
                report.accepted += outcome.accepted
        self._dump(pg, "7-matched")

        report.saturated_enodes = pg.egraph.node_count
        if any(o.inserted for o in report.isaxes):
            out = witness_extract(pg, cfg.cost)  # step 8
        else:
            out = app  # nothing offloaded: keep the input program verbatim
        report.isax_calls = sum(op.opcode == "isax.call" for op in out.walk())
        if cfg.check:
            handlers = {i.name: i.translated.handler() for i in isaxes}
            ok, detail = differential_check(app, out, handlers, cfg.seed, cfg.trials)
            report.differential = "pass" if ok else "fail"
            report.differential_detail = detail
        log.info("pipeline seed=%d calls=%d", cfg.seed, report.isax_calls)
        return out, report


def compile(app: Function, isaxes: list[LoadedIsax], cfg: Optional[PipelineConfig] = None):
    return Pipeline(cfg).run(app, isaxes)


# ---------------------------------------------------------------------------
# differential checking


def random_inputs(f: Function, rng: random.Random) -> tuple[list[int], MachineState]:
    """Arguments and memory for ``f``: each pointer gets its own filled region."""
    state = MachineState()
    args: list[int] = []
    for k, (_, t) in enumerate(f.params):
        if isinstance(t, PtrType):
            base = REGION_STRIDE * (k + 1)
            data = rng.randbytes(REGION_BYTES)
            for off, b in enumerate(data):
                state.memory[base + off] = b
            args.append(base)
        else:
            args.append(_random_scalar(t, rng))
    return args, state


def _random_scalar(t: Type, rng: random.Random) -> int:
    if str(t) == "index":
        return rng.randrange(0, 16)
    return wrap(rng.getrandbits(8 * byte_size(t)), t)


def differential_check(
    before: Function, after: Function, handlers: dict, seed: int, trials: int
) -> tuple[bool, str]:
    rng = random.Random(seed)
    for trial in range(trials):
        args, state = random_inputs(before, rng)
        try:
            r1, s1 = interpret(before, args, state, handlers)
            e1 = None
        except InterpError as e:
            e1 = type(e).__name__
        try:
            r2, s2 = interpret(after, args, state, handlers)
            e2 = None
        except InterpError as e:
            e2 = type(e).__name__
        if e1 or e2:
            if e1 != e2:
                return False, f"trial {trial}: error mismatch ({e1} vs {e2})"
            continue
        if r1 != r2:
            return False, f"trial {trial}: results differ ({r1} vs {r2})"
        if s1.memory != s2.memory:
            diff = sorted(a for a in set(s1.memory) | set(s2.memory) if s1.memory.get(a) != s2.memory.get(a))
            return False, f"trial {trial}: memory differs at {len(diff)} byte(s), first {diff[0]:#x}"
    return True, f"{trials} trials, seed {seed}"


__all__ = [
    "FUNCTION_SCOPE",
    "LoadedIsax",
    "Pipeline",
    "PipelineConfig",
    "PipelineReport",
    "compile",
    "differential_check",
    "load_isax_text",
    "random_inputs",
]
