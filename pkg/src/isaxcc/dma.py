"""Burst/single-shot partitioning of bulk memory transfers.

A transfer of ``D`` bytes is covered by a multiset of burst transactions
(power-of-two sizes between the bus width and the cache line) and fixed-size
single-shot transactions.  Each transaction has an additive cycle cost, so the
minimum-latency cover is found exactly by a dynamic program over covered bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

LOAD = "load"
STORE = "store"


class DmaError(ValueError):
    pass


def _pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class LatencyModel:
    t_ss: int = 3
    burst_init_load: int = 15
    burst_init_store: int = 5
    per_word: int = 1
    bus_width_bytes: int = 8
    cacheline_bytes: int = 64
    direction: str = LOAD

    def __post_init__(self) -> None:
        nums = (self.t_ss, self.burst_init_load, self.burst_init_store, self.per_word)
        if any(not isinstance(v, int) or v <= 0 for v in nums):
            raise DmaError("latency parameters must be positive integers")
        if not (_pow2(self.bus_width_bytes) and _pow2(self.cacheline_bytes)):
            raise DmaError("bus width and cache line must be powers of two")
        if self.bus_width_bytes > self.cacheline_bytes:
            raise DmaError("bus width exceeds cache line")
        if self.direction not in (LOAD, STORE):
            raise DmaError(f"unknown direction {self.direction!r}")

    @property
    def burst_init(self) -> int:
        return self.burst_init_load if self.direction == LOAD else self.burst_init_store

    def t_bur(self, b: int) -> int:
        return self.burst_init + (b // self.bus_width_bytes) * self.per_word


def burst_sizes(m: LatencyModel) -> list[int]:
    """Admissible burst sizes in ascending order."""
    out, b = [], m.bus_width_bytes
    while b <= m.cacheline_bytes:
        out.append(b)
        b *= 2
    return out


@dataclass(frozen=True)
class TransferSpec:
    D: int
    d_ss: Optional[int] = None  # defaults to the bus width

    def __post_init__(self) -> None:
        if self.D < 0:
            raise DmaError("transfer size must be non-negative")
        if self.d_ss is not None and self.d_ss <= 0:
            raise DmaError("single-shot size must be positive")

    def single_shot(self, m: LatencyModel) -> int:
        return self.d_ss if self.d_ss is not None else m.bus_width_bytes


@dataclass
class Partition:
    x_bur: dict[int, int] = field(default_factory=dict)
    x_ss: int = 0
    total_cycles: int = 0

    @property
    def transfers(self) -> int:
        return sum(self.x_bur.values()) + self.x_ss

    def covered(self, d_ss: int) -> int:
        return sum(b * n for b, n in self.x_bur.items()) + d_ss * self.x_ss

    def to_json(self) -> dict:
        return {
            "x_bur": {str(b): n for b, n in sorted(self.x_bur.items())},
            "x_ss": self.x_ss,
            "transfers": self.transfers,
            "total_cycles": self.total_cycles,
        }


def latency(p: Partition, m: LatencyModel) -> int:
    sizes = set(burst_sizes(m))
    for b, n in p.x_bur.items():
        if b not in sizes:
            raise DmaError(f"burst size {b} not admissible")
        if not isinstance(n, int) or n < 0:
            raise DmaError(f"invalid burst count {n!r}")
    if not isinstance(p.x_ss, int) or p.x_ss < 0:
        raise DmaError(f"invalid single-shot count {p.x_ss!r}")
    return sum(m.t_bur(b) * n for b, n in p.x_bur.items()) + m.t_ss * p.x_ss


def rank(p: Partition, m: LatencyModel) -> tuple:
    """Total order used for ties: cycles, then transfer count, then larger bursts."""
    bursts = tuple(-p.x_bur.get(b, 0) for b in reversed(burst_sizes(m)))
    return (latency(p, m), p.transfers) + bursts


def _make(x_bur: dict[int, int], x_ss: int, m: LatencyModel) -> Partition:
    p = Partition({b: n for b, n in x_bur.items() if n}, x_ss)
    p.total_cycles = latency(p, m)
    return p


def optimize(s: TransferSpec, m: LatencyModel) -> Partition:
    """Minimum-latency partition, found by a DP over covered byte units."""
    d_ss = s.single_shot(m)
    sizes = burst_sizes(m)
    unit = math.gcd(d_ss, *sizes)
    need = -(-s.D // unit)
    nb = len(sizes)
    # Each option adds a vector (cycles, 1, -e_b...) to the rank; lexicographic
    # order is preserved under addition, so the recursion stays exact.
    options = []
    for k, b in enumerate(sizes):
        vec = [0] * nb
        vec[nb - 1 - k] = -1
        options.append((b // unit, (m.t_bur(b), 1, *vec), k))
    options.append((d_ss // unit, (m.t_ss, 1, *([0] * nb)), nb))

    best: list[tuple] = [(0, 0, *([0] * nb))] + [None] * need
    choice: list[int] = [-1] * (need + 1)
    for n in range(1, need + 1):
        for size, vec, k in options:
            prev = best[max(0, n - size)]
            cand = tuple(a + b for a, b in zip(prev, vec))
            if best[n] is None or cand < best[n]:
                best[n], choice[n] = cand, k
    x_bur = {b: 0 for b in sizes}
    x_ss = 0
    n = need
    while n > 0:
        k = choice[n]
        if k == nb:
            x_ss += 1
            n -= d_ss // unit
        else:
            x_bur[sizes[k]] += 1
            n -= sizes[k] // unit
    return _make(x_bur, x_ss, m)


DEFAULT_CAP = 4096


def brute_force(s: TransferSpec, m: LatencyModel, cap: int = DEFAULT_CAP) -> Partition:
    """Exhaustive search over bounded counts, pruned by an LP lower bound.

    Each burst count ranges over ``0..ceil(remaining/b)`` (any more would cover
    bytes already covered); single-shots fill what is left.  A branch is cut
    only when its cycle lower bound strictly exceeds the incumbent, so every
    optimal partition remains reachable and ties are resolved by ``rank``.
    """
    if s.D > cap:
        raise DmaError(f"transfer of {s.D} bytes exceeds brute-force cap {cap}")
    d_ss = s.single_shot(m)
    sizes = sorted(burst_sizes(m), reverse=True)
    rate_ss = m.t_ss / d_ss
    # cheapest cycles-per-byte among the options still available at depth k
    rates = [min([m.t_bur(b) / b for b in sizes[k:]] + [rate_ss]) for k in range(len(sizes) + 1)]
    best: list = [None, None]
    # two feasible covers as starting incumbents: all single-shots, and
    # greedy largest bursts with a single-shot tail
    seeds = [({}, -(-s.D // d_ss))]
    greedy, rem = {}, s.D
    for b in sizes:
        greedy[b], rem = rem // b, rem % b
    seeds.append((greedy, -(-rem // d_ss)))
    for counts, x_ss in seeds:
        p = _make(counts, x_ss, m)
        if best[0] is None or rank(p, m) < best[0]:
            best[0], best[1] = rank(p, m), p

    def visit(k: int, counts: dict[int, int], cycles: int, remaining: int) -> None:
        if best[0] is not None and cycles + remaining * rates[k] > best[0][0] + 1e-9:
            return
        if k == len(sizes):
            x_ss = -(-remaining // d_ss) if remaining > 0 else 0
            p = _make(counts, x_ss, m)
            r = rank(p, m)
            if best[0] is None or r < best[0]:
                best[0], best[1] = r, p
            return
        b = sizes[k]
        top = -(-remaining // b) if remaining > 0 else 0
        for n in range(top, -1, -1):
            counts[b] = n
            visit(k + 1, counts, cycles + n * m.t_bur(b), max(0, remaining - n * b))
        del counts[b]

    visit(0, {}, 0, s.D)
    return best[1]


def plan(D: int, m: Optional[LatencyModel] = None, d_ss: Optional[int] = None) -> dict:
    m = m or LatencyModel()
    p = optimize(TransferSpec(D, d_ss), m)
    return {"bytes": D, "direction": m.direction, **p.to_json()}


__all__ = [
    "DEFAULT_CAP",
    "DmaError",
    "LatencyModel",
    "Partition",
    "TransferSpec",
    "brute_force",
    "burst_sizes",
    "latency",
    "optimize",
    "plan",
    "rank",
]
