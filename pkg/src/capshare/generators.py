"""Named constructions and seeded random instance families."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import (CoalitionStructure, ExplicitCostTable, Instance, Resource, ResourceTable,
                   guard, iter_coalitions, to_mask)
from .domains import HotelOracle, PassOracle, Passenger, TaxiOracle, Traveler


@dataclass
class Generated:
    instance: Instance
    stable: Optional[CoalitionStructure] = None
    optimum: Optional[CoalitionStructure] = None
    expected_ratio: Optional[Fraction] = None
    extra: dict = field(default_factory=dict)

    def sidecar(self) -> dict:
        out: dict = {"family": self.instance.meta.get("family", ""),
                     "params": self.instance.meta.get("params", {})}
        if self.stable is not None:
            out["stable"] = self.stable.to_json()
        if self.optimum is not None:
            out["optimum"] = self.optimum.to_json()
        if self.expected_ratio is not None:
            out["expected_ratio"] = str(self.expected_ratio)
        out.update(self.extra)
        return out


# -- layered tight instance --------------------------------------------------
# Participants sit on a K x K! grid: layer s = 1..K, column t = 1..K!.
# Index is layer-major: (s - 1) * K! + (t - 1).

def grid_index(K: int, s: int, t: int) -> int:
    return (s - 1) * math.factorial(K) + (t - 1)


def grid_columns(K: int) -> list[list[int]]:
    F = math.factorial(K)
    return [[grid_index(K, s, t) for s in range(1, K + 1)] for t in range(1, F + 1)]


def grid_blocks(K: int) -> list[list[int]]:
    """Layer s is cut into consecutive runs of K - s + 1 columns."""
    F = math.factorial(K)
    out = []
    for s in range(1, K + 1):
        w = K - s + 1
        for k in range(1, F // w + 1):
            out.append([grid_index(K, s, t) for t in range((k - 1) * w + 1, k * w + 1)])
    return out


def _grid_meta(K: int, family: str) -> dict:
    return {"family": family, "params": {"k": K}}


def harmonic(K: int) -> Fraction:
    return sum((Fraction(1, s) for s in range(1, K + 1)), Fraction(0))


def gen_equal_tight(K: int) -> Generated:
    """Columns and layer runs each cost 1; anything else is priced piecewise.

    Equal split keeps every layer run together (stable) while the columns
    are optimal, so the ratio is the K-th harmonic number.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    guard(K <= 4, f"tight instance for K={K} has {K * math.factorial(K)} participants (limit K <= 4)")
    n = K * math.factorial(K)
    entries = {}
    for g in grid_columns(K) + grid_blocks(K):
        entries[to_mask(g)] = 1.0
    oracle = ExplicitCostTable(n, entries, completion="case3", k=K)
    inst = Instance(oracle, K, name=f"equal-tight-k{K}", meta=_grid_meta(K, "equal-tight"))
    stable = CoalitionStructure.from_coalitions(n, grid_blocks(K))
    opt = CoalitionStructure.from_coalitions(n, grid_columns(K))
    return Generated(inst, stable, opt, harmonic(K),
                     {"expected_optimum_cost": math.factorial(K),
                      "expected_stable_cost": str(harmonic(K) * math.factorial(K))})


def _column_resource(members: tuple[int, ...]) -> Resource:
    # the top member (lowest layer) alone uses half, the others share the other half
    if len(members) == 1:
        return Resource(1.0, (("solo", 1.0),), {members[0]: frozenset({"solo"})})
    lead, rest = members[0], members[1:]
    usage = {lead: frozenset({"lead"})}
    usage.update({i: frozenset({"rest"}) for i in rest})
    return Resource(1.0, (("lead", 0.5), ("rest", 0.5)), usage)


def _run_resource(members: tuple[int, ...]) -> Resource:
    shared = frozenset({"shared"})
    return Resource(1.0, (("shared", 1.0),), {i: shared for i in members})


def gen_usage_lower(K: int) -> Generated:
    """Same grid and costs as the tight instance, with explicit facility usage.

    In a column subset the member of lowest layer alone uses a facility worth
    1/2 and the rest share the other 1/2; a subset of a layer run shares a
    single facility worth 1.  Other coalitions combine their pieces.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    guard(K <= 4, f"usage lower-bound instance for K={K} is too large (limit K <= 4)")
    n = K * math.factorial(K)
    table: dict[int, Resource] = {}
    for col in grid_columns(K):
        for size in range(1, len(col) + 1):
            for sub in itertools.combinations(col, size):
                table[to_mask(sub)] = _column_resource(sub)
    for run in grid_blocks(K):
        for size in range(2, len(run) + 1):
            for sub in itertools.combinations(run, size):
                table[to_mask(sub)] = _run_resource(sub)
    oracle = ResourceTable(n, table, completion="case3", k=K)
    inst = Instance(oracle, K, name=f"usage-lower-k{K}", meta=_grid_meta(K, "usage-lower"))
    stable = CoalitionStructure.from_coalitions(n, grid_blocks(K))
    opt = CoalitionStructure.from_coalitions(n, grid_columns(K))
    return Generated(inst, stable, opt, harmonic(K),
                     {"expected_optimum_cost": math.factorial(K),
                      "chain_bound": str(Fraction(K + 1, 2))})


# -- odd taxi loop -----------------------------------------------------------
# Shared ride of neighbours k, k+1: k rides alone for A, both ride for B,
# k+1 rides alone for C.  Riding solo costs D.  D > B/2 + C > A + B/2 makes
# everyone prefer being the front passenger, i.e. sharing with k+1.

LOOP_FARES = {"A": 1.0, "B": 4.0, "C": 1.5, "D": 4.0}


def gen_taxi_cycle(s: int, geometric: bool = False) -> Generated:
    if s < 3 or s % 2 == 0:
        raise ValueError(f"the loop needs an odd number s >= 3 of passengers, got {s}"
                         + (" (an even loop pairs off into a stable structure)" if s % 2 == 0 else ""))
    meta = {"family": "taxi-cycle", "params": {"s": s, "geometric": geometric}}
    if geometric:
        inst = Instance(_taxi_loop_graph(s), 2, name=f"taxi-cycle-s{s}-geometric", meta=meta)
        return Generated(inst, extra={"experimental": True})
    inst = Instance(taxi_loop_tables(s), 2, name=f"taxi-cycle-s{s}", meta=meta)
    return Generated(inst, extra={"expected_cycle_length": s})


def taxi_loop_tables(s: int) -> ResourceTable:
    """Usage tables of the loop for any s >= 2 (even loops do admit stable pairings)."""
    A, B, C, D = (LOOP_FARES[x] for x in "ABCD")
    table: dict[int, Resource] = {}
    for i in range(s):
        table[1 << i] = Resource(D, (("solo", D),), {i: frozenset({"solo"})})
    for i, j in itertools.combinations(range(s), 2):
        if j == i + 1 or (i == 0 and j == s - 1):
            front, back = (i, j) if j == i + 1 else (j, i)
            table[(1 << i) | (1 << j)] = Resource(
                A + B + C, (("front", A), ("both", B), ("back", C)),
                {front: frozenset({"front", "both"}), back: frozenset({"both", "back"})})
        else:
            table[(1 << i) | (1 << j)] = Resource(
                2 * D, (("solo_a", D), ("solo_b", D)),
                {i: frozenset({"solo_a"}), j: frozenset({"solo_b"})})
    return ResourceTable(s, table, completion="none", k=2)


def _taxi_loop_graph(s: int) -> TaxiOracle:
    """Road loop realising the same fares: pickups 0..s-1, dropoffs s..2s-1."""
    A, B, C, D = (LOOP_FARES[x] for x in "ABCD")
    edges = []
    for k in range(s):
        nxt = (k + 1) % s
        edges.append((k, nxt, A, A))             # pickup k -> pickup k+1
        edges.append((nxt, s + k, B, B))         # pickup k+1 -> dropoff k
        edges.append((s + k, s + nxt, C, C))     # dropoff k -> dropoff k+1
        edges.append((k, s + k, D, D))           # direct ride
    horizon = 1000.0
    passengers = [Passenger(k, s + k, 0.0, horizon) for k in range(s)]
    return TaxiOracle(passengers, edges)


# -- random families ---------------------------------------------------------

FAMILIES = ("table", "hotel", "taxi", "pass")
GRID = 64   # random costs are multiples of 1/64, so sums stay exact


def gen_random(family: str, n: int, K: int, seed: int, **opts) -> Instance:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r} (choose from {', '.join(FAMILIES)})")
    if n < 1 or K < 1:
        raise ValueError("n and K must be >= 1")
    rng = random.Random(f"{family}:{n}:{K}:{seed}")
    make = {"table": _random_table, "hotel": _random_hotel, "taxi": _random_taxi, "pass": _random_pass}[family]
    oracle = make(rng, n, K, **opts)
    params = {"n": n, "k": K, "seed": seed}
    params.update(opts)
    return Instance(oracle, K, name=f"{family}-n{n}-k{K}-s{seed}", meta={"family": family, "params": params})


def _random_table(rng: random.Random, n: int, K: int, subadditive: bool = True,
                  low: float = 0.5, high: float = 2.0) -> ExplicitCostTable:
    """Costs drawn between the most expensive immediate subset and the sum of defaults.

    That keeps monotonicity by construction.  With ``subadditive=False`` the
    upper end is raised to 1.5x the sum so pooling can lose money.
    """
    guard(sum(math.comb(n, s) for s in range(1, min(K, n) + 1)) <= 2_000_000,
          f"random table with n={n}, K={K} is too large")
    snap = lambda x: math.floor(x * GRID) / GRID
    d = [snap(rng.uniform(low, high)) for _ in range(n)]
    cost: dict[int, float] = {}
    for g in iter_coalitions(n, min(K, n)):
        m = to_mask(g)
        if len(g) == 1:
            cost[m] = d[g[0]]
            continue
        lo = max(cost[m & ~(1 << i)] for i in g)
        hi = sum(d[i] for i in g) * (1.0 if subadditive else 1.5)
        hi = max(hi, lo)
        cost[m] = max(lo, snap(rng.uniform(lo, hi)))
    return ExplicitCostTable(n, cost, completion="none", k=min(K, n), validate=False)


def _random_hotel(rng: random.Random, n: int, K: int, days: int = 10, locations: int = 3,
                  common_day: bool = False, uniform_locations: bool = False) -> HotelOracle:
    base = [rng.randint(1, 4) for _ in range(days)]
    rates = {}
    for a in range(locations):
        rates[a] = list(map(float, base)) if uniform_locations else [float(rng.randint(1, 4)) for _ in range(days)]
    travelers = []
    mid = days // 2
    for _ in range(n):
        if common_day:
            t_in, t_out = rng.randint(0, mid), rng.randint(mid, days - 1)
        else:
            a, b = sorted((rng.randrange(days), rng.randrange(days)))
            t_in, t_out = a, min(b, a + 4)
        k = rng.randint(1, locations)
        areas = frozenset(rng.sample(range(locations), k))
        travelers.append(Traveler(t_in, t_out, areas))
    return HotelOracle(travelers, rates)


def _random_taxi(rng: random.Random, n: int, K: int, side: int = 3, common_origin: bool = False,
                 slack: int = 6) -> TaxiOracle:
    guard(min(K, n) <= 4, "random taxi rides are limited to K <= 4 passengers")
    edges = []
    node = lambda x, y: x * side + y
    for x in range(side):
        for y in range(side):
            for dx, dy in ((1, 0), (0, 1)):
                if x + dx < side and y + dy < side:
                    f1, f2 = rng.randint(1, 3), rng.randint(1, 3)
                    edges.append((node(x, y), node(x + dx, y + dy), float(f1), float(f1)))
                    edges.append((node(x + dx, y + dy), node(x, y), float(f2), float(f2)))
    probe = TaxiOracle([Passenger(0, 1, 0.0, 1e9)], edges)
    cells = side * side
    passengers = []
    hub = rng.randrange(cells)
    for _ in range(n):
        src = hub if common_origin else rng.randrange(cells)
        dst = rng.randrange(cells - 1)
        dst += dst >= src
        start = 0.0 if common_origin else float(rng.randint(0, 4))
        direct = probe.leg(src, dst)[1]
        passengers.append(Passenger(src, dst, start, start + direct + rng.randint(0, slack)))
    return TaxiOracle(passengers, edges)


def _random_pass(rng: random.Random, n: int, K: int, slots: Optional[int] = None,
                 extra_passes: int = 3, rate: float = 1.0) -> PassOracle:
    slots = slots or max(4, 2 * n)
    users = []
    for _ in range(n):
        length = rng.randint(1, 3)
        start = rng.randrange(slots - length + 1)
        users.append(list(range(start, start + length)))
    passes = [list(range(slots))]
    for _ in range(extra_passes):
        a, b = sorted(rng.sample(range(slots + 1), 2))
        passes.append(list(range(a, b)))
    return PassOracle(users, passes, rate)
