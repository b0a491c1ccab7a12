"""Hotel-room, taxi-ride and pass sharing as resource-backed cost oracles."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .core import (EPS, OracleError, Resource, ResourceOracle, guard, iter_coalitions,
                   members_of, to_mask)


# -- hotel -------------------------------------------------------------------

@dataclass(frozen=True)
class Traveler:
    t_in: int          # first night, inclusive
    t_out: int         # last night, inclusive
    areas: frozenset

    def days(self) -> range:
        return range(self.t_in, self.t_out + 1)


class HotelOracle(ResourceOracle):
    """Room bookings spanning every member's stay at one commonly acceptable location.

    Facilities are the booked days.  A member uses its own days; days inside
    the span that nobody stays are charged to all members so that payments
    still add up to the booking cost.
    """

    def __init__(self, travelers: Sequence[Traveler], rates: Mapping[int, Sequence[float]]):
        super().__init__(len(travelers))
        self.travelers = tuple(travelers)
        self.rates = {int(a): tuple(float(x) for x in r) for a, r in sorted(rates.items())}
        if not self.rates:
            raise OracleError("hotel instance needs at least one location")
        horizon = min(len(r) for r in self.rates.values())
        for a, r in self.rates.items():
            if any(x <= 0 for x in r):
                raise OracleError(f"location {a} has a non-positive rate")
        for i, t in enumerate(self.travelers):
            if t.t_in > t.t_out:
                raise OracleError(f"traveler {i} leaves before arriving")
            if t.t_in < 0 or t.t_out >= horizon:
                raise OracleError(f"traveler {i} stays outside the rate horizon 0..{horizon - 1}")
            if not t.areas & set(self.rates):
                raise OracleError(f"traveler {i} accepts no location with rates")

    def location_independent(self) -> bool:
        return len(set(self.rates.values())) == 1

    def _compute_resource(self, mask: int) -> Optional[Resource]:
        group = [self.travelers[i] for i in members_of(mask)]
        areas = set(self.rates).intersection(*(t.areas for t in group))
        if not areas:
            return None
        lo = min(t.t_in for t in group)
        hi = max(t.t_out for t in group)
        loc = min(sorted(areas), key=lambda a: sum(self.rates[a][lo:hi + 1]))
        rate = self.rates[loc]
        occupied = set()
        for t in group:
            occupied.update(t.days())
        idle = frozenset(d for d in range(lo, hi + 1) if d not in occupied)
        usage = {i: frozenset(self.travelers[i].days()) | idle for i in members_of(mask)}
        facilities = tuple((d, rate[d]) for d in range(lo, hi + 1))
        return Resource(sum(rate[lo:hi + 1]), facilities, usage)

    def to_json(self) -> dict:
        return {
            "kind": "hotel",
            "travelers": [{"t_in": t.t_in, "t_out": t.t_out, "areas": sorted(t.areas)} for t in self.travelers],
            "rates": {str(a): list(r) for a, r in self.rates.items()},
        }


# -- taxi --------------------------------------------------------------------

@dataclass(frozen=True)
class Passenger:
    source: int
    dest: int
    earliest: float    # earliest pickup time
    latest: float      # latest dropoff time


class TaxiOracle(ResourceOracle):
    """Shared rides on a road graph with pickup/dropoff time windows.

    Consecutive stops are joined by fare-shortest paths (ties: shorter time).
    The cab leaves the first pickup at that passenger's earliest time, drives
    without detours and waits at a pickup if it arrives early.  Among rides of
    equal fare the one driving least with nobody aboard wins, then the one
    boarding passengers earliest.  A member uses the road segments driven
    while it is on board; segments driven empty are charged to everybody.
    """

    def __init__(self, passengers: Sequence[Passenger], edges: Sequence[tuple[int, int, float, float]]):
        super().__init__(len(passengers))
        self.passengers = tuple(passengers)
        self.edges = tuple((int(u), int(v), float(f), float(t)) for u, v, f, t in edges)
        nodes = sorted({u for u, *_ in self.edges} | {v for _, v, *_ in self.edges}
                       | {p.source for p in passengers} | {p.dest for p in passengers})
        self.nodes = nodes
        for u, v, f, t in self.edges:
            if f <= 0 or t <= 0:
                raise OracleError(f"edge {u}->{v} needs positive fare and time")
        self._paths()
        for i, p in enumerate(self.passengers):
            if p.source == p.dest:
                raise OracleError(f"passenger {i} has identical source and destination")
            if not p.earliest < p.latest:
                raise OracleError(f"passenger {i} has an empty time window")
            if self.best_resource(1 << i) is None:
                raise OracleError(f"passenger {i} cannot make the trip alone")

    def _paths(self) -> None:
        idx = {v: k for k, v in enumerate(self.nodes)}
        m = len(self.nodes)
        inf = (math.inf, math.inf)
        d = [[inf] * m for _ in range(m)]
        nxt: list[list[Optional[int]]] = [[None] * m for _ in range(m)]
        for k in range(m):
            d[k][k] = (0.0, 0.0)
            nxt[k][k] = k
        for u, v, f, t in self.edges:
            a, b = idx[u], idx[v]
            if (f, t) < d[a][b]:
                d[a][b] = (f, t)
                nxt[a][b] = b
        for k in range(m):
            dk = d[k]
            for a in range(m):
                dak = d[a][k]
                if dak[0] == math.inf:
                    continue
                da = d[a]
                for b in range(m):
                    cand = (dak[0] + dk[b][0], dak[1] + dk[b][1])
                    if cand < da[b]:
                        da[b] = cand
                        nxt[a][b] = nxt[a][k]
        self._idx, self._dist, self._next = idx, d, nxt
        # fare of the cheapest parallel edge, which is what shortest paths use
        self._hop: dict[tuple[int, int], float] = {}
        for u, v, f, t in sorted(self.edges, key=lambda e: (e[2], e[3])):
            self._hop.setdefault((u, v), f)

    def leg(self, u: int, v: int) -> tuple[float, float]:
        return self._dist[self._idx[u]][self._idx[v]]

    def path(self, u: int, v: int) -> list[int]:
        a, b = self._idx[u], self._idx[v]
        if self._next[a][b] is None:
            return []
        out = [a]
        while a != b:
            a = self._next[a][b]
            out.append(a)
        return [self.nodes[k] for k in out]

    def schedule(self, order: Sequence[tuple[int, int]]) -> Optional[tuple[float, float, list[float]]]:
        """Fare, fare driven empty, and stop arrival times of an ordering.

        None if a time window is missed.
        """
        first = self.passengers[order[0][0]]
        here, now, fare, empty = first.source, first.earliest, 0.0, 0.0
        aboard = 1
        times = [now]
        for who, kind in order[1:]:
            p = self.passengers[who]
            node = p.source if kind == 0 else p.dest
            f, t = self.leg(here, node)
            if f == math.inf:
                return None
            fare += f
            if not aboard:
                empty += f
            now += t
            if kind == 0:
                now = max(now, p.earliest)
                aboard += 1
            elif now > p.latest + 1e-12:
                return None
            else:
                aboard -= 1
            here = node
            times.append(now)
        return fare, empty, times

    def orderings(self, members: Sequence[int]):
        """Stop sequences with each pickup before the matching dropoff."""
        def rec(prefix, picked, dropped):
            if len(dropped) == len(members):
                yield tuple(prefix)
                return
            for i in members:
                if i not in picked:
                    prefix.append((i, 0))
                    yield from rec(prefix, picked | {i}, dropped)
                    prefix.pop()
                elif i not in dropped:
                    prefix.append((i, 1))
                    yield from rec(prefix, picked, dropped | {i})
                    prefix.pop()
        yield from rec([], frozenset(), frozenset())

    def best_order(self, mask: int, orders=None) -> Optional[tuple[float, float, tuple]]:
        members = members_of(mask)
        guard(len(members) <= 5, f"ride enumeration over {len(members)} passengers is too large")
        best = None
        for order in (orders if orders is not None else self.orderings(members)):
            s = self.schedule(order)
            if s is None:
                continue
            # equal fares: prefer less driving with nobody aboard, then
            # boarding passengers as early as possible
            key = (s[0], s[1], tuple(kind for _, kind in order), order)
            if best is None or key < best:
                best = key
        return best

    def _compute_resource(self, mask: int) -> Optional[Resource]:
        best = self.best_order(mask)
        if best is None:
            return None
        order = best[-1]
        members = members_of(mask)
        facilities = []
        usage: dict[int, set] = {i: set() for i in members}
        onboard = {order[0][0]}
        first = self.passengers[order[0][0]]
        here = first.source
        for leg_no, (who, kind) in enumerate(order[1:]):
            p = self.passengers[who]
            node = p.source if kind == 0 else p.dest
            nodes = self.path(here, node)
            riders = onboard if onboard else set(members)
            for pos, (u, v) in enumerate(zip(nodes, nodes[1:])):
                fid = (leg_no, pos, u, v)
                facilities.append((fid, self._hop[u, v]))
                for i in riders:
                    usage[i].add(fid)
            if kind == 0:
                onboard.add(who)
            else:
                onboard.discard(who)
            here = node
        total = sum(c for _, c in facilities)
        return Resource(total, tuple(facilities), {i: frozenset(u) for i, u in usage.items()})

    def to_json(self) -> dict:
        return {
            "kind": "taxi",
            "passengers": [{"source": p.source, "dest": p.dest, "earliest": p.earliest, "latest": p.latest}
                           for p in self.passengers],
            "edges": [{"u": u, "v": v, "fare": f, "time": t} for u, v, f, t in self.edges],
        }


# -- pass --------------------------------------------------------------------

class PassOracle(ResourceOracle):
    """Passes shared by users whose required timeslots do not overlap.

    The cheapest catalog pass covering every member's slots is used (ties:
    fewest slots, then lexicographically smallest).  Slots nobody needs are
    charged to all members.
    """

    def __init__(self, users: Sequence[Sequence[int]], passes: Sequence[Sequence[int]], rate: float = 1.0):
        super().__init__(len(users))
        self.users = tuple(frozenset(u) for u in users)
        self.passes = tuple(sorted({tuple(sorted(set(p))) for p in passes}, key=lambda p: (len(p), p)))
        self.rate = float(rate)
        if self.rate <= 0:
            raise OracleError("pass rate must be positive")
        for i, u in enumerate(self.users):
            if not u:
                raise OracleError(f"user {i} needs at least one timeslot")
            if not any(u <= set(p) for p in self.passes):
                raise OracleError(f"no pass covers user {i}")

    def _pass_for(self, mask: int) -> Optional[tuple[frozenset, tuple]]:
        need: set = set()
        for i in members_of(mask):
            if need & self.users[i]:
                return None
            need |= self.users[i]
        for p in self.passes:
            if need <= set(p):
                return frozenset(need), p
        return None

    def idle_cost(self, mask: int) -> float:
        hit = self._pass_for(mask)
        if hit is None:
            return math.inf
        need, p = hit
        return self.rate * (len(p) - len(need))

    def _compute_resource(self, mask: int) -> Optional[Resource]:
        hit = self._pass_for(mask)
        if hit is None:
            return None
        need, p = hit
        idle = frozenset(p) - need
        usage = {i: self.users[i] | idle for i in members_of(mask)}
        return Resource(self.rate * len(p), tuple((s, self.rate) for s in p), usage)

    def to_json(self) -> dict:
        return {"kind": "pass", "users": [sorted(u) for u in self.users],
                "passes": [list(p) for p in self.passes], "rate": self.rate}


def hotel_best_resource(G, oracle: HotelOracle) -> Optional[Resource]:
    return oracle.best_resource(to_mask(G))


def taxi_best_resource(G, oracle: TaxiOracle) -> Optional[Resource]:
    return oracle.best_resource(to_mask(G))


def pass_best_resource(G, oracle: PassOracle) -> Optional[Resource]:
    return oracle.best_resource(to_mask(G))


# -- monotone utilization ----------------------------------------------------

@dataclass
class UtilizationViolation:
    sub: tuple[int, ...]
    coalition: tuple[int, ...]
    alone: float
    inside: float

    def __str__(self) -> str:
        return (f"H={list(self.sub)} uses {self.alone} on its own but only "
                f"{self.inside} inside G={list(self.coalition)}")


@dataclass
class UtilizationReport:
    mode: str
    checked: int
    violations: list[UtilizationViolation]

    @property
    def ok(self) -> bool:
        return not self.violations


def attributable_cost(oracle: ResourceOracle, sub: int, coalition: int) -> float:
    """Cost of the facilities of r(coalition) used by at least one member of ``sub``."""
    r = oracle.best_resource(coalition)
    used = set()
    for i in members_of(sub):
        used |= r.usage[i]
    return sum(c for f, c in r.facilities if f in used)


def _check_pair(oracle, h, g, out):
    alone = attributable_cost(oracle, h, h)
    inside = attributable_cost(oracle, h, g)
    if alone > inside + EPS * max(1.0, alone):
        out.append(UtilizationViolation(members_of(h), members_of(g), alone, inside))


def check_monotone_utilization(oracle: ResourceOracle, k: int, mode: str = "exhaustive",
                               samples: int = 2000, seed: int = 0) -> UtilizationReport:
    """Every sub-coalition's attributable cost must not shrink inside a larger coalition."""
    out: list[UtilizationViolation] = []
    checked = 0
    k = min(k, oracle.n)
    if mode == "exhaustive":
        guard(oracle.n <= 10, f"exhaustive utilization check needs n <= 10, got {oracle.n}")
        groups = (to_mask(g) for g in iter_coalitions(oracle.n, k) if len(g) > 1)
    elif mode == "sampled":
        rng = random.Random(seed)
        groups = (to_mask(rng.sample(range(oracle.n), rng.randint(2, k))) for _ in range(samples) if k > 1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for g in groups:
        if oracle.best_resource(g) is None:
            continue
        ms = members_of(g)
        for size in range(1, len(ms)):
            for h in itertools.combinations(ms, size):
                _check_pair(oracle, to_mask(h), g, out)
                checked += 1
    return UtilizationReport(mode, checked, out)
