"""Blocking coalitions, stable structures and preference cycles."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import networkx as nx

from .core import (EPS, CoalitionStructure, CostOracle, Instance, ResourceLimitError,
                   guard, iter_coalitions, lowest, members_of, popcount, structure_cost,
                   to_mask)
from .mechanisms import Mechanism, PaymentTable, nash_nonnegative


class UnsupportedMechanism(ValueError):
    pass


def _table(instance: Instance, mechanism, table: Optional[PaymentTable]) -> PaymentTable:
    if table is not None:
        return table
    return PaymentTable(instance.oracle, mechanism)


def current_payments(P: CoalitionStructure, table: PaymentTable) -> list[float]:
    pay = table.structure_payments(P.masks)
    return [pay[i] for i in range(P.n)]


def _blocks(mask: int, cur: Sequence[float], table: PaymentTable) -> bool:
    p = table.get(mask)
    if p is None:
        return False
    return all(p[i] < cur[i] - EPS for i in p)


def find_blocking_coalition(P: CoalitionStructure, mechanism, instance: Instance,
                            table: Optional[PaymentTable] = None) -> Optional[tuple[int, ...]]:
    """Smallest, then lexicographically first, coalition whose members all pay less.

    Search is exhaustive over coalitions of size <= K.  Since every mechanism
    is budget balanced, a coalition can only block when its cost is below the
    members' current total, and costs only grow as members are added; partial
    coalitions that cannot meet that bound are skipped.
    """
    instance.validate_structure(P)
    table = _table(instance, mechanism, table)
    oracle = instance.oracle
    n, K = P.n, min(instance.k, P.n)
    cur = current_payments(P, table)

    # top[j][r]: sum of the r largest current payments among participants >= j
    top = []
    for j in range(n + 1):
        tail = sorted(cur[j:], reverse=True)[:K]
        top.append([0.0] + list(itertools.accumulate(tail)))

    def search(start: int, mask: int, c: float, paid: float, left: int) -> Optional[int]:
        if left == 0:
            return mask if _blocks(mask, cur, table) else None
        for j in range(start, n - left + 1):
            if c >= paid + cur[j] + top[j + 1][left - 1] - EPS / 2:
                continue
            nm = mask | (1 << j)
            nc = oracle.cost(nm)
            if not math.isfinite(nc) or nc >= paid + cur[j] + top[j + 1][left - 1] - EPS / 2:
                continue
            hit = search(j + 1, nm, nc, paid + cur[j], left - 1)
            if hit is not None:
                return hit
        return None

    for size in range(1, K + 1):
        hit = search(0, 0, 0.0, 0.0, size)
        if hit is not None:
            return members_of(hit)
    return None


def is_stable(P: CoalitionStructure, mechanism, instance: Instance,
              table: Optional[PaymentTable] = None) -> bool:
    return find_blocking_coalition(P, mechanism, instance, table) is None


# -- enumeration -------------------------------------------------------------

def enumerate_stable_structures(instance: Instance, mechanism,
                                table: Optional[PaymentTable] = None,
                                limit: Optional[int] = None) -> list[CoalitionStructure]:
    """All stable structures, by depth-first search over partitions.

    Blocks are added around the lowest unassigned participant.  A candidate
    coalition whose members are all placed is checked for blocking as soon
    as its last member is placed, which prunes most of the partition tree.
    """
    n, K = instance.n, instance.k
    guard(n <= 12, f"stable-structure enumeration needs n <= 12, got {n}")
    table = _table(instance, mechanism, table)
    oracle = instance.oracle

    feasible = [to_mask(g) for g in iter_coalitions(n, min(K, n))
                if math.isfinite(oracle.cost(to_mask(g)))]
    pays = {m: table.get(m) for m in feasible}
    by_low: dict[int, list[int]] = {i: [] for i in range(n)}
    touching: dict[int, list[int]] = {i: [] for i in range(n)}
    for m in feasible:
        by_low[lowest(m)].append(m)
        for i in members_of(m):
            touching[i].append(m)

    full = (1 << n) - 1
    cur = [0.0] * n
    chosen: list[int] = []
    found: list[CoalitionStructure] = []

    def blocked(assigned: int, block: int) -> bool:
        seen = set()
        for i in members_of(block):
            for cand in touching[i]:
                if cand in seen or cand & ~assigned:
                    continue
                seen.add(cand)
                p = pays[cand]
                if all(p[j] < cur[j] - EPS for j in p):
                    return True
        return False

    def dfs(assigned: int) -> bool:
        if assigned == full:
            found.append(CoalitionStructure(n, tuple(chosen)))
            return limit is not None and len(found) >= limit
        u = lowest(full & ~assigned)
        for block in by_low[u]:
            if block & assigned:
                continue
            for i, p in pays[block].items():
                cur[i] = p
            na = assigned | block
            if blocked(na, block):
                continue
            chosen.append(block)
            stop = dfs(na)
            chosen.pop()
            if stop:
                return True
        return False

    dfs(0)
    return found


# -- greedy sink construction ------------------------------------------------

def _sink_score(mechanism: Mechanism, instance: Instance):
    """Per-coalition potential whose minimizer is a sink of the preference graph.

    Each member's utility is a decreasing function of the score (or bounded by
    it), so the remaining coalition of lowest score is preferred by none of its
    members to any other remaining coalition.
    """
    oracle = instance.oracle

    def defaults(m):
        return [oracle.default_cost(i) for i in members_of(m)]

    if mechanism is Mechanism.EQUAL:
        # utility c_i - c(G)/|G|
        return lambda m: oracle.cost(m) / popcount(m)
    if mechanism is Mechanism.PROPORTIONAL:
        # utility c_i * (1 - c(G)/sum c)
        return lambda m: oracle.cost(m) / sum(defaults(m))
    if mechanism in (Mechanism.EGALITARIAN, Mechanism.NASH_UNCONSTRAINED):
        # common utility (sum c - c(G))/|G|
        return lambda m: -(sum(defaults(m)) - oracle.cost(m)) / popcount(m)
    if mechanism is Mechanism.NASH:
        # payers share (sum over payers c - c(G))/|payers|; free riders get c_i,
        # which never exceeds the payers' utility
        def nash_score(m):
            d = defaults(m)
            p = nash_nonnegative(d, oracle.cost(m))
            payers = [x for x, q in zip(d, p) if q > 0]
            return -(sum(payers) - oracle.cost(m)) / len(payers)
        return nash_score
    if mechanism is Mechanism.USAGE:
        from .domains import HotelOracle, PassOracle
        if isinstance(oracle, PassOracle):
            # payment = own slots * rate + idle cost / |G|
            return lambda m: oracle.idle_cost(m) / popcount(m)
        if isinstance(oracle, HotelOracle) and instance.k <= 2 and oracle.location_independent():
            # pair members pay own nights minus half the shared ones, so both
            # get the same utility and the egalitarian potential applies
            return lambda m: -(sum(defaults(m)) - oracle.cost(m)) / popcount(m)
    raise UnsupportedMechanism(
        f"no sink construction for {mechanism.value} on {type(oracle).__name__} with K={instance.k}")


def greedy_stable(instance: Instance, mechanism, check: bool = True) -> CoalitionStructure:
    """Build a stable structure by repeatedly taking the best-scoring remaining coalition.

    Ties go to smaller coalitions, then lexicographic order.  Since removing a
    coalition never improves another's score, one pass over the sorted
    candidates is the same as re-selecting after each removal.
    """
    mechanism = Mechanism.parse(mechanism)
    score = _sink_score(mechanism, instance)
    oracle = instance.oracle
    n = instance.n
    cands = []
    for g in iter_coalitions(n, min(instance.k, n)):
        m = to_mask(g)
        if math.isfinite(oracle.cost(m)):
            cands.append((score(m), len(g), g, m))
    cands.sort(key=lambda t: (t[0], t[1], t[2]))
    taken, masks = 0, []
    # scores within rounding noise count as ties
    i = 0
    while taken != (1 << n) - 1:
        s = cands[i][0]
        j = i
        while j < len(cands) and cands[j][0] <= s + 1e-12 * max(1.0, abs(s)):
            j += 1
        group = sorted(cands[i:j], key=lambda t: (t[1], t[2]))
        for _, _, _, m in group:
            if not m & taken:
                masks.append(m)
                taken |= m
        i = j
    P = CoalitionStructure(n, tuple(masks))
    if check:
        witness = find_blocking_coalition(P, mechanism, instance)
        assert witness is None, f"greedy structure {P} blocked by {witness}"
    return P


# -- dynamics and cycles -----------------------------------------------------

@dataclass
class StabilityReport:
    status: str                       # Stable | Blocked | Cycle | IterationCap
    structure: CoalitionStructure
    steps: int = 0
    witness: Optional[tuple[int, ...]] = None
    cycle: Optional[list[tuple[int, tuple[int, ...]]]] = None
    visited: int = field(default=0, repr=False)

    def to_json(self) -> dict:
        out = {"status": self.status, "structure": self.structure.to_json(), "steps": self.steps}
        if self.witness is not None:
            out["witness"] = list(self.witness)
        if self.cycle is not None:
            out["cycle"] = [{"participant": i, "coalition": list(g)} for i, g in self.cycle]
        return out


def check_structure(P: CoalitionStructure, mechanism, instance: Instance) -> StabilityReport:
    w = find_blocking_coalition(P, mechanism, instance)
    if w is None:
        return StabilityReport("Stable", P)
    return StabilityReport("Blocked", P, witness=w)


def improvement_dynamics(P0: CoalitionStructure, mechanism, instance: Instance,
                         max_steps: int = 1000, find_cycle: bool = True) -> StabilityReport:
    """Let blocking coalitions deviate until nothing blocks or a state repeats.

    The deviators form the witness coalition; whoever is left behind stays
    together.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    table = PaymentTable(instance.oracle, mechanism)
    P = P0
    seen = {P.key()}
    steps = 0
    while True:
        w = find_blocking_coalition(P, mechanism, instance, table)
        if w is None:
            return StabilityReport("Stable", P, steps=steps, visited=len(seen))
        if steps >= max_steps:
            return StabilityReport("IterationCap", P, steps=steps, witness=w, visited=len(seen))
        wm = to_mask(w)
        masks = [m & ~wm for m in P.masks if m & ~wm] + [wm]
        P = CoalitionStructure(P.n, tuple(masks))
        steps += 1
        if P.key() in seen:
            cyc = None
            if find_cycle:
                try:
                    cyc = detect_cyclic_preference(instance, mechanism, table)
                except ResourceLimitError:
                    cyc = None
            return StabilityReport("Cycle", P, steps=steps, cycle=cyc, visited=len(seen))
        seen.add(P.key())


def preference_graph(instance: Instance, mechanism, table: Optional[PaymentTable] = None) -> nx.DiGraph:
    """Edge G1 -> G2 when some shared member is strictly better off in G2."""
    table = _table(instance, mechanism, table)
    n, K = instance.n, min(instance.k, instance.n)
    nodes = [to_mask(g) for g in iter_coalitions(n, K)
             if math.isfinite(instance.oracle.cost(to_mask(g)))]
    per: dict[int, list[tuple[float, int]]] = {i: [] for i in range(n)}
    for m in nodes:
        for i, p in table.get(m).items():
            per[i].append((instance.oracle.default_cost(i) - p, m))
    work = sum(len(v) ** 2 for v in per.values())
    guard(work <= 20_000_000, f"preference graph too large ({work} member-pair checks)")
    Gr = nx.DiGraph()
    Gr.add_nodes_from(nodes)
    for i in range(n):
        ranked = sorted(per[i])
        for a, (ua, ma) in enumerate(ranked):
            for ub, mb in ranked[a + 1:]:
                if ua < ub - EPS and not Gr.has_edge(ma, mb):
                    Gr.add_edge(ma, mb, who=i)
    return Gr


def detect_cyclic_preference(instance: Instance, mechanism,
                             table: Optional[PaymentTable] = None
                             ) -> Optional[list[tuple[int, tuple[int, ...]]]]:
    """A preference cycle as (participant, coalition) pairs, or None.

    In the returned sequence participant k belongs to coalitions k and k+1
    (cyclically) and strictly prefers coalition k.
    """
    table = _table(instance, mechanism, table)
    Gr = preference_graph(instance, mechanism, table)
    cycle = None
    # shortest cycle through the first node that lies on any cycle
    for comp in sorted(nx.strongly_connected_components(Gr), key=lambda c: min(c)):
        if len(comp) > 1:
            sub = Gr.subgraph(comp)
            start = min(comp)
            best = None
            for succ in sorted(sub.successors(start)):
                path = nx.shortest_path(sub, succ, start)
                if best is None or len(path) < len(best):
                    best = path
            cycle = [start] + best[:-1]
            break
    if cycle is None:
        return None
    # cycle is N_0 -> N_1 -> ... -> N_{s-1} -> N_0; reverse it so each listed
    # participant prefers the coalition it is listed with over the next one
    rev = cycle[::-1]
    s = len(rev)
    out = []
    for k in range(s):
        a, b = rev[k], rev[(k + 1) % s]
        out.append((Gr.edges[b, a]["who"], members_of(a)))
    return out


def is_cyclic_preference(seq: Sequence[tuple[int, Sequence[int]]], instance: Instance, mechanism) -> bool:
    table = PaymentTable(instance.oracle, mechanism)
    s = len(seq)
    if s < 2:
        return False
    for k in range(s):
        i, g = seq[k]
        nxt = seq[(k + 1) % s][1]
        a, b = to_mask(g), to_mask(nxt)
        if not (a >> i & 1 and b >> i & 1):
            return False
        if table.get(a) is None or table.get(b) is None:
            return False
        if not table.utility(i, a) > table.utility(i, b) + EPS:
            return False
    return True


# -- refinement and chains ---------------------------------------------------

def nash_positive_refinement(P: CoalitionStructure, oracle: CostOracle) -> CoalitionStructure:
    """Split each coalition into prefixes (by descending default cost) where everyone pays.

    A prefix keeps growing while its newest member would still pay a positive
    egalitarian share; the first member that would not starts a new prefix.
    """
    masks = []
    for m in P.masks:
        order = sorted(members_of(m), key=lambda i: (-oracle.default_cost(i), i))
        piece: list[int] = []
        for i in order:
            trial = piece + [i]
            c = oracle.cost(to_mask(trial))
            total = sum(oracle.default_cost(j) for j in trial)
            if piece and not oracle.default_cost(i) - (total - c) / len(trial) > 0:
                masks.append(to_mask(piece))
                piece = [i]
            else:
                piece = trial
        masks.append(to_mask(piece))
    return CoalitionStructure(P.n, tuple(masks))


@dataclass
class ChainDiagnostic:
    chain: tuple[int, ...]
    ratio: float
    examined: int

    def to_json(self) -> dict:
        return {"chain": list(self.chain), "ratio": self.ratio, "examined": self.examined}


def chain_ratio(instance: Instance, mechanism, mode: str = "all", samples: int = 10_000,
                seed: int = 0, table: Optional[PaymentTable] = None) -> ChainDiagnostic:
    """Largest ratio of payments along a nested chain to the cost of its top coalition.

    A chain i_1..i_K yields H_s = {i_s..i_K}; the ratio is
    sum_s p_{i_s}(H_s) / c(H_1).
    """
    table = _table(instance, mechanism, table)
    n = instance.n
    K = min(instance.k, n)
    oracle = instance.oracle
    if mode == "all":
        guard(math.perm(n, K) <= 10_000_000, f"{math.perm(n, K)} ordered chains exceed the 1e7 guard")
        chains = itertools.permutations(range(n), K)
    elif mode == "sample":
        rng = random.Random(seed)
        chains = (tuple(rng.sample(range(n), K)) for _ in range(samples))
    else:
        raise ValueError(f"unknown chain mode {mode!r}")
    best: Optional[ChainDiagnostic] = None
    examined = 0
    for ch in chains:
        top = to_mask(ch)
        c1 = oracle.cost(top)
        if not math.isfinite(c1):
            continue
        examined += 1
        total = 0.0
        h = top
        for i in ch:
            total += table.payment(i, h)
            h &= ~(1 << i)
        r = total / c1
        if best is None or r > best.ratio + 1e-15:
            best = ChainDiagnostic(tuple(ch), r, 0)
    if best is None:
        raise ValueError("no feasible chain")
    best.examined = examined
    return best


def self_cost(instance: Instance) -> float:
    return sum(instance.oracle.defaults())


def structure_total(P: CoalitionStructure, instance: Instance) -> float:
    return structure_cost(P, instance.oracle, instance.k)
