"""Exact minimum-cost partitions and empirical strong price of anarchy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import (CoalitionStructure, Instance, guard, iter_coalitions, members_of,
                   structure_cost, to_mask)
from .mechanisms import Mechanism, PaymentTable


class NoStableStructure(RuntimeError):
    """Enumeration found no stable structure; carries a preference cycle when one was found."""

    def __init__(self, message: str, cycle=None):
        super().__init__(message)
        self.cycle = cycle


@dataclass(frozen=True)
class OptimumResult:
    structure: CoalitionStructure
    cost: float
    method: str

    def to_json(self) -> dict:
        return {"structure": self.structure.to_json(), "cost": self.cost, "method": self.method}


def exact_optimum(instance: Instance) -> OptimumResult:
    """Subset DP: every block of the optimal partition is chosen around its lowest member.

    States are processed by lowest member from n-1 down to 0, so when block T
    with lowest member l is tried, every remainder R (all of whose members
    exceed l) is already final.  Candidate blocks are scanned in
    lexicographic order and only strict improvements are kept, which makes
    the backtrace deterministic.
    """
    n, K = instance.n, min(instance.k, instance.n)
    guard(n <= 22, f"exact optimum needs n <= 22, got {n}")
    oracle = instance.oracle
    size = 1 << n
    dp = np.full(size, np.inf)
    dp[0] = 0.0
    choice = np.zeros(size, dtype=np.int64)
    by_low: list[list[tuple[int, ...]]] = [[] for _ in range(n)]
    for g in iter_coalitions(n, K):
        by_low[g[0]].append(g)
    for l in range(n - 1, -1, -1):
        rest = np.arange(1 << (n - 1 - l), dtype=np.int64) << (l + 1)
        for g in sorted(by_low[l]):
            t = to_mask(g)
            c = oracle.cost(t)
            if not math.isfinite(c):
                continue
            R = rest[(rest & t) == 0]
            S = R | t
            vals = dp[R] + c
            old = dp[S]
            better = vals < old - 1e-12 * np.maximum(1.0, np.where(np.isfinite(old), np.abs(old), 1.0))
            if better.any():
                dp[S[better]] = vals[better]
                choice[S[better]] = t
    S = size - 1
    masks = []
    while S:
        t = int(choice[S])
        masks.append(t)
        S ^= t
    P = CoalitionStructure(n, tuple(masks))
    return OptimumResult(P, structure_cost(P, oracle), "dp")


def brute_optimum(instance: Instance) -> OptimumResult:
    """Enumerate every partition into coalitions of size <= K (n <= 10)."""
    n, K = instance.n, min(instance.k, instance.n)
    guard(n <= 10, f"brute-force optimum needs n <= 10, got {n}")
    oracle = instance.oracle
    blocks: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n)}
    for g in iter_coalitions(n, K):
        m = to_mask(g)
        c = oracle.cost(m)
        if math.isfinite(c):
            blocks[g[0]].append((m, c))
    full = (1 << n) - 1
    best = [math.inf, ()]

    def rec(assigned, total, chosen):
        if assigned == full:
            if total < best[0]:
                best[0], best[1] = total, tuple(chosen)
            return
        rem = full & ~assigned
        u = (rem & -rem).bit_length() - 1
        for m, c in blocks[u]:
            if not m & assigned:
                chosen.append(m)
                rec(assigned | m, total + c, chosen)
                chosen.pop()

    rec(0, 0.0, [])
    P = CoalitionStructure(n, best[1])
    return OptimumResult(P, structure_cost(P, oracle), "brute")


@dataclass
class SpoaResult:
    worst_stable_cost: float
    optimum_cost: float
    ratio: float
    stable_count: int
    worst_structure: Optional[CoalitionStructure] = None
    optimum_structure: Optional[CoalitionStructure] = None

    def to_json(self) -> dict:
        return {
            "worst_stable_cost": self.worst_stable_cost,
            "optimum_cost": self.optimum_cost,
            "ratio": self.ratio,
            "stable_count": self.stable_count,
            "worst_structure": None if self.worst_structure is None else self.worst_structure.to_json(),
            "optimum_structure": None if self.optimum_structure is None else self.optimum_structure.to_json(),
        }


def empirical_spoa(instance: Instance, mechanism, optimum: Optional[OptimumResult] = None) -> SpoaResult:
    from .stability import detect_cyclic_preference, enumerate_stable_structures
    from .core import ResourceLimitError

    mechanism = Mechanism.parse(mechanism)
    table = PaymentTable(instance.oracle, mechanism)
    stable = enumerate_stable_structures(instance, mechanism, table)
    if not stable:
        try:
            cycle = detect_cyclic_preference(instance, mechanism, table)
        except ResourceLimitError:
            cycle = None
        raise NoStableStructure(f"no stable structure under {mechanism.value}", cycle)
    costs = [structure_cost(P, instance.oracle) for P in stable]
    w = max(range(len(stable)), key=lambda j: (costs[j], -j))
    opt = optimum or exact_optimum(instance)
    return SpoaResult(costs[w], opt.cost, costs[w] / opt.cost, len(stable), stable[w], opt.structure)


def exact_fraction(x: float, max_denominator: int = 1 << 20) -> Optional[Fraction]:
    """The rational a float stands for, when a small denominator reproduces it exactly."""
    if not math.isfinite(x):
        return None
    f = Fraction(x).limit_denominator(max_denominator)
    if float(f) == x:
        return f
    return None


def exact_ratio(num_parts, den_parts) -> Fraction:
    """Ratio of two sums computed in rational arithmetic from exactly-representable terms."""
    return sum(map(Fraction, num_parts), Fraction(0)) / sum(map(Fraction, den_parts), Fraction(0))


CSV_COLUMNS = ["instance_id", "mechanism", "k", "n", "worst_stable", "optimum", "ratio", "status"]


def csv_row(instance_id: str, mechanism, instance: Instance, result: Optional[SpoaResult],
            status: str = "ok") -> dict:
    m = Mechanism.parse(mechanism).value
    if result is None:
        return {"instance_id": instance_id, "mechanism": m, "k": instance.k, "n": instance.n,
                "worst_stable": "", "optimum": "", "ratio": "", "status": status}
    return {"instance_id": instance_id, "mechanism": m, "k": instance.k, "n": instance.n,
            "worst_stable": f"{result.worst_stable_cost:.12g}", "optimum": f"{result.optimum_cost:.12g}",
            "ratio": f"{result.ratio:.12g}", "status": status}


def harmonic(k: int) -> Fraction:
    return sum((Fraction(1, s) for s in range(1, k + 1)), Fraction(0))


def members(P: CoalitionStructure) -> list[tuple[int, ...]]:
    return [members_of(m) for m in P.masks]
