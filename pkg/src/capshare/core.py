"""Participants, coalitions, cost oracles and canonical resources.

Coalitions are bitmasks over participant indices internally and sorted
tuples at the API boundary.  Infeasible coalitions carry cost ``math.inf``.
"""

from __future__ import annotations

import itertools
import math
import os
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Optional, Sequence

EPS = 1e-9
INF = math.inf
MAX_PARTICIPANTS = 128


class CoalitionError(ValueError):
    """A coalition or coalition structure is malformed."""


class OracleError(ValueError):
    """A cost oracle is malformed or violates its contract."""


class InfeasibleCoalition(ValueError):
    """The coalition has no feasible canonical resource."""


class ResourceLimitError(RuntimeError):
    """The requested computation exceeds a size guard."""


def guards_lifted() -> bool:
    return bool(os.environ.get("COALITION_GUARD_OVERRIDE"))


def guard(ok: bool, message: str) -> None:
    if not ok and not guards_lifted():
        raise ResourceLimitError(message + " (set COALITION_GUARD_OVERRIDE=1 to lift)")


# -- bitmask helpers ---------------------------------------------------------

def to_mask(members: Iterable[int]) -> int:
    mask = 0
    for i in members:
        mask |= 1 << i
    return mask


def members_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def popcount(mask: int) -> int:
    return mask.bit_count()


def lowest(mask: int) -> int:
    return (mask & -mask).bit_length() - 1


def iter_coalitions(n: int, k: int, within: Optional[Sequence[int]] = None) -> Iterator[tuple[int, ...]]:
    """All coalitions of size 1..k, by size then lexicographically."""
    pool = range(n) if within is None else sorted(within)
    for size in range(1, k + 1):
        yield from itertools.combinations(pool, size)


def canonical(members: Iterable[int]) -> tuple[int, ...]:
    out = tuple(sorted(set(members)))
    if len(out) == 0:
        raise CoalitionError("a coalition must be non-empty")
    return out


@dataclass(frozen=True)
class CoalitionStructure:
    """A partition of ``range(n)`` into coalitions, held in canonical order."""

    n: int
    masks: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise CoalitionError("a coalition structure needs n >= 1")
        seen = 0
        for m in self.masks:
            if m <= 0:
                raise CoalitionError("empty coalition in structure")
            if seen & m:
                raise CoalitionError(f"coalitions overlap on {members_of(seen & m)}")
            seen |= m
        if seen != (1 << self.n) - 1:
            missing = members_of(((1 << self.n) - 1) & ~seen)
            extra = members_of(seen >> self.n << self.n)
            raise CoalitionError(f"not a partition of 0..{self.n - 1}: missing {missing}, extra {extra}")
        object.__setattr__(self, "masks", tuple(sorted(self.masks, key=lowest)))

    @classmethod
    def from_coalitions(cls, n: int, coalitions: Iterable[Iterable[int]]) -> "CoalitionStructure":
        masks = []
        for g in coalitions:
            g = canonical(g)
            if g[0] < 0 or g[-1] >= n:
                raise CoalitionError(f"participant out of range in {g}")
            masks.append(to_mask(g))
        return cls(n, tuple(masks))

    @property
    def coalitions(self) -> tuple[tuple[int, ...], ...]:
        return tuple(members_of(m) for m in self.masks)

    def owner(self) -> dict[int, int]:
        """Map each participant to the mask of its coalition."""
        own = {}
        for m in self.masks:
            for i in members_of(m):
                own[i] = m
        return own

    def max_size(self) -> int:
        return max(popcount(m) for m in self.masks)

    def check_capacity(self, k: int) -> None:
        for m in self.masks:
            if popcount(m) > k:
                raise CoalitionError(f"coalition {members_of(m)} exceeds capacity {k}")

    def key(self) -> tuple[int, ...]:
        return tuple(sorted(self.masks))

    def to_json(self) -> list[list[int]]:
        return [list(g) for g in self.coalitions]

    def __str__(self) -> str:
        return "{" + ", ".join("{" + ",".join(map(str, g)) + "}" for g in self.coalitions) + "}"


def default_structure(n: int) -> CoalitionStructure:
    if n < 1:
        raise CoalitionError("empty instance: n must be >= 1")
    return CoalitionStructure(n, tuple(1 << i for i in range(n)))


# -- resources ---------------------------------------------------------------

@dataclass(frozen=True)
class Resource:
    """A canonical resource: facility costs plus per-member facility usage."""

    total_cost: float
    facilities: tuple[tuple[Hashable, float], ...]
    usage: Mapping[int, frozenset]

    def __post_init__(self):
        total = sum(c for _, c in self.facilities)
        if abs(total - self.total_cost) > 1e-9 * max(1.0, abs(self.total_cost)):
            raise OracleError(f"facility costs sum to {total}, resource costs {self.total_cost}")
        ids = {f for f, _ in self.facilities}
        if len(ids) != len(self.facilities):
            raise OracleError("duplicate facility ids")
        for i, used in self.usage.items():
            if not used <= ids:
                raise OracleError(f"member {i} uses unknown facilities {sorted(map(str, used - ids))}")
        for f, c in self.facilities:
            if c < 0:
                raise OracleError(f"facility {f} has negative cost {c}")

    def users(self) -> dict[Hashable, list[int]]:
        out: dict[Hashable, list[int]] = {f: [] for f, _ in self.facilities}
        for i in sorted(self.usage):
            for f in self.usage[i]:
                out[f].append(i)
        return out

    def uncovered_cost(self) -> float:
        users = self.users()
        return sum(c for f, c in self.facilities if not users[f])

    @staticmethod
    def union(parts: Sequence["Resource"]) -> "Resource":
        """Disjoint union of resources shared by disjoint sub-coalitions."""
        facilities = []
        usage: dict[int, frozenset] = {}
        for idx, r in enumerate(parts):
            facilities.extend(((idx, f), c) for f, c in r.facilities)
            for i, used in r.usage.items():
                usage[i] = frozenset((idx, f) for f in used)
        return Resource(sum(r.total_cost for r in parts), tuple(facilities), usage)


# -- oracles -----------------------------------------------------------------

class CostOracle(ABC):
    """Cost of every coalition of ``n`` participants, memoized by bitmask."""

    def __init__(self, n: int):
        if not 1 <= n <= MAX_PARTICIPANTS:
            raise OracleError(f"n must be in 1..{MAX_PARTICIPANTS}, got {n}")
        self.n = n
        self._costs: dict[int, float] = {}

    @abstractmethod
    def _compute_cost(self, mask: int) -> float: ...

    def cost(self, mask: int) -> float:
        if mask == 0:
            return 0.0
        c = self._costs.get(mask)
        if c is None:
            c = float(self._compute_cost(mask))
            self._costs[mask] = c
        return c

    def cost_of(self, members: Iterable[int]) -> float:
        return self.cost(to_mask(members))

    def default_cost(self, i: int) -> float:
        return self.cost(1 << i)

    def defaults(self) -> list[float]:
        return [self.default_cost(i) for i in range(self.n)]

    def to_json(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no instance-file form")


class ResourceOracle(CostOracle):
    """A cost oracle backed by the lowest-cost canonical resource of each coalition."""

    def __init__(self, n: int):
        super().__init__(n)
        self._resources: dict[int, Optional[Resource]] = {}

    @abstractmethod
    def _compute_resource(self, mask: int) -> Optional[Resource]: ...

    def best_resource(self, mask: int) -> Optional[Resource]:
        if mask not in self._resources:
            self._resources[mask] = self._compute_resource(mask)
        return self._resources[mask]

    def _compute_cost(self, mask: int) -> float:
        r = self.best_resource(mask)
        return INF if r is None else r.total_cost


class FunctionOracle(CostOracle):
    """Wraps a plain ``cost(members_tuple)`` callable; handy in tests."""

    def __init__(self, n: int, fn: Callable[[tuple[int, ...]], float]):
        super().__init__(n)
        self._fn = fn

    def _compute_cost(self, mask: int) -> float:
        return self._fn(members_of(mask))


def _min_cover(mask: int, piece: Callable[[int], Optional[float]], memo: dict) -> tuple[float, tuple[int, ...]]:
    """Cheapest partition of ``mask`` into pieces accepted by ``piece``.

    Pieces always contain the lowest remaining member; ties go to the first
    piece in ascending submask order.
    """
    if mask == 0:
        return 0.0, ()
    hit = memo.get(mask)
    if hit is not None:
        return hit
    low = mask & -mask
    rest = mask ^ low
    best: tuple[float, tuple[int, ...]] = (INF, ())
    sub = rest
    # enumerate every submask of rest, from largest to empty
    while True:
        p = sub | low
        pc = piece(p)
        if pc is not None:
            tail_cost, tail = _min_cover(mask ^ p, piece, memo)
            total = pc + tail_cost
            if total < best[0] - 1e-12 * max(1.0, abs(total)):
                best = (total, (p,) + tail)
        if sub == 0:
            break
        sub = (sub - 1) & rest
    memo[mask] = best
    return best


class ExplicitCostTable(CostOracle):
    """Costs listed per coalition, optionally completed by the piecewise rule.

    ``completion="none"``: every coalition of size <= ``k`` must be listed.
    ``completion="case3"``: listed coalitions act as generators.  A subset of
    a generator costs the cheapest generator containing it; any other
    coalition costs its cheapest partition into such subsets.
    """

    COMPLETIONS = ("none", "case3")

    def __init__(self, n: int, entries: Mapping[int, float], completion: str = "none",
                 k: Optional[int] = None, validate: bool = True):
        super().__init__(n)
        if completion not in self.COMPLETIONS:
            raise OracleError(f"unknown completion rule {completion!r}")
        self.completion = completion
        self.entries = dict(entries)
        for m, c in self.entries.items():
            if m <= 0 or m >> n:
                raise OracleError(f"entry {members_of(m)} outside 0..{n - 1}")
            if not (c > 0 and math.isfinite(c)):
                raise OracleError(f"entry {members_of(m)} has non-positive or non-finite cost {c}")
        self._by_member: dict[int, list[int]] = {i: [] for i in range(n)}
        for m in self.entries:
            for i in members_of(m):
                self._by_member[i].append(m)
        self._cover_memo: dict = {}
        if completion == "none" and k is not None:
            for g in iter_coalitions(n, k):
                if to_mask(g) not in self.entries:
                    raise OracleError(f"coalition {list(g)} is not listed and completion is 'none'")
        for i in range(n):
            if completion == "none" and (1 << i) not in self.entries:
                raise OracleError(f"singleton [{i}] is not listed")
            if completion == "case3" and not self._by_member[i]:
                raise OracleError(f"participant {i} appears in no entry")
        if validate and k is not None:
            mode = "exhaustive" if n <= 20 else "sampled"
            report = validate_oracle(self, k, mode=mode)
            if not report.ok:
                raise OracleError(f"cost table violates (C1)/(C2): {report.violations[0]}")

    def _generator_cost(self, mask: int) -> Optional[float]:
        best = None
        for e in self._by_member[lowest(mask)]:
            if mask & ~e == 0:
                c = self.entries[e]
                if best is None or c < best:
                    best = c
        return best

    def _compute_cost(self, mask: int) -> float:
        c = self.entries.get(mask)
        if c is not None:
            return c
        if self.completion == "none":
            raise OracleError(f"coalition {list(members_of(mask))} is not listed")
        c = self._generator_cost(mask)
        if c is not None:
            return c
        return _min_cover(mask, self._generator_cost, self._cover_memo)[0]

    def to_json(self) -> dict:
        return {
            "kind": "table",
            "completion": self.completion,
            "entries": [{"members": list(members_of(m)), "cost": c}
                        for m, c in sorted(self.entries.items(), key=lambda mc: members_of(mc[0]))],
        }


class TruncatedOracle(CostOracle):
    """Cost capped at the members' summed default costs."""

    def __init__(self, base: CostOracle):
        super().__init__(base.n)
        self.base = base

    def _compute_cost(self, mask: int) -> float:
        cap = sum(self.base.default_cost(i) for i in members_of(mask))
        return min(self.base.cost(mask), cap)


def truncated_oracle(oracle: CostOracle) -> CostOracle:
    if isinstance(oracle, TruncatedOracle):
        return oracle
    return TruncatedOracle(oracle)


class SharedFacilityOracle(ResourceOracle):
    """Every coalition's cost is a single facility used by all its members.

    Under usage-based sharing this reproduces equal split exactly.
    """

    def __init__(self, base: CostOracle):
        super().__init__(base.n)
        self.base = base

    def _compute_resource(self, mask: int) -> Optional[Resource]:
        c = self.base.cost(mask)
        if not math.isfinite(c):
            return None
        shared = frozenset({"shared"})
        return Resource(c, (("shared", c),), {i: shared for i in members_of(mask)})

    def to_json(self) -> dict:
        return {"kind": "shared", "base": self.base.to_json()}


class ResourceTable(ResourceOracle):
    """Explicit per-coalition resources (usage tables).

    ``completion="none"`` requires every coalition of size <= ``k`` to be
    listed; ``"case3"`` gives unlisted coalitions the union of the resources
    of their cheapest partition into listed coalitions.
    """

    def __init__(self, n: int, resources: Mapping[int, Resource], completion: str = "none",
                 k: Optional[int] = None):
        super().__init__(n)
        if completion not in ExplicitCostTable.COMPLETIONS:
            raise OracleError(f"unknown completion rule {completion!r}")
        self.completion = completion
        self.table = dict(resources)
        for m, r in self.table.items():
            if set(r.usage) != set(members_of(m)):
                raise OracleError(f"resource for {list(members_of(m))} lists usage for {sorted(r.usage)}")
        self._cover_memo: dict = {}
        need = iter_coalitions(n, k) if (completion == "none" and k is not None) else ((i,) for i in range(n))
        for g in need:
            if to_mask(g) not in self.table:
                raise OracleError(f"coalition {list(g)} has no listed resource")

    def _listed_cost(self, mask: int) -> Optional[float]:
        r = self.table.get(mask)
        return None if r is None else r.total_cost

    def _compute_resource(self, mask: int) -> Optional[Resource]:
        r = self.table.get(mask)
        if r is not None or self.completion == "none":
            return r
        c, pieces = _min_cover(mask, self._listed_cost, self._cover_memo)
        if not math.isfinite(c):
            return None
        return Resource.union([self.table[p] for p in pieces])

    def to_json(self) -> dict:
        rows = []
        for m in sorted(self.table, key=members_of):
            r = self.table[m]
            users = r.users()
            rows.append({
                "members": list(members_of(m)),
                "facilities": [{"cost": c, "users": users[f]} for f, c in r.facilities],
            })
        return {"kind": "usage", "completion": self.completion, "resources": rows}


# -- instance ----------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    """A capacitated coalition-formation game: oracle plus capacity ``k``."""

    oracle: CostOracle
    k: int
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.k < 1:
            raise OracleError(f"capacity k must be >= 1, got {self.k}")

    @property
    def n(self) -> int:
        return self.oracle.n

    def validate_structure(self, P: CoalitionStructure) -> None:
        if P.n != self.n:
            raise CoalitionError(f"structure covers {P.n} participants, instance has {self.n}")
        P.check_capacity(self.k)


def structure_cost(P: CoalitionStructure, oracle: CostOracle, k: Optional[int] = None) -> float:
    if P.n != oracle.n:
        raise CoalitionError(f"structure covers {P.n} participants, oracle has {oracle.n}")
    if k is not None:
        P.check_capacity(k)
    return sum(oracle.cost(m) for m in P.masks)


# -- validation --------------------------------------------------------------

@dataclass
class Violation:
    kind: str          # "C1", "C2", "singleton", "budget"
    smaller: tuple[int, ...]
    larger: tuple[int, ...]
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: H={list(self.smaller)} G={list(self.larger)} ({self.detail})"


@dataclass
class ValidationReport:
    mode: str
    checked: int
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"mode": self.mode, "checked": self.checked, "ok": self.ok,
                "violations": [str(v) for v in self.violations[:20]]}


def _check_coalition(oracle: CostOracle, g: tuple[int, ...], out: list[Violation]) -> None:
    mask = to_mask(g)
    c = oracle.cost(mask)
    if len(g) == 1 and not math.isfinite(c):
        out.append(Violation("singleton", g, g, "singleton must be feasible"))
    if not c > 0:
        out.append(Violation("C1", g, g, f"cost {c} is not positive"))
    for i in g if len(g) > 1 else ():
        h = mask & ~(1 << i)
        ch = oracle.cost(h)
        if ch > c + EPS * max(1.0, abs(c) if math.isfinite(c) else 1.0):
            out.append(Violation("C2", members_of(h), g, f"c(H)={ch} > c(G)={c}"))
    if isinstance(oracle, ResourceOracle) and math.isfinite(c):
        r = oracle.best_resource(mask)
        idle = r.uncovered_cost()
        if idle > EPS:
            out.append(Violation("budget", g, g, f"facilities worth {idle} are used by no member"))


def validate_oracle(oracle: CostOracle, k: int, mode: str = "exhaustive",
                    samples: int = 10_000, seed: int = 0) -> ValidationReport:
    """Check positivity, monotonicity and facility coverage on coalitions of size <= k.

    Monotonicity is checked against every immediate subset, which suffices by
    transitivity.  ``mode="sampled"`` draws random coalitions instead.
    """
    k = min(k, oracle.n)
    out: list[Violation] = []
    if mode == "exhaustive":
        guard(oracle.n <= 20, f"exhaustive validation needs n <= 20, got {oracle.n}")
        checked = 0
        for g in iter_coalitions(oracle.n, k):
            _check_coalition(oracle, g, out)
            checked += 1
    elif mode == "sampled":
        rng = random.Random(seed)
        for i in range(oracle.n):
            _check_coalition(oracle, (i,), out)
        for _ in range(samples):
            size = rng.randint(1, k)
            _check_coalition(oracle, tuple(sorted(rng.sample(range(oracle.n), size))), out)
        checked = samples + oracle.n
    else:
        raise ValueError(f"unknown validation mode {mode!r}")
    return ValidationReport(mode, checked, out)
