"""Cost-sharing rules: who pays what inside one coalition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Iterable, Sequence

from .core import (CostOracle, InfeasibleCoalition, OracleError, ResourceOracle,
                   members_of, to_mask)


class Mechanism(str, Enum):
    EQUAL = "equal"
    PROPORTIONAL = "proportional"
    EGALITARIAN = "egalitarian"
    NASH = "nash"                              # non-negative payments
    NASH_UNCONSTRAINED = "nash-unconstrained"
    USAGE = "usage"

    @classmethod
    def parse(cls, value) -> "Mechanism":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown mechanism {value!r} (choose from {names})") from None


@dataclass(frozen=True)
class PaymentVector:
    members: tuple[int, ...]
    payments: tuple[float, ...]
    utilities: tuple[float, ...]
    mechanism: Mechanism
    cost: float

    def payment(self, i: int) -> float:
        try:
            return self.payments[self.members.index(i)]
        except ValueError:
            raise ValueError(f"participant {i} is not in coalition {list(self.members)}") from None

    def utility(self, i: int) -> float:
        try:
            return self.utilities[self.members.index(i)]
        except ValueError:
            raise ValueError(f"participant {i} is not in coalition {list(self.members)}") from None

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.members, self.payments))

    def to_json(self) -> dict:
        return {"members": list(self.members), "payments": list(self.payments),
                "utilities": list(self.utilities), "mechanism": self.mechanism.value}


def _coalition(G) -> tuple[int, int]:
    if isinstance(G, int):
        return G, G
    members = tuple(G)
    if not members:
        raise ValueError("coalition must be non-empty")
    return to_mask(members), members


def _feasible_cost(mask: int, oracle: CostOracle) -> float:
    c = oracle.cost(mask)
    if not math.isfinite(c):
        raise InfeasibleCoalition(f"coalition {list(members_of(mask))} is infeasible")
    return c


# Raw rules: take a mask, return payments aligned with members_of(mask).

def _equal(mask, oracle):
    c = _feasible_cost(mask, oracle)
    members = members_of(mask)
    return [c / len(members)] * len(members)


def _proportional(mask, oracle):
    c = _feasible_cost(mask, oracle)
    d = [oracle.default_cost(i) for i in members_of(mask)]
    total = sum(d)
    return [x * c / total for x in d]


def _egalitarian(mask, oracle):
    c = _feasible_cost(mask, oracle)
    d = [oracle.default_cost(i) for i in members_of(mask)]
    share = (sum(d) - c) / len(d)
    return [x - share for x in d]


def nash_nonnegative(defaults: Sequence[float], cost: float) -> list[float]:
    """Water-filling Nash payments with every payment kept >= 0.

    The highest-default members pay; the rest ride free.  The payer set is the
    longest prefix (by descending default) whose last member still has a
    strictly positive payment when the surplus is spread over the prefix.
    """
    order = sorted(range(len(defaults)), key=lambda j: (-defaults[j], j))
    tol = 1e-12 * max(1.0, abs(cost))
    m, prefix, best_prefix = 1, 0.0, defaults[order[0]]
    for rank, j in enumerate(order, start=1):
        prefix += defaults[j]
        # p_j within the prefix = c_j - (prefix - cost)/rank; positive iff below
        if rank == 1 or prefix - cost - rank * defaults[j] < -tol:
            m, best_prefix = rank, prefix
        else:
            break
    share = (best_prefix - cost) / m
    out = [0.0] * len(defaults)
    for j in order[:m]:
        out[j] = defaults[j] - share
    return out


def _nash(mask, oracle):
    c = _feasible_cost(mask, oracle)
    return nash_nonnegative([oracle.default_cost(i) for i in members_of(mask)], c)


def _usage(mask, oracle):
    if not isinstance(oracle, ResourceOracle):
        raise OracleError("usage-based sharing needs a resource-backed oracle")
    r = oracle.best_resource(mask)
    if r is None:
        raise InfeasibleCoalition(f"coalition {list(members_of(mask))} is infeasible")
    cost_of = dict(r.facilities)
    users = r.users()
    return [sum(cost_of[f] / len(users[f]) for f in r.usage[i]) for i in members_of(mask)]


_RULES = {
    Mechanism.EQUAL: _equal,
    Mechanism.PROPORTIONAL: _proportional,
    Mechanism.EGALITARIAN: _egalitarian,
    Mechanism.NASH_UNCONSTRAINED: _egalitarian,
    Mechanism.NASH: _nash,
    Mechanism.USAGE: _usage,
}


def payments(G, oracle: CostOracle, mechanism) -> PaymentVector:
    mechanism = Mechanism.parse(mechanism)
    mask, _ = _coalition(G)
    members = members_of(mask)
    p = _RULES[mechanism](mask, oracle)
    u = [oracle.default_cost(i) - x for i, x in zip(members, p)]
    return PaymentVector(members, tuple(p), tuple(u), mechanism, oracle.cost(mask))


def pay_equal(G, oracle):
    return payments(G, oracle, Mechanism.EQUAL)


def pay_proportional(G, oracle):
    return payments(G, oracle, Mechanism.PROPORTIONAL)


def pay_egalitarian(G, oracle):
    return payments(G, oracle, Mechanism.EGALITARIAN)


def pay_nash(G, oracle, nonnegative: bool = True):
    return payments(G, oracle, Mechanism.NASH if nonnegative else Mechanism.NASH_UNCONSTRAINED)


def pay_usage(G, oracle):
    return payments(G, oracle, Mechanism.USAGE)


def utility_of(i: int, pv: PaymentVector, oracle: CostOracle | None = None) -> float:
    p = pv.payment(i)
    if oracle is None:
        return pv.utility(i)
    return oracle.default_cost(i) - p


def exclusive_cost(G, L, oracle: ResourceOracle) -> float:
    """Cost of the facilities of r(G) used by every member of L and nobody else in G."""
    gmask, _ = _coalition(G)
    lmask, _ = _coalition(L)
    if lmask == 0 or lmask & ~gmask:
        raise ValueError(f"{list(members_of(lmask))} is not a non-empty subset of {list(members_of(gmask))}")
    r = oracle.best_resource(gmask)
    if r is None:
        raise InfeasibleCoalition(f"coalition {list(members_of(gmask))} is infeasible")
    users = r.users()
    want = members_of(lmask)
    return sum(c for f, c in r.facilities if tuple(users[f]) == want)


def usage_by_exclusive_costs(G, oracle: ResourceOracle) -> dict[int, float]:
    """Usage payments rebuilt from the exclusive costs of every sub-coalition."""
    gmask, members = _coalition(G)
    members = members_of(gmask)
    out = {i: 0.0 for i in members}
    for size in range(1, len(members) + 1):
        for L in combinations(members, size):
            x = exclusive_cost(gmask, L, oracle)
            if x:
                for i in L:
                    out[i] += x / size
    return out


class PaymentTable:
    """Memoized payments of one mechanism on one oracle.

    ``get(mask)`` returns ``{member: payment}``, or ``None`` when the
    coalition is infeasible.
    """

    def __init__(self, oracle: CostOracle, mechanism):
        self.oracle = oracle
        self.mechanism = Mechanism.parse(mechanism)
        if self.mechanism is Mechanism.USAGE and not isinstance(oracle, ResourceOracle):
            raise OracleError("usage-based sharing needs a resource-backed oracle")
        self._rule = _RULES[self.mechanism]
        self._memo: dict[int, dict[int, float] | None] = {}

    def get(self, mask: int) -> dict[int, float] | None:
        hit = self._memo.get(mask, False)
        if hit is not False:
            return hit
        if not math.isfinite(self.oracle.cost(mask)):
            out = None
        else:
            out = dict(zip(members_of(mask), self._rule(mask, self.oracle)))
        self._memo[mask] = out
        return out

    def payment(self, i: int, mask: int) -> float:
        p = self.get(mask)
        if p is None:
            raise InfeasibleCoalition(f"coalition {list(members_of(mask))} is infeasible")
        return p[i]

    def utility(self, i: int, mask: int) -> float:
        return self.oracle.default_cost(i) - self.payment(i, mask)

    def structure_payments(self, masks: Iterable[int]) -> dict[int, float]:
        out = {}
        for m in masks:
            p = self.get(m)
            if p is None:
                raise InfeasibleCoalition(f"coalition {list(members_of(m))} is infeasible")
            out.update(p)
        return out
