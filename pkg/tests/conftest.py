import itertools
import math

import pytest

from capshare import ExplicitCostTable, FunctionOracle, Instance, to_mask


def table_instance(n, costs, k=None, completion="none"):
    """Instance from ``{tuple_of_members: cost}``."""
    k = k or n
    entries = {to_mask(g): float(c) for g, c in costs.items()}
    return Instance(ExplicitCostTable(n, entries, completion=completion, k=k), k)


def constant_instance(n, k, value=1.0):
    return Instance(FunctionOracle(n, lambda g: value), k)


def defaults_instance(defaults, group_cost, k=None):
    """Singletons cost their default; every larger group costs ``group_cost(g)``."""
    n = len(defaults)

    def fn(g):
        return float(defaults[g[0]]) if len(g) == 1 else float(group_cost(g))

    return Instance(FunctionOracle(n, fn), k or n)


@pytest.fixture
def lemma8_instance():
    # defaults (1, 1, 0.1); the pair {0,1} and the triple both cost 1
    costs = {(0,): 1, (1,): 1, (2,): 0.1, (0, 1): 1, (0, 2): 1, (1, 2): 1, (0, 1, 2): 1}
    return table_instance(3, costs, k=3)


def all_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for size in range(len(rest) + 1):
        for others in itertools.combinations(rest, size):
            block = (first,) + others
            remaining = [x for x in rest if x not in others]
            for tail in all_partitions(remaining):
                yield [block] + tail


def numeric_nash(defaults, cost, tol=1e-10, max_iter=100_000):
    """Maximize sum(log u) over u_i in [0, c_i], sum(u) = sum(c) - cost.

    Pairwise coordinate ascent: each step re-balances the utility between two
    members holding their sum fixed.  Returns payments c_i - u_i.
    """
    c = list(map(float, defaults))
    surplus = sum(c) - cost
    if surplus <= 0:
        return c[:]
    u = [x * surplus / sum(c) for x in c]
    n = len(c)
    for _ in range(max_iter):
        moved = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                t = u[i] + u[j]
                ui = min(max(t / 2, t - c[j]), c[i])
                moved = max(moved, abs(ui - u[i]))
                u[i], u[j] = ui, t - ui
        if moved < tol:
            break
    return [ci - ui for ci, ui in zip(c, u)]


def harmonic(k):
    return sum(1.0 / s for s in range(1, k + 1))


def close(a, b, tol=1e-9):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)
