import itertools
import json
import math
from fractions import Fraction
from pathlib import Path

import pytest

from capshare import (ResourceLimitError, enumerate_stable_structures, exact_optimum, is_stable,
                      pay_usage, structure_cost, validate_oracle)
from capshare.core import Instance, iter_coalitions, to_mask
from capshare.generators import (gen_equal_tight, gen_random, gen_taxi_cycle, gen_usage_lower,
                                 grid_blocks, grid_columns, grid_index, taxi_loop_tables)
from capshare.mechanisms import exclusive_cost
from capshare.serialize import dumps, instance_to_json

FIXTURES = Path(__file__).parent / "fixtures"


def hand_layout_k3():
    """The K=3 grid written out by hand: participant = 6 * (layer - 1) + (column - 1)."""
    p = lambda layer, col: 6 * (layer - 1) + (col - 1)
    runs = [[p(1, 1), p(1, 2), p(1, 3)], [p(1, 4), p(1, 5), p(1, 6)],
            [p(2, 1), p(2, 2)], [p(2, 3), p(2, 4)], [p(2, 5), p(2, 6)]]
    runs += [[p(3, c)] for c in range(1, 7)]
    columns = [[p(1, c), p(2, c), p(3, c)] for c in range(1, 7)]
    return runs, columns


def test_grid_bookkeeping_matches_hand_layout():
    runs, columns = hand_layout_k3()
    assert grid_blocks(3) == runs
    assert grid_columns(3) == columns
    assert grid_index(3, 2, 5) == 10


def test_golden_fixture_matches_generator():
    text = (FIXTURES / "equal_tight_k3.json").read_text()
    assert dumps(instance_to_json(gen_equal_tight(3).instance)) == text
    data = json.loads(text)
    runs, columns = hand_layout_k3()
    listed = sorted(e["members"] for e in data["oracle"]["entries"])
    assert listed == sorted(runs + columns)
    assert all(e["cost"] == 1.0 for e in data["oracle"]["entries"])
    side = json.loads((FIXTURES / "equal_tight_k3.json.sidecar.json").read_text())
    assert side["stable"] == runs and side["optimum"] == columns
    assert side["expected_ratio"] == "11/6"


@pytest.mark.parametrize("K, ratio", [(1, Fraction(1)), (2, Fraction(3, 2)), (3, Fraction(11, 6))])
def test_tight_ratio(K, ratio):
    g = gen_equal_tight(K)
    o = g.instance.oracle
    assert is_stable(g.stable, "equal", g.instance)
    assert exact_optimum(g.instance).cost == math.factorial(K)
    stable = sum(Fraction(o.cost(m)) for m in g.stable.masks)
    optimum = sum(Fraction(o.cost(m)) for m in g.optimum.masks)
    assert stable / optimum == ratio == g.expected_ratio


def test_tight_guard():
    with pytest.raises(ResourceLimitError):
        gen_equal_tight(5)


def test_grid_mixed_coalition_is_priced_piecewise():
    o = gen_equal_tight(3).instance.oracle
    # top of column 1 with the second-layer member of column 3: no shared generator
    assert o.cost_of([grid_index(3, 1, 1), grid_index(3, 2, 3)]) == 2
    assert o.cost_of([grid_index(3, 2, 1), grid_index(3, 3, 1)]) == 1


def test_lower_bound_exclusive_costs():
    K = 3
    o = gen_usage_lower(K).instance.oracle
    run = grid_blocks(K)[0]
    for size in (2, 3):
        G = tuple(run[:size])
        assert exclusive_cost(G, G, o) == 1
        for k in range(1, size):
            for L in itertools.combinations(G, k):
                assert exclusive_cost(G, L, o) == 0


@pytest.mark.parametrize("K", [2, 3])
def test_lower_bound_stable_and_ratio(K):
    g = gen_usage_lower(K)
    assert is_stable(g.stable, "usage", g.instance)
    ratio = structure_cost(g.stable, g.instance.oracle) / structure_cost(g.optimum, g.instance.oracle)
    assert ratio >= K / 2
    assert exact_optimum(g.instance).cost == math.factorial(K)


def test_lower_bound_lead_pays_half():
    K = 3
    o = gen_usage_lower(K).instance.oracle
    for col in grid_columns(K):
        for s in range(K - 1):
            chain = col[s:]
            assert pay_usage(chain, o).payment(chain[0]) >= 0.5


def test_taxi_cycle_rejects_even_and_small():
    for s in (2, 4, 6, 1):
        with pytest.raises(ValueError):
            gen_taxi_cycle(s)


def test_taxi_cycle_tables_are_valid():
    for s in (3, 5):
        inst = gen_taxi_cycle(s).instance
        assert validate_oracle(inst.oracle, 2).ok


def test_even_loop_has_stable_pairs():
    inst = Instance(taxi_loop_tables(4), 2)
    assert any(all(len(g) == 2 for g in P.coalitions) for P in enumerate_stable_structures(inst, "usage"))


@pytest.mark.parametrize("family", ["table", "hotel", "taxi", "pass"])
def test_random_generation_is_deterministic(family):
    a = dumps(instance_to_json(gen_random(family, 6, 3, seed=7)))
    b = dumps(instance_to_json(gen_random(family, 6, 3, seed=7)))
    c = dumps(instance_to_json(gen_random(family, 6, 3, seed=8)))
    assert a == b
    assert a != c


@pytest.mark.parametrize("family", ["table", "hotel", "taxi", "pass"])
def test_random_families_validate(family):
    for seed in range(5):
        inst = gen_random(family, 8 if family != "taxi" else 6, 3, seed)
        assert validate_oracle(inst.oracle, 3).ok


def test_random_table_respects_bounds():
    inst = gen_random("table", 8, 3, seed=1)
    o = inst.oracle
    for d in o.defaults():
        assert 0.5 <= d <= 2.0
        assert (d * 64).is_integer()
    for g in iter_coalitions(8, 3):
        c = o.cost_of(g)
        assert max(o.default_cost(i) for i in g) <= c <= sum(o.default_cost(i) for i in g) + 1e-12


def test_unknown_family():
    with pytest.raises(ValueError):
        gen_random("boat", 4, 2, 0)


def test_sidecar_contents():
    side = gen_usage_lower(2).sidecar()
    assert side["family"] == "usage-lower"
    assert side["expected_ratio"] == "3/2"
    assert side["chain_bound"] == "3/2"
    assert to_mask(side["stable"][0]) > 0
