"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import random
import time
from fractions import Fraction

import pytest

from capshare import (CoalitionStructure, Mechanism, NoStableStructure, brute_optimum,
                      default_structure, detect_cyclic_preference, empirical_spoa,
                      enumerate_stable_structures, exact_optimum, find_blocking_coalition,
                      greedy_stable, is_stable, nash_positive_refinement, pay_egalitarian,
                      pay_nash, payments, structure_cost, truncated_oracle)
from capshare.cli import analyze, cmd_generate, build_parser
from capshare.core import Instance, SharedFacilityOracle, iter_coalitions, to_mask
from capshare.domains import check_monotone_utilization
from capshare.generators import gen_equal_tight, gen_random, gen_taxi_cycle, gen_usage_lower
from capshare.mechanisms import PaymentTable

from conftest import all_partitions, harmonic, numeric_nash


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}"
                  + (f"  ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"
    return emit


def random_partition(rng, n, K):
    left = list(range(n))
    rng.shuffle(left)
    blocks = []
    while left:
        size = rng.randint(1, min(K, len(left)))
        blocks.append(left[:size])
        left = left[size:]
    return CoalitionStructure.from_coalitions(n, blocks)


# 1 ---------------------------------------------------------------------------

def test_tight_ratio_through_analyze(tmp_path, report):
    details, ok = [], True
    for K, want in ((2, "3/2"), (3, "11/6")):
        path = tmp_path / f"tight{K}.json"
        cmd_generate(build_parser().parse_args(["generate", "equal-tight", "--k", str(K), "-o", str(path)]))
        t0 = time.perf_counter()
        code, rep = analyze(str(path), "equal", timestamp=False)
        secs = time.perf_counter() - t0
        cert = rep["certified"]
        good = (code == 0 and rep.get("ratio_exact") == want and cert["stable_verified"]
                and cert["optimum_verified"] and rep["optimum"]["method"] == "dp"
                and (K < 3 or secs < 10))
        ok &= good
        details.append(f"K={K}: {rep.get('ratio_exact')} in {secs:.2f}s")
    report(1, "tight equal-split ratio 3/2 and 11/6 via analyze", ok, "; ".join(details))


# 2 ---------------------------------------------------------------------------

def test_mechanisms_coincide_on_tight_instance(report):
    g = gen_equal_tight(3)
    inst = g.instance
    shared = Instance(SharedFacilityOracle(inst.oracle), inst.k)
    others = [(m, inst) for m in (Mechanism.PROPORTIONAL, Mechanism.EGALITARIAN,
                                  Mechanism.NASH, Mechanism.NASH_UNCONSTRAINED)]
    others.append((Mechanism.USAGE, shared))
    worst = 0.0
    stable_all = True
    for g_members in iter_coalitions(inst.n, inst.k):
        base = payments(g_members, inst.oracle, Mechanism.EQUAL).payments
        for mech, host in others:
            p = payments(g_members, host.oracle, mech).payments
            worst = max(worst, max(abs(a - b) for a, b in zip(p, base)))
    for mech, host in others:
        stable_all &= is_stable(g.stable, mech, host)
    report(2, "proportional/egalitarian/Nash/usage equal split on the K=3 grid",
           worst <= 1e-9 and stable_all, f"max payment gap {worst:.2e}, stable under all: {stable_all}")


# 3 ---------------------------------------------------------------------------

def test_usage_lower_bound(report):
    details, ok = [], True
    for K in (2, 3, 4):
        g = gen_usage_lower(K)
        inst, o = g.instance, g.instance.oracle
        stable = find_blocking_coalition(g.stable, "usage", inst) is None
        if inst.n <= 22:
            opt = exact_optimum(inst).cost
        else:
            # every partition into coalitions of size <= K costs at least sum(c_i)/K
            bound = sum(o.defaults()) / K
            opt = structure_cost(g.optimum, o, K)
            stable &= opt <= bound + 1e-9
        ratio = Fraction(structure_cost(g.stable, o)) / Fraction(opt)
        ok &= stable and ratio >= Fraction(K, 2)
        details.append(f"K={K}: {ratio} (stable {stable})")
    report(3, "usage-based lower-bound instance ratio >= K/2", ok, "; ".join(details))


# 4 ---------------------------------------------------------------------------

def test_taxi_loop_has_no_stable_structure(report):
    details, ok = [], True
    for s in (3, 5):
        inst = gen_taxi_cycle(s).instance
        empty = enumerate_stable_structures(inst, "usage") == []
        cyc = detect_cyclic_preference(inst, "usage")
        ok &= empty and cyc is not None
        details.append(f"s={s}: empty={empty} cycle={len(cyc) if cyc else None}")
    rejected = 0
    for s in (2, 4, 6):
        try:
            gen_taxi_cycle(s)
        except ValueError:
            rejected += 1
    ok &= rejected == 3
    report(4, "odd taxi loops: no stable structure, preference cycle; even s rejected", ok,
           "; ".join(details) + f"; even rejected {rejected}/3")


# 5 ---------------------------------------------------------------------------

def test_nash_closed_form_vs_numeric(report):
    rng = random.Random(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(200):
        n = rng.randint(1, 6)
        inst = gen_random("table", n, n, seed=trial, subadditive=rng.random() < 0.5)
        o = truncated_oracle(inst.oracle)
        g = tuple(sorted(rng.sample(range(n), rng.randint(1, n))))
        ref = numeric_nash([o.default_cost(i) for i in g], o.cost_of(g))
        got = pay_nash(g, o).payments
        worst = max(worst, max(abs(a - b) for a, b in zip(ref, got)))
    secs = time.perf_counter() - t0
    report(5, "water-filling Nash vs numeric maximizer on 200 coalitions", worst <= 1e-6 and secs < 60,
           f"max gap {worst:.2e}, {secs:.1f}s")


# 6 ---------------------------------------------------------------------------

def test_nash_egalitarian_identity_and_nonnegativity(report):
    mismatches = 0
    for seed in range(3):
        inst = gen_random("table", 12, 12, seed=seed, subadditive=seed != 0)
        for mask in range(1, 1 << 12):
            a = pay_nash(mask, inst.oracle, nonnegative=False).payments
            b = pay_egalitarian(mask, inst.oracle).payments
            mismatches += a != b
    lowest = math.inf
    structures = 0
    for seed in range(100):
        n, K = 4 + seed % 7, 2 + seed % 3
        inst = gen_random("table", n, K, seed=seed, subadditive=seed % 2 == 0)
        ega = PaymentTable(inst.oracle, Mechanism.EGALITARIAN)
        for P in enumerate_stable_structures(inst, "nash"):
            structures += 1
            lowest = min(lowest, min(ega.structure_payments(P.masks).values()))
    report(6, "unconstrained Nash = egalitarian; egalitarian >= 0 in Nash-stable structures",
           mismatches == 0 and lowest >= -1e-9,
           f"{mismatches} mismatches; min egalitarian payment {lowest:.3g} over {structures} structures")


# 7 ---------------------------------------------------------------------------

def test_nash_positive_refinement(report):
    rng = random.Random(7)
    bad_pay = bad_cost = 0
    worst_factor = 0.0
    for seed in range(100):
        n, K = rng.randint(3, 12), rng.randint(2, 4)
        inst = gen_random("table", n, K, seed=seed, subadditive=rng.random() < 0.5)
        o = truncated_oracle(inst.oracle)
        tinst = Instance(o, K)
        P = exact_optimum(tinst).structure if seed % 2 == 0 else random_partition(rng, n, K)
        out = nash_positive_refinement(P, o)
        for m in out.masks:
            if min(pay_nash(m, o).payments) <= 0:
                bad_pay += 1
        before, after = structure_cost(P, o), structure_cost(out, o)
        worst_factor = max(worst_factor, after / before)
        if after > (math.sqrt(K) + 1) * before + 1e-9:
            bad_cost += 1
    report(7, "refinement: everyone pays, cost within (sqrt K + 1)", bad_pay == 0 and bad_cost == 0,
           f"{bad_pay} non-positive payments, {bad_cost} cost violations, worst factor {worst_factor:.3f}")


# 8 ---------------------------------------------------------------------------

def test_truncation_invariance(report):
    set_diffs = opt_diffs = binding = 0
    example = ""
    for seed in range(100):
        n, K = 4 + seed % 6, 2 + seed % 3
        # half the tables allow coalitions dearer than their members alone, so truncation bites
        inst = gen_random("table", n, K, seed=seed, subadditive=seed % 2 == 1)
        t = Instance(truncated_oracle(inst.oracle), K)
        binding += any(t.oracle.cost_of(g) < inst.oracle.cost_of(g) for g in iter_coalitions(n, K))
        if abs(exact_optimum(inst).cost - exact_optimum(t).cost) > 1e-12:
            opt_diffs += 1
        for mech in ("proportional", "egalitarian", "nash"):
            a = {P.key() for P in enumerate_stable_structures(inst, mech)}
            b = {P.key() for P in enumerate_stable_structures(t, mech)}
            if a != b:
                set_diffs += 1
                if not example:
                    extra = CoalitionStructure(n, sorted(b - a)[0])
                    example = f"seed {seed} {mech}: {extra} stable only after truncation"
    report(8, "stable sets and optimum unchanged by truncation", set_diffs == 0 and opt_diffs == 0,
           f"{binding} instances with binding truncation; {set_diffs} stable-set differences, "
           f"{opt_diffs} optimum differences" + (f"; e.g. {example}" if example else ""))


# 9 ---------------------------------------------------------------------------

def test_self_structure_bounds(report):
    violations = checked = 0
    cases = []
    for seed in range(60):
        n, K = 4 + seed % 6, 2 + seed % 3
        cases.append((gen_random("table", n, K, seed, subadditive=seed % 2 == 0),
                      ("equal", "proportional", "egalitarian", "nash", "nash-unconstrained")))
    for seed in range(20):
        cases.append((gen_random("pass", 4 + seed % 6, 2 + seed % 3, seed), ("usage",)))
        cases.append((gen_random("hotel", 4 + seed % 6, 2 + seed % 3, seed), ("usage", "equal")))
    for inst, mechs in cases:
        self_cost = structure_cost(default_structure(inst.n), inst.oracle)
        opt = exact_optimum(inst).cost
        violations += self_cost > inst.k * opt + 1e-9
        for mech in mechs:
            for P in enumerate_stable_structures(inst, mech):
                checked += 1
                violations += structure_cost(P, inst.oracle) > self_cost + 1e-9
    report(9, "self structure <= K * optimum; stable structures <= self structure", violations == 0,
           f"{violations} violations over {len(cases)} instances, {checked} stable structures")


# 10 --------------------------------------------------------------------------

def _sweep(make, mechanism, bound, target=500, max_tries=3000):
    worst_excess, worst_ratio, done, tries, skipped = -math.inf, 0.0, 0, 0, 0
    while done < target and tries < max_tries:
        inst = make(tries)
        tries += 1
        if inst is None:
            skipped += 1
            continue
        try:
            r = empirical_spoa(inst, mechanism).ratio
        except NoStableStructure:
            skipped += 1
            continue
        worst_ratio = max(worst_ratio, r)
        worst_excess = max(worst_excess, r - bound(inst.k))
        done += 1
    return done, worst_ratio, worst_excess, skipped


def _table(i):
    return gen_random("table", 3 + i % 8, 2 + (i // 8) % 3, i, subadditive=i % 3 != 0)


def _monotone_usage(i):
    K = 2 + (i // 2) % 3
    if i % 2 == 0:
        inst = gen_random("hotel", 3 + i % 8, K, i, uniform_locations=i % 4 == 0, common_day=i % 8 == 0)
    else:
        inst = gen_random("taxi", 3 + i % 5, min(K, 3), i, common_origin=True)
    return inst if check_monotone_utilization(inst.oracle, inst.k).ok else None


def _pass(i):
    return gen_random("pass", 3 + i % 8, 2 + (i // 8) % 3, i)


def test_upper_bound_envelopes(report):
    H = lambda K: float(harmonic(K))
    sweeps = [
        ("equal split <= H_K", _table, "equal", H),
        ("proportional <= ln K + 2", _table, "proportional", lambda K: math.log(K) + 2),
        ("usage on monotone-utilization instances <= H_K", _monotone_usage, "usage", H),
        ("pass sharing <= H_K + 1", _pass, "usage", lambda K: H(K) + 1),
    ]
    ok, details = True, []
    for title, make, mech, bound in sweeps:
        done, worst, excess, skipped = _sweep(make, mech, bound)
        good = done >= 500 and excess <= 1e-9
        ok &= good
        details.append(f"{title}: {done} instances, max ratio {worst:.4f}, skipped {skipped}")
    report(10, "empirical ratios within proven envelopes", ok, "; ".join(details))


# 11 --------------------------------------------------------------------------

def test_solver_cross_check(report):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(500):
        n, K = 2 + seed % 8, 2 + seed % 3
        fam = ("table", "table", "pass", "hotel")[seed % 4]
        inst = gen_random(fam, n, K, seed)
        if abs(exact_optimum(inst).cost - brute_optimum(inst).cost) > 1e-9:
            mismatches += 1
    secs = time.perf_counter() - t0
    report(11, "subset DP matches brute-force partition search on 500 instances",
           mismatches == 0 and secs < 120, f"{mismatches} mismatches in {secs:.1f}s")


# 12 --------------------------------------------------------------------------

def _brute_stable(P, mechanism, inst):
    table = PaymentTable(inst.oracle, mechanism)
    cur = table.structure_payments(P.masks)
    for g in iter_coalitions(inst.n, min(inst.k, inst.n)):
        p = table.get(to_mask(g))
        if p is not None and all(p[i] < cur[i] - 1e-9 for i in g):
            return False
    return True


def test_greedy_existence(report):
    failures = []
    for mech in ("equal", "proportional", "egalitarian", "nash"):
        for seed in range(100):
            inst = gen_random("table", 3 + seed % 8, 2 + seed % 3, seed, subadditive=seed % 2 == 0)
            if not _brute_stable(greedy_stable(inst, mech), mech, inst):
                failures.append(f"{mech}/{seed}")
    for seed in range(100):
        inst = gen_random("pass", 3 + seed % 8, 2 + seed % 3, seed)
        if not _brute_stable(greedy_stable(inst, "usage"), "usage", inst):
            failures.append(f"pass/{seed}")
        hotel = gen_random("hotel", 3 + seed % 8, 2, seed, uniform_locations=True)
        if not _brute_stable(greedy_stable(hotel, "usage"), "usage", hotel):
            failures.append(f"hotel/{seed}")
    report(12, "greedy construction yields verified stable structures", not failures,
           f"{len(failures)} failures" + (f": {failures[:5]}" if failures else ""))


def test_partition_helper_counts():
    # Bell numbers, sanity check for the brute-force helpers above
    assert [sum(1 for _ in all_partitions(range(n))) for n in range(1, 6)] == [1, 2, 5, 15, 52]
