"""Command line: analyze instances, generate them, and run parameter sweeps.

Exit codes: 0 success, 1 error, 2 no stable structure exists.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .core import (CoalitionError, CoalitionStructure, OracleError, ResourceLimitError,
                   default_structure, structure_cost, validate_oracle)
from .generators import (FAMILIES, gen_equal_tight, gen_random, gen_taxi_cycle, gen_usage_lower)
from .mechanisms import Mechanism, PaymentTable
from .optimum import CSV_COLUMNS, NoStableStructure, csv_row, empirical_spoa, exact_optimum
from .serialize import InstanceFormatError, dumps, instance_to_json, load_instance
from .stability import (UnsupportedMechanism, detect_cyclic_preference, find_blocking_coalition,
                        greedy_stable, improvement_dynamics)

MECHANISMS = [m.value for m in Mechanism]
NAMED = ("equal-tight", "usage-lower", "taxi-cycle")


def num(x: float):
    if x is None or not math.isfinite(x):
        return None if x is None else str(x)
    return float(f"{x:.12g}")


def exact_text(parts_num, parts_den) -> Optional[str]:
    """Ratio as a fraction when it is exact with a modest denominator."""
    try:
        f = sum(map(Fraction, parts_num), Fraction(0)) / sum(map(Fraction, parts_den), Fraction(0))
    except (ValueError, ZeroDivisionError, OverflowError):
        return None
    if f.denominator > 10 ** 6:
        return None
    return str(f)


def _sidecar_path(path: Path, given: Optional[str]) -> Optional[Path]:
    if given:
        return Path(given)
    p = Path(str(path) + ".sidecar.json")
    return p if p.exists() else None


def _structure_report(P: CoalitionStructure, table: PaymentTable) -> list[dict]:
    out = []
    for g in P.coalitions:
        mask = sum(1 << i for i in g)
        pay = table.get(mask)
        out.append({"members": list(g), "cost": num(table.oracle.cost(mask)),
                    "payments": [num(pay[i]) for i in g] if pay else None})
    return out


def analyze(path: str, mechanism: str, dynamics: str = "greedy", max_steps: int = 1000,
            sidecar: Optional[str] = None, timestamp: bool = True) -> tuple[int, dict]:
    inst = load_instance(path)
    mech = Mechanism.parse(mechanism)
    oracle, n = inst.oracle, inst.n
    table = PaymentTable(oracle, mech)
    report: dict = {"instance": inst.name or Path(path).name, "n": n, "k": inst.k, "mechanism": mech.value}
    if timestamp:
        report["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")

    mode = "exhaustive" if n <= 20 else "sampled"
    report["validation"] = validate_oracle(oracle, inst.k, mode=mode).to_json()

    # stable structure search
    P0 = default_structure(n)
    status = "Stable"
    dyn = {"method": dynamics}
    P = None
    if dynamics == "greedy":
        try:
            P = greedy_stable(inst, mech)
        except UnsupportedMechanism as e:
            dyn["fallback"] = str(e)
            dyn["method"] = dynamics = "improve"
    if dynamics == "improve":
        rep = improvement_dynamics(P0, mech, inst, max_steps=max_steps, find_cycle=False)
        dyn["steps"] = rep.steps
        status = rep.status
        P = rep.structure
    dyn["status"] = status
    dyn["structure"] = _structure_report(P, table)
    dyn["cost"] = num(structure_cost(P, oracle))
    report["dynamics"] = dyn
    stable_costs: list[tuple[str, CoalitionStructure]] = []
    if status == "Stable":
        stable_costs.append(("dynamics", P))

    # certified structures from the sidecar
    sc = _sidecar_path(Path(path), sidecar)
    certified_opt = None
    if sc is not None:
        side = json.loads(sc.read_text(encoding="utf-8"))
        cert: dict = {"sidecar": sc.name}
        if "stable" in side:
            S = CoalitionStructure.from_coalitions(n, side["stable"])
            w = find_blocking_coalition(S, mech, inst, table)
            cert["stable_verified"] = w is None
            if w is None:
                stable_costs.append(("sidecar", S))
            else:
                cert["stable_witness"] = list(w)
        if "optimum" in side:
            O = CoalitionStructure.from_coalitions(n, side["optimum"])
            O.check_capacity(inst.k)
            certified_opt = O
        if "expected_ratio" in side:
            cert["expected_ratio"] = side["expected_ratio"]
        report["certified"] = cert

    # optimum
    if n <= 22:
        opt = exact_optimum(inst)
        opt_P, opt_cost, how = opt.structure, opt.cost, "dp"
        if certified_opt is not None:
            report["certified"]["optimum_verified"] = abs(structure_cost(certified_opt, oracle) - opt_cost) <= 1e-9 * max(1.0, opt_cost)
    elif certified_opt is not None:
        # any partition into coalitions of size <= K costs at least sum(c_i)/K
        opt_P, how = certified_opt, "lower-bound"
        opt_cost = structure_cost(opt_P, oracle)
        ok = opt_cost <= sum(oracle.defaults()) / inst.k + 1e-9 * max(1.0, opt_cost)
        report["certified"]["optimum_verified"] = ok
        if not ok:
            raise ResourceLimitError(f"n={n} exceeds the exact solver and the sidecar optimum is not certified")
    else:
        raise ResourceLimitError(f"n={n} exceeds the exact solver guard (n <= 22)")
    report["optimum"] = {"method": how, "cost": num(opt_cost), "structure": opt_P.to_json()}

    # full enumeration when small enough
    code = 0
    if n <= 12:
        try:
            sp = empirical_spoa(inst, mech)
            report["spoa"] = {"stable_count": sp.stable_count, "worst_stable_cost": num(sp.worst_stable_cost),
                              "ratio": num(sp.ratio)}
            stable_costs.append(("enumeration", sp.worst_structure))
        except NoStableStructure as e:
            cyc = e.cycle
            if cyc is None:
                cyc = detect_cyclic_preference(inst, mech, table)
            report["no_stable_structure"] = True
            report["cycle"] = [{"participant": i, "coalition": list(g)} for i, g in cyc] if cyc else None
            code = 2
    if code == 0 and not stable_costs:
        report["error"] = f"no stable structure found ({status})"
        return 1, report

    if stable_costs:
        src, worst = max(stable_costs, key=lambda t: structure_cost(t[1], oracle))
        wc = structure_cost(worst, oracle)
        report["worst_known_stable"] = {"source": src, "cost": num(wc), "structure": worst.to_json()}
        report["ratio"] = num(wc / opt_cost)
        exact = exact_text([oracle.cost(m) for m in worst.masks], [oracle.cost(m) for m in opt_P.masks])
        if exact is not None:
            report["ratio_exact"] = exact
    return code, report


def _text(report: dict) -> str:
    lines = [f"instance {report['instance']}  n={report['n']}  K={report['k']}  mechanism={report['mechanism']}"]
    if "generated_at" in report:
        lines.append(f"generated {report['generated_at']}")
    v = report["validation"]
    lines.append(f"validation ({v['mode']}): {'ok' if v['ok'] else 'VIOLATIONS'}")
    for x in v["violations"]:
        lines.append(f"  {x}")
    d = report["dynamics"]
    lines.append(f"{d['method']}: {d['status']}, cost {d['cost']}")
    for g in d["structure"]:
        pays = ", ".join(f"{p:.12g}" for p in g["payments"]) if g["payments"] else "-"
        lines.append(f"  {g['members']} cost {g['cost']:.12g} payments [{pays}]")
    for key in ("certified", "optimum", "spoa", "worst_known_stable"):
        if key in report:
            lines.append(f"{key}: {json.dumps(report[key])}")
    if report.get("no_stable_structure"):
        lines.append("no stable structure")
        if report.get("cycle"):
            lines.append("cycle: " + " -> ".join(f"{c['participant']}@{c['coalition']}" for c in report["cycle"]))
    if "ratio" in report:
        r = f"ratio {report['ratio']:.12g}"
        if "ratio_exact" in report:
            r += f" = {report['ratio_exact']}"
        lines.append(r)
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    code, report = analyze(args.instance, args.mechanism, args.dynamics, args.max_steps,
                           args.sidecar, timestamp=not args.no_timestamp)
    if args.format == "text":
        out = _text(report)
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerow({"instance_id": report["instance"], "mechanism": report["mechanism"],
                    "k": report["k"], "n": report["n"],
                    "worst_stable": report.get("worst_known_stable", {}).get("cost", ""),
                    "optimum": report["optimum"]["cost"], "ratio": report.get("ratio", ""),
                    "status": {0: "ok", 2: "no-stable"}.get(code, "error")})
        out = buf.getvalue()
    else:
        out = dumps(report)
    _emit(out, args.output)
    return code


def generate(family: str, n: Optional[int] = None, k: Optional[int] = None, s: Optional[int] = None,
             seed: int = 0, geometric: bool = False):
    if family == "equal-tight":
        return gen_equal_tight(k if k is not None else 3)
    if family == "usage-lower":
        return gen_usage_lower(k if k is not None else 3)
    if family == "taxi-cycle":
        return gen_taxi_cycle(s if s is not None else 3, geometric=geometric)
    if family in FAMILIES:
        from .generators import Generated
        return Generated(gen_random(family, n if n is not None else 8, k if k is not None else 3, seed))
    raise ValueError(f"unknown family {family!r}")


def cmd_generate(args) -> int:
    g = generate(args.family, args.n, args.k, args.s, args.seed, args.geometric)
    text = dumps(instance_to_json(g.instance))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        Path(args.out + ".sidecar.json").write_text(dumps(g.sidecar()), encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _expand(v):
    if isinstance(v, dict):
        start = v.get("start", 0)
        return list(range(start, start + v["count"]))
    return v if isinstance(v, list) else [v]


def sweep_jobs(config: dict) -> list[dict]:
    jobs = []
    for run in config.get("runs", []):
        opts = run.get("options", {})
        for fam in _expand(run.get("family", "table")):
            for n in _expand(run["n"]):
                for k in _expand(run["k"]):
                    for mech in _expand(run.get("mechanism", "equal")):
                        for seed in _expand(run.get("seeds", [0])):
                            jobs.append({"family": fam, "n": n, "k": k, "mechanism": mech,
                                         "seed": seed, "options": opts})
    return jobs


def run_job(job: dict) -> dict:
    try:
        inst = gen_random(job["family"], job["n"], job["k"], job["seed"], **job["options"])
    except Exception as e:   # noqa: BLE001 - failures become rows
        return {"instance_id": f"{job['family']}-n{job['n']}-k{job['k']}-s{job['seed']}",
                "mechanism": job["mechanism"], "k": job["k"], "n": job["n"],
                "worst_stable": "", "optimum": "", "ratio": "", "status": f"error: {e}"}
    try:
        return csv_row(inst.name, job["mechanism"], inst, empirical_spoa(inst, job["mechanism"]))
    except NoStableStructure:
        return csv_row(inst.name, job["mechanism"], inst, None, "no-stable")
    except ResourceLimitError as e:
        return csv_row(inst.name, job["mechanism"], inst, None, f"guard: {e}")
    except Exception as e:   # noqa: BLE001
        return csv_row(inst.name, job["mechanism"], inst, None, f"error: {e}")


def summarize(rows: list[dict]) -> list[dict]:
    best: dict[tuple[str, int], float] = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        key = (r["mechanism"], int(r["k"]))
        best[key] = max(best.get(key, 0.0), float(r["ratio"]))
    return [{"mechanism": m, "k": k, "max_ratio": f"{v:.12g}"} for (m, k), v in sorted(best.items())]


def sweep(config: dict, jobs: int = 1) -> list[dict]:
    work = sweep_jobs(config)
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(run_job, work, chunksize=4))
    return [run_job(j) for j in work]


def cmd_sweep(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    rows = sweep(config, args.jobs)
    summary = summarize(rows)
    if args.format == "json":
        out = dumps({"rows": rows, "summary": summary})
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        out = buf.getvalue()
        for s in summary:
            sys.stderr.write(f"max ratio {s['mechanism']} K={s['k']}: {s['max_ratio']}\n")
    _emit(out, args.output)
    return 0


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="capshare", description="Capacitated coalition formation with cost sharing.")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="stability, optimum and price of anarchy for one instance")
    a.add_argument("instance")
    a.add_argument("--mechanism", choices=MECHANISMS, default="equal")
    a.add_argument("--dynamics", choices=["greedy", "improve"], default="greedy")
    a.add_argument("--max-steps", type=int, default=1000)
    a.add_argument("--format", choices=["json", "text", "csv"], default="json")
    a.add_argument("--sidecar", help="certified structures (default: <instance>.sidecar.json if present)")
    a.add_argument("--output", "-o")
    a.add_argument("--no-timestamp", action="store_true")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("generate", help="write a named or random instance plus its sidecar")
    g.add_argument("family", choices=list(NAMED) + list(FAMILIES))
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--s", type=int, help="loop length for taxi-cycle")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--geometric", action="store_true", help="taxi-cycle on a road graph (experimental)")
    g.add_argument("--out", "-o")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sweep", help="empirical price of anarchy over random instances")
    s.add_argument("config")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.add_argument("--output", "-o")
    s.add_argument("--no-timestamp", action="store_true", help="accepted for symmetry; sweeps carry no timestamp")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InstanceFormatError, OracleError, CoalitionError, ResourceLimitError, ValueError,
            OSError, json.JSONDecodeError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
