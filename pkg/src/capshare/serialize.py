"""Instance files: JSON in, JSON out."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .core import (CostOracle, ExplicitCostTable, Instance, OracleError, Resource,
                   ResourceTable, SharedFacilityOracle, to_mask)
from .domains import HotelOracle, PassOracle, Passenger, TaxiOracle, Traveler


class InstanceFormatError(ValueError):
    pass


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def instance_to_json(instance: Instance) -> dict:
    out = {"n": instance.n, "k": instance.k}
    if instance.name:
        out["name"] = instance.name
    out["oracle"] = instance.oracle.to_json()
    return out


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(dumps(instance_to_json(instance)), encoding="utf-8")


def load_instance(path) -> Instance:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return instance_from_json(data, source=str(path))


def _need(d, key, where, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise InstanceFormatError(f"{where}: missing field {key!r}")
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise InstanceFormatError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
    return v


def _number(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InstanceFormatError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def _members(v, n, where) -> list[int]:
    if not isinstance(v, list) or not v or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise InstanceFormatError(f"{where}: expected a non-empty list of participant indices")
    if len(set(v)) != len(v) or min(v) < 0 or max(v) >= n:
        raise InstanceFormatError(f"{where}: participants must be distinct and in 0..{n - 1}")
    return v


def oracle_from_json(d: dict, n: int, k: int, where: str = "oracle") -> CostOracle:
    kind = _need(d, "kind", where, str)
    try:
        if kind == "table":
            entries = {}
            for j, e in enumerate(_need(d, "entries", where, list)):
                w = f"{where}.entries[{j}]"
                m = to_mask(_members(_need(e, "members", w), n, w + ".members"))
                if m in entries:
                    raise InstanceFormatError(f"{w}: duplicate coalition")
                entries[m] = _number(_need(e, "cost", w), w + ".cost")
            return ExplicitCostTable(n, entries, d.get("completion", "none"), k=k)
        if kind == "usage":
            table = {}
            for j, e in enumerate(_need(d, "resources", where, list)):
                w = f"{where}.resources[{j}]"
                members = _members(_need(e, "members", w), n, w + ".members")
                facilities, usage = [], {i: set() for i in members}
                for q, f in enumerate(_need(e, "facilities", w, list)):
                    wf = f"{w}.facilities[{q}]"
                    facilities.append((q, _number(_need(f, "cost", wf), wf + ".cost")))
                    for i in _need(f, "users", wf, list):
                        if i not in usage:
                            raise InstanceFormatError(f"{wf}.users: {i} is not a member")
                        usage[i].add(q)
                table[to_mask(members)] = Resource(sum(c for _, c in facilities), tuple(facilities),
                                                   {i: frozenset(u) for i, u in usage.items()})
            return ResourceTable(n, table, d.get("completion", "none"), k=k)
        if kind == "shared":
            return SharedFacilityOracle(oracle_from_json(_need(d, "base", where, dict), n, k, where + ".base"))
        if kind == "hotel":
            travelers = []
            for j, t in enumerate(_need(d, "travelers", where, list)):
                w = f"{where}.travelers[{j}]"
                travelers.append(Traveler(int(_need(t, "t_in", w, int)), int(_need(t, "t_out", w, int)),
                                          frozenset(_need(t, "areas", w, list))))
            rates = {int(a): [_number(x, f"{where}.rates.{a}") for x in r]
                     for a, r in _need(d, "rates", where, dict).items()}
            return HotelOracle(travelers, rates)
        if kind == "taxi":
            ps = []
            for j, p in enumerate(_need(d, "passengers", where, list)):
                w = f"{where}.passengers[{j}]"
                ps.append(Passenger(_need(p, "source", w, int), _need(p, "dest", w, int),
                                    _number(_need(p, "earliest", w), w + ".earliest"),
                                    _number(_need(p, "latest", w), w + ".latest")))
            edges = []
            for j, e in enumerate(_need(d, "edges", where, list)):
                w = f"{where}.edges[{j}]"
                edges.append((_need(e, "u", w, int), _need(e, "v", w, int),
                              _number(_need(e, "fare", w), w + ".fare"), _number(_need(e, "time", w), w + ".time")))
            return TaxiOracle(ps, edges)
        if kind == "pass":
            return PassOracle(_need(d, "users", where, list), _need(d, "passes", where, list),
                              _number(d.get("rate", 1.0), where + ".rate"))
    except OracleError as e:
        raise InstanceFormatError(f"{where}: {e}") from None
    raise InstanceFormatError(f"{where}.kind: unknown oracle kind {kind!r}")


def instance_from_json(data: dict, source: str = "instance") -> Instance:
    n = _need(data, "n", source, int)
    k = _need(data, "k", source, int)
    if n < 1:
        raise InstanceFormatError(f"{source}.n: must be >= 1")
    if k < 1:
        raise InstanceFormatError(f"{source}.k: must be >= 1")
    oracle = oracle_from_json(_need(data, "oracle", source, dict), n, k, f"{source}.oracle")
    if oracle.n != n:
        raise InstanceFormatError(f"{source}: oracle describes {oracle.n} participants, n is {n}")
    return Instance(oracle, k, name=data.get("name", ""))
