"""JSON serialization of instances and lotteries; rationals as "num/den" strings."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any

from .core import Chain, Cycle, FairkepError, KepInstance, Lottery, Packing


class ParseError(FairkepError):
    pass


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(s: Any, where: str = "") -> Fraction:
    try:
        if isinstance(s, str):
            return Fraction(s)
        if isinstance(s, int):
            return Fraction(s)
    except (ValueError, ZeroDivisionError) as e:
        raise ParseError(f"bad rational {s!r} {where}: {e}") from None
    raise ParseError(f"bad rational {s!r} {where}: expected \"num/den\" string or int")


def instance_to_dict(instance: KepInstance) -> dict:
    pairs = []
    for v in sorted(instance.pairs):
        rec: dict[str, Any] = {"id": v}
        rec.update(instance.attributes.get(v, {}))
        if v in instance.node_weights:
            rec["weight"] = format_rational(instance.node_weights[v])
        pairs.append(rec)
    ndds = []
    for v in sorted(instance.ndds):
        rec = {"id": v}
        rec.update(instance.attributes.get(v, {}))
        ndds.append(rec)
    arcs = [
        {"from": u, "to": v, "weight": format_rational(w)}
        for (u, v), w in sorted(instance.arcs.items())
    ]
    return {"pairs": pairs, "ndds": ndds, "arcs": arcs}


def instance_from_dict(data: dict) -> KepInstance:
    try:
        pair_recs = data["pairs"]
        ndd_recs = data.get("ndds", [])
        arc_recs = data.get("arcs", [])
    except (TypeError, KeyError) as e:
        raise ParseError(f"malformed instance object: {e}") from None
    pairs, ndds = set(), set()
    attributes: dict[int, dict] = {}
    node_weights: dict[int, Fraction] = {}
    for rec in pair_recs:
        v = int(rec["id"])
        if v in pairs:
            raise ParseError(f"duplicate pair id {v}")
        pairs.add(v)
        attrs = {k: rec[k] for k in ("blood_patient", "blood_donor", "pra") if k in rec}
        if attrs:
            attributes[v] = attrs
        if "weight" in rec:
            node_weights[v] = parse_rational(rec["weight"], f"in pair {v}")
    for rec in ndd_recs:
        v = int(rec["id"])
        if v in pairs or v in ndds:
            raise ParseError(f"duplicate node id {v}")
        ndds.add(v)
        attrs = {k: rec[k] for k in ("blood_donor",) if k in rec}
        if attrs:
            attributes[v] = attrs
    arcs: dict[tuple[int, int], Fraction] = {}
    for i, rec in enumerate(arc_recs):
        try:
            u, v = int(rec["from"]), int(rec["to"])
        except (TypeError, KeyError) as e:
            raise ParseError(f"malformed arc #{i}: {e}") from None
        w = parse_rational(rec.get("weight", 1), f"in arc #{i}")
        if (u, v) in arcs:
            raise ParseError(f"duplicate arc ({u},{v})")
        arcs[(u, v)] = w
    try:
        return KepInstance(
            pairs=frozenset(pairs),
            ndds=frozenset(ndds),
            arcs=arcs,
            node_weights=node_weights,
            attributes=attributes,
        )
    except ValueError as e:
        raise ParseError(str(e)) from None


def _structure_to_list(s) -> list:
    if isinstance(s, Cycle):
        return ["cycle", *s.vertices]
    return ["chain", s.ndd, *s.pairs]


def _structure_from_list(item: list):
    try:
        kind = item[0]
        if kind == "cycle":
            return Cycle(tuple(int(v) for v in item[1:]))
        if kind == "chain":
            return Chain(int(item[1]), tuple(int(v) for v in item[2:]))
    except (IndexError, ValueError, TypeError) as e:
        raise ParseError(f"malformed structure {item!r}: {e}") from None
    raise ParseError(f"unknown structure kind {kind!r}")


def lottery_to_dict(lottery: Lottery) -> dict:
    return {
        "support": [
            {
                "packing": [_structure_to_list(s) for s in packing.sorted_structures()],
                "prob": format_rational(p),
            }
            for packing, p in lottery.support
        ]
    }


def lottery_from_dict(data: dict) -> Lottery:
    try:
        entries = data["support"]
    except (TypeError, KeyError):
        raise ParseError("lottery object must have a 'support' list") from None
    support = []
    for i, rec in enumerate(entries):
        structures = frozenset(_structure_from_list(s) for s in rec.get("packing", []))
        p = parse_rational(rec.get("prob"), f"in support entry #{i}")
        support.append((Packing(structures), p))
    total = sum((p for _, p in support), Fraction(0))
    if total != 1:
        raise ParseError(f"SumNotOne: probabilities sum to {total}")
    if any(p < 0 for _, p in support):
        raise ParseError("negative probability")
    return Lottery(tuple(support))


def read_instance(path) -> KepInstance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: {e}") from None
    return instance_from_dict(data)


def write_instance(instance: KepInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=2) + "\n")


def read_lottery(path) -> Lottery:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: {e}") from None
    return lottery_from_dict(data)


def write_lottery(lottery: Lottery, path) -> None:
    Path(path).write_text(json.dumps(lottery_to_dict(lottery), indent=2) + "\n")
