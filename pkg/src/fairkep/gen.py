"""Seeded synthetic instance generation.

Each pair draws a (patient, donor) blood-type pairing and then a patient PRA
(panel reactive antibody) level conditional on that pairing; NDD donors draw a
blood type from the population distribution.  An arc u -> v exists when u's
donor is ABO-compatible with v's patient and an independent uniform draw in
0..100 exceeds v's PRA.  Generation is a pure function of (config, seed).

The shipped default distributions (US census ABO frequencies, uniform PRA
buckets) are placeholders, not calibrated to any registry; override them via
GenConfig or a JSON distribution file.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping

from .core import FairkepError, KepInstance

BLOOD_TYPES = ("O", "A", "B", "AB")

# donor type -> patient types it can give to
ABO_COMPATIBLE = {
    "O": frozenset({"O", "A", "B", "AB"}),
    "A": frozenset({"A", "AB"}),
    "B": frozenset({"B", "AB"}),
    "AB": frozenset({"AB"}),
}

# US census ABO frequencies (placeholder population model)
DEFAULT_BLOOD_DIST = {"O": 0.45, "A": 0.40, "B": 0.11, "AB": 0.04}

DEFAULT_PRA_BUCKETS = {0: 0.2, 25: 0.2, 50: 0.2, 75: 0.2, 95: 0.2}


class InvalidDistribution(FairkepError):
    pass


def _default_pairings() -> dict[tuple[str, str], float]:
    return {
        (p, d): DEFAULT_BLOOD_DIST[p] * DEFAULT_BLOOD_DIST[d]
        for p in BLOOD_TYPES
        for d in BLOOD_TYPES
    }


def _default_pra() -> dict[tuple[str, str], dict[int, float]]:
    return {(p, d): dict(DEFAULT_PRA_BUCKETS) for p in BLOOD_TYPES for d in BLOOD_TYPES}


@dataclass(frozen=True)
class GenConfig:
    n_pairs: int
    n_ndds: int = 0
    blood_pair_distribution: Mapping[tuple[str, str], float] = field(
        default_factory=_default_pairings
    )
    pra_conditional: Mapping[tuple[str, str], Mapping[int, float]] = field(
        default_factory=_default_pra
    )
    donor_bt_distribution: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_BLOOD_DIST)
    )
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 0 or self.n_ndds < 0:
            raise ValueError("n_pairs and n_ndds must be >= 0")
        _check_dist("blood_pair_distribution", self.blood_pair_distribution)
        _check_dist("donor_bt_distribution", self.donor_bt_distribution)
        for pairing, dist in self.pra_conditional.items():
            _check_dist(f"pra_conditional[{pairing}]", dist)


def _check_dist(name: str, dist: Mapping) -> None:
    total = sum(dist.values())
    if abs(total - 1) > 1e-12:
        raise InvalidDistribution(f"{name} sums to {total!r}, not 1")
    if any(p < 0 for p in dist.values()):
        raise InvalidDistribution(f"{name} has a negative probability")


def _draw(rng: random.Random, dist: Mapping):
    x = rng.random()
    acc = 0.0
    items = sorted(dist.items(), key=lambda kv: repr(kv[0]))
    for key, p in items:
        acc += p
        if x < acc:
            return key
    return items[-1][0]


def generate_instance(config: GenConfig) -> KepInstance:
    """Deterministic instance for (config, config.seed).

    Node ids: pairs 0..n_pairs-1, NDDs n_pairs..n_pairs+n_ndds-1.  Blood types
    and PRA levels are recorded in instance.attributes.  All node attributes
    are drawn before any compatibility test, so two configs differing only in
    PRA values share their test uniforms (coupled draws).
    """
    rng = random.Random(config.seed)
    pairs = list(range(config.n_pairs))
    ndds = list(range(config.n_pairs, config.n_pairs + config.n_ndds))
    attributes: dict[int, dict] = {}
    patient_bt: dict[int, str] = {}
    donor_bt: dict[int, str] = {}
    pra: dict[int, int] = {}
    for v in pairs:
        p_bt, d_bt = _draw(rng, config.blood_pair_distribution)
        pra_v = _draw(rng, config.pra_conditional[(p_bt, d_bt)])
        patient_bt[v], donor_bt[v], pra[v] = p_bt, d_bt, pra_v
        attributes[v] = {"blood_patient": p_bt, "blood_donor": d_bt, "pra": pra_v}
    for a in ndds:
        donor_bt[a] = _draw(rng, config.donor_bt_distribution)
        attributes[a] = {"blood_donor": donor_bt[a]}
    arcs: dict[tuple[int, int], Fraction] = {}
    for u in pairs + ndds:
        for v in pairs:
            if u == v or patient_bt[v] not in ABO_COMPATIBLE[donor_bt[u]]:
                continue
            if rng.uniform(0, 100) > pra[v]:
                arcs[(u, v)] = Fraction(1)
    return KepInstance(
        pairs=frozenset(pairs), ndds=frozenset(ndds), arcs=arcs, attributes=attributes
    )


def generate_batches(config: GenConfig, n_batches: int, seed: int | None = None) -> list[KepInstance]:
    """n_batches independent instances; batch i uses sub-seed (seed xor i)."""
    base = config.seed if seed is None else seed
    return [generate_instance(replace(config, seed=base ^ i)) for i in range(n_batches)]
