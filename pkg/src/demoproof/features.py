"""Action-based features over observation vectors and the equivalence
classes used to pool demonstration data.

A feature tuple (f1, f2, f3) summarizes an (observation, action) pair:
f1 counts occupied neighbor cells; f2 and f3 measure, per axis, how far the
action's direction is from the net direction of the occupied cells. Pairs
with equal tuples are treated as interchangeable evidence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple

from demoproof.gridworld import ACTIONS, ACTION_VECTORS, ObsVector
from demoproof.util import canonical_json, sha256_hex

NUM_OBS_VECTORS = 256


@dataclass(frozen=True, order=True)
class FeatureTuple:
    f1: int
    f2: int
    f3: int


def feature(z: ObsVector, action: str) -> FeatureTuple:
    b = z.bits
    ax, ay = ACTION_VECTORS[action]
    f1 = sum(b)
    f2 = abs(ax - (b[0] + b[1] + b[2]) + (b[4] + b[5] + b[6]))
    f3 = abs(ay - (b[0] + b[6] + b[7]) + (b[2] + b[3] + b[4]))
    return FeatureTuple(f1, f2, f3)


def equivalent(z1: ObsVector, a1: str, z2: ObsVector, a2: str) -> bool:
    return feature(z1, a1) == feature(z2, a2)


@lru_cache(maxsize=None)
def equivalence_classes() -> Dict[FeatureTuple, Tuple[Tuple[int, int], ...]]:
    """Partition all 256 x 4 (observation, action) pairs by feature tuple.

    Members are (observation code, action id) pairs; keys iterate in
    lexicographic tuple order and members in (code, action) order.
    """
    buckets: Dict[FeatureTuple, list] = {}
    for code in range(NUM_OBS_VECTORS):
        z = ObsVector.from_code(code)
        for a, action in enumerate(ACTIONS):
            buckets.setdefault(feature(z, action), []).append((code, a))
    return {key: tuple(sorted(buckets[key])) for key in sorted(buckets)}


def class_of(z: ObsVector, action: str) -> Tuple[Tuple[int, int], ...]:
    return equivalence_classes()[feature(z, action)]


def class_table_sha256() -> str:
    obj = [[[t.f1, t.f2, t.f3], [list(m) for m in members]]
           for t, members in equivalence_classes().items()]
    return sha256_hex(canonical_json(obj))


def write_class_table_csv(path) -> None:
    """Dump the class partition for inspection: one row per member pair."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f1", "f2", "f3", "obs_bits", "action"])
        for t, members in equivalence_classes().items():
            for code, a in members:
                writer.writerow([t.f1, t.f2, t.f3,
                                 ObsVector.from_code(code).as_string(), ACTIONS[a]])
