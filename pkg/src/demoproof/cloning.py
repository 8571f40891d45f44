"""Turn a training set into an observation-based randomized strategy.

The evidence for choosing action a at observation z is pooled over the whole
feature-equivalence class of (z, a): every class member contributes its
empirical frequency at its own observation. Members whose observation has no
data contribute nothing, and the per-action aggregates are normalized into a
distribution. Observations with no evidence anywhere fall back to uniform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from demoproof.features import NUM_OBS_VECTORS, equivalence_classes, class_table_sha256, feature
from demoproof.gridworld import ACTIONS, CRASH_OBS, ObsVector
from demoproof.models import Distribution, ObservationStrategy, Pomdp
from demoproof.training import TrainingSet
from demoproof.util import canonical_json, float_str, sha256_hex

StrategyTable = Dict[str, Dict[str, float]]


def _class_sums(ts: TrainingSet) -> Dict:
    """Per feature class, the summed empirical ratios of members with data."""
    totals = {z: ts.total_for(z) for z in ts.observations()}
    sums: Dict = {}
    for tup, members in equivalence_classes().items():
        acc = 0.0
        for code, a in members:
            z = ObsVector.from_code(code).as_string()
            total = totals.get(z, 0)
            if total > 0:
                acc += ts.count(z, ACTIONS[a]) / total
        sums[tup] = acc
    return sums


def clone_table(ts: TrainingSet) -> StrategyTable:
    """Environment-independent strategy over all 256 observation vectors."""
    sums = _class_sums(ts)
    table: StrategyTable = {}
    for code in range(NUM_OBS_VECTORS):
        z = ObsVector.from_code(code)
        weights = [sums[feature(z, a)] for a in ACTIONS]
        total = math.fsum(weights)
        if total <= 0.0:
            row = {a: 1.0 / len(ACTIONS) for a in ACTIONS}
        else:
            row = {a: w / total for a, w in zip(ACTIONS, weights)}
        table[z.as_string()] = row
    return table


def row_distribution(row: Dict[str, float], actions: Tuple[str, ...]) -> Distribution:
    index = {name: i for i, name in enumerate(actions)}
    return Distribution({index[a]: p for a, p in row.items() if p > 0.0})


def strategy_for(pomdp: Pomdp, table: StrategyTable) -> ObservationStrategy:
    """Restrict a strategy table to one POMDP's observation alphabet.

    Observation names that are not 8-bit vectors (the crash sink) or are
    missing from the table get a uniform row over the enabled actions.
    """
    actions = pomdp.mdp.actions
    rows: List[Distribution] = []
    for z, name in enumerate(pomdp.observations):
        row = table.get(name)
        if row:
            rows.append(row_distribution(row, actions))
            continue
        pre = pomdp.preimage(z)
        enabled = pomdp.mdp.enabled(pre[0]) if pre else tuple(range(len(actions)))
        rows.append(Distribution.uniform(enabled))
    return ObservationStrategy(choice=tuple(rows))


def initial_strategy(ts: TrainingSet, pomdp: Pomdp) -> ObservationStrategy:
    """Clone a strategy for one POMDP straight from the training set."""
    return strategy_for(pomdp, clone_table(ts))


def table_from_strategy(pomdp: Pomdp, strategy: ObservationStrategy) -> StrategyTable:
    actions = pomdp.mdp.actions
    table: StrategyTable = {}
    for z, name in enumerate(pomdp.observations):
        if name == CRASH_OBS:
            continue
        table[name] = {actions[a]: p for a, p in strategy.choice[z]}
    return table


@dataclass(frozen=True)
class RowEntropy:
    obs: int
    entropy_bits: float
    exactly_uniform: bool


def strategy_entropy_report(strategy: ObservationStrategy) -> List[RowEntropy]:
    """Entropy per observation row, flagging exactly uniform rows: a quick
    view of where the strategy is still underspecified."""
    report = []
    for z, dist in enumerate(strategy.choice):
        probs = [p for _, p in dist.entries]
        h = -math.fsum(p * math.log2(p) for p in probs if p > 0.0)
        uniform = len(set(probs)) == 1 and len(probs) > 1
        report.append(RowEntropy(obs=z, entropy_bits=h, exactly_uniform=uniform))
    return report


# --- strategy files -----------------------------------------------------------


def table_to_obj(table: StrategyTable, provenance: Optional[dict] = None) -> dict:
    choices = {
        z: {a: float_str(p) for a, p in sorted(row.items()) if p != 0.0}
        for z, row in sorted(table.items())
    }
    return {
        "v": 1,
        "actions": list(ACTIONS),
        "choices": choices,
        "provenance": provenance or {},
    }


def table_from_obj(obj: dict) -> StrategyTable:
    return {z: {a: float(p) for a, p in row.items()}
            for z, row in obj["choices"].items()}


def provenance_for(ts: TrainingSet) -> dict:
    return {
        "training_set_sha256": ts.sha256(),
        "class_table_sha256": class_table_sha256(),
    }


def dumps_table(table: StrategyTable, provenance: Optional[dict] = None) -> str:
    return canonical_json(table_to_obj(table, provenance)) + "\n"


def save_strategy(path, table: StrategyTable, provenance: Optional[dict] = None) -> None:
    Path(path).write_text(dumps_table(table, provenance), encoding="utf-8")


def load_strategy(path) -> StrategyTable:
    return table_from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def strategy_sha256(table: StrategyTable) -> str:
    """Content hash of the canonical strategy payload (provenance excluded)."""
    return sha256_hex(canonical_json(table_to_obj(table)["choices"]))
