"""Explicit-state model files.

A model is a single JSON document:

    {
      "v": 1,
      "kind": "pomdp" | "mc" | "mdp",
      "states": [{"name": "...", "obs": "..."}, ...],   # "obs" on POMDPs only
      "initial": 0,
      "actions": ["left", ...],
      "observations": ["00000000", ...],                 # POMDPs only
      "transitions": [[state, action, [[target, "0.25"], ...]], ...],
      "labels": {"goal": [ids], "bad": [ids]}
    }

Probabilities are serialized as shortest round-tripping decimal strings
(at most 17 significant digits), so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Mapping, Tuple, Union

from demoproof.models import Distribution, Mc, Mdp, ModelError, Pomdp
from demoproof.util import float_str

SCHEMA_VERSION = 1

Model = Union[Pomdp, Mdp, Mc]


def model_to_obj(model: Model, labels: Mapping[str, Tuple[int, ...]] | None = None) -> dict:
    labels = labels or {}
    if isinstance(model, Pomdp):
        kind, mdp = "pomdp", model.mdp
    elif isinstance(model, Mdp):
        kind, mdp = "mdp", model
    elif isinstance(model, Mc):
        kind, mdp = "mc", model.to_mdp()
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")

    states = []
    for s, name in enumerate(mdp.states):
        entry: dict = {"name": name}
        if kind == "pomdp":
            entry["obs"] = model.observations[model.obs_map[s]]
        states.append(entry)

    transitions = []
    for s in range(mdp.num_states):
        for a in sorted(mdp.transitions[s].keys()):
            pairs = [[t, float_str(p)] for t, p in mdp.transitions[s][a].entries]
            transitions.append([s, a, pairs])

    obj = {
        "v": SCHEMA_VERSION,
        "kind": kind,
        "states": states,
        "initial": mdp.initial,
        "actions": list(mdp.actions),
        "transitions": transitions,
        "labels": {name: sorted(ids) for name, ids in sorted(labels.items())},
    }
    if kind == "pomdp":
        obj["observations"] = list(model.observations)
    return obj


def model_from_obj(obj: dict) -> Tuple[Model, Dict[str, Tuple[int, ...]]]:
    if obj.get("v") != SCHEMA_VERSION:
        raise ModelError(f"unsupported model schema version {obj.get('v')!r}")
    kind = obj["kind"]
    names = tuple(entry["name"] for entry in obj["states"])
    actions = tuple(obj["actions"])
    rows: list = [dict() for _ in names]
    for s, a, pairs in obj["transitions"]:
        rows[s][a] = Distribution({int(t): float(p) for t, p in pairs})
    mdp = Mdp(states=names, initial=int(obj["initial"]), actions=actions,
              transitions=tuple(rows))
    labels = {name: tuple(ids) for name, ids in obj.get("labels", {}).items()}
    if kind == "mdp":
        return mdp, labels
    if kind == "mc":
        chain = Mc(states=names, initial=mdp.initial,
                   transitions=tuple(rows[s][0] for s in range(len(names))))
        return chain, labels
    if kind == "pomdp":
        observations = tuple(obj["observations"])
        index = {name: i for i, name in enumerate(observations)}
        obs_map = tuple(index[entry["obs"]] for entry in obj["states"])
        return Pomdp(mdp=mdp, observations=observations, obs_map=obs_map), labels
    raise ModelError(f"unknown model kind {kind!r}")


def dumps_model(model: Model, labels=None) -> str:
    return json.dumps(model_to_obj(model, labels), sort_keys=True,
                      separators=(",", ":")) + "\n"


def save_model(path, model: Model, labels=None) -> None:
    Path(path).write_text(dumps_model(model, labels), encoding="utf-8")


def load_model(path) -> Tuple[Model, Dict[str, Tuple[int, ...]]]:
    return model_from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
