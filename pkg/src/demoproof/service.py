"""HTTP/WebSocket service: scenarios, live demonstration sessions, strategies,
checks, and counterexample-guided refinement rounds.

Storage is plain files under one data directory, content-addressed by
SHA-256; scenario ids are registry entries pointing at payload files, so
posting the same config twice yields two ids over one payload. Session
frames expose only what a human operator may see: the known static map, the
observation bits and the step counter, never the true agent or obstacle
position. Checks and refinement run as background jobs polled by id.
"""

from __future__ import annotations

import json
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse, Response

from demoproof.cloning import (
    clone_table,
    provenance_for,
    strategy_for,
    table_from_obj,
    table_from_strategy,
    table_to_obj,
)
from demoproof.fixtures import tradeoff_pomdp, tradeoff_spec, tradeoff_strategy
from demoproof.gridworld import (
    ACTIONS,
    EVENT_GOAL,
    EVENT_NONE,
    GridState,
    RANDOM_START,
    ScenarioConfig,
    ScenarioModel,
    ScenarioRanges,
    build_pomdp,
    classify,
    observe,
    random_scenario,
    simulate_step,
)
from demoproof.models import EXPECTED_COST, ModelError, REACH_AVOID, Spec, induce_mc
from demoproof.refine import (
    NoCounterexampleNeeded,
    bayes_update,
    critical_states,
    refinement_weight,
)
from demoproof.training import (
    OUTCOME_ABORT,
    OUTCOME_CRASH,
    OUTCOME_GOAL,
    TrainingSet,
    Trajectory,
    TrajectoryStep,
    record,
)
from demoproof.util import canonical_json, derive_seed, sha256_hex
from demoproof.verify import check_spec, heatmap

VERSION = 1


@dataclass
class Session:
    session_id: str
    scenario_id: str
    model: ScenarioModel
    state: GridState
    env_rng: random.Random
    seed: int
    round_id: Optional[str] = None
    steps: List[TrajectoryStep] = field(default_factory=list)
    open: bool = True
    terminal: Optional[str] = None


class Store:
    """Content-addressed JSON files plus the scenario id registry."""

    def __init__(self, root: Path):
        self.root = Path(root)
        for sub in ("scenarios", "strategies", "trajectories", "results",
                    "rounds"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.registry_path = self.root / "scenarios" / "registry.json"

    def put(self, kind: str, obj: dict) -> str:
        text = canonical_json(obj) + "\n"
        sha = sha256_hex(text)
        path = self.root / kind / f"{sha}.json"
        if not path.exists():
            path.write_text(text, encoding="utf-8")
        return sha

    def get(self, kind: str, sha: str) -> dict:
        path = self.root / kind / f"{sha}.json"
        if not path.exists():
            raise KeyError(sha)
        return json.loads(path.read_text(encoding="utf-8"))

    def get_bytes(self, kind: str, sha: str) -> bytes:
        path = self.root / kind / f"{sha}.json"
        if not path.exists():
            raise KeyError(sha)
        return path.read_bytes()

    def put_named(self, kind: str, name: str, obj: dict) -> None:
        path = self.root / kind / f"{name}.json"
        path.write_text(canonical_json(obj) + "\n", encoding="utf-8")

    def get_named(self, kind: str, name: str) -> dict:
        path = self.root / kind / f"{name}.json"
        if not path.exists():
            raise KeyError(name)
        return json.loads(path.read_text(encoding="utf-8"))

    def registry(self) -> dict:
        if self.registry_path.exists():
            return json.loads(self.registry_path.read_text(encoding="utf-8"))
        return {"next": 1, "ids": {}}

    def register_scenario(self, sha: str) -> str:
        reg = self.registry()
        scenario_id = f"s-{reg['next']:06d}"
        reg["next"] += 1
        reg["ids"][scenario_id] = sha
        self.registry_path.write_text(canonical_json(reg) + "\n",
                                      encoding="utf-8")
        return scenario_id

    def scenario_sha(self, scenario_id: str) -> str:
        sha = self.registry()["ids"].get(scenario_id)
        if sha is None:
            raise KeyError(scenario_id)
        return sha


def _spec_from_obj(obj: dict) -> dict:
    kind = obj.get("kind", REACH_AVOID)
    if kind not in (REACH_AVOID, EXPECTED_COST):
        raise ModelError(f"unknown spec kind {kind!r}")
    return {"kind": kind, "threshold": float(obj.get("threshold", 0.9))}


def create_app(data_dir: Path) -> FastAPI:
    app = FastAPI(title="demoproof", version="0.1.0")
    store = Store(Path(data_dir))
    lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=2)

    sessions: Dict[str, Session] = {}
    jobs: Dict[str, dict] = {}
    counters = {"session": 0, "job": 0, "round": 0}
    tally = {OUTCOME_GOAL: 0, OUTCOME_CRASH: 0, OUTCOME_ABORT: 0}
    models: Dict[str, ScenarioModel] = {}

    training = TrainingSet()
    for path in sorted((store.root / "trajectories").glob("*.json")):
        try:
            training = record(training, Trajectory.from_obj(
                json.loads(path.read_text(encoding="utf-8"))))
        except (ModelError, KeyError, ValueError):
            continue

    def model_for(scenario_id: str) -> ScenarioModel:
        sha = store.scenario_sha(scenario_id)
        model = models.get(sha)
        if model is None:
            config = ScenarioConfig.from_obj(store.get("scenarios", sha))
            start = config.free_positions()[0] \
                if config.agent_start == RANDOM_START else None
            model = build_pomdp(config, agent_start=start)
            models[sha] = model
        return model

    def frame(session: Session) -> dict:
        config = session.model.config
        return {
            "v": VERSION,
            "session_id": session.session_id,
            "step": len(session.steps),
            "obs": observe(session.state, config).as_string(),
            "known_map": {
                "width": config.width,
                "height": config.height,
                "landmarks": sorted(list(p) for p in config.landmarks),
                "goal": list(config.goal),
            },
            "terminal": session.terminal,
            "tally": dict(tally),
        }

    def finish_session(session: Session, outcome: str) -> None:
        nonlocal training
        session.open = False
        trajectory = Trajectory(
            scenario=session.model.config, steps=tuple(session.steps),
            outcome=outcome, session_id=session.session_id, seed=session.seed)
        store.put_named("trajectories", session.session_id,
                        trajectory.to_obj())
        tally[outcome] += 1
        if outcome != OUTCOME_ABORT:
            training = record(training, trajectory)
        if session.round_id and outcome == OUTCOME_GOAL:
            apply_round_update(session, trajectory)

    def apply_round_update(session: Session, trajectory: Trajectory) -> None:
        try:
            round_obj = store.get_named("rounds", session.round_id)
        except KeyError:
            return
        result = store.get("results", round_obj["result_sha"])
        per_state = result.get("per_state")
        if per_state is None:
            return
        model = session.model
        pomdp = model.pomdp
        obs_index = {name: z for z, name in enumerate(pomdp.observations)}
        action_index = {name: a for a, name in enumerate(pomdp.mdp.actions)}
        sigma = strategy_for(
            pomdp, table_from_obj(store.get("strategies",
                                            round_obj["strategy_id"])))
        last: Dict[str, str] = {}
        for step in trajectory.steps:
            last[step.obs] = step.action
        for obs_name, action_name in sorted(last.items()):
            z = obs_index.get(obs_name)
            if z is None:
                continue
            weights = refinement_weight(pomdp, z, action_index[action_name],
                                        per_state)
            sigma = bayes_update(sigma, z, action_index[action_name], weights)
        table = table_from_strategy(pomdp, sigma)
        strategy_id = store.put("strategies", table_to_obj(table))
        round_obj["strategy_id"] = strategy_id
        round_obj["completed"] = round_obj.get("completed", []) + [
            session.session_id]
        store.put_named("rounds", session.round_id, round_obj)

    def submit(fn, *args) -> str:
        with lock:
            counters["job"] += 1
            job_id = f"j-{counters['job']:06d}"
        jobs[job_id] = {"job_id": job_id, "status": "pending"}

        def run():
            try:
                jobs[job_id].update(status="done", result=fn(*args))
            except NoCounterexampleNeeded as err:
                jobs[job_id].update(status="error", code=409,
                                    error=type(err).__name__,
                                    message=str(err))
            except (ModelError, KeyError) as err:
                jobs[job_id].update(status="error", code=422,
                                    error=type(err).__name__,
                                    message=str(err))
        executor.submit(run)
        return job_id

    def run_check(strategy_id: str, scenario_id: str, spec_obj: dict,
                  keep_states: bool) -> dict:
        if scenario_id == "fixture:tradeoff":
            pomdp = tradeoff_pomdp()
            p = float(spec_obj.get("p", 1.0))
            mc = induce_mc(pomdp, tradeoff_strategy(p))
            spec = tradeoff_spec(spec_obj["threshold"])
        else:
            model = model_for(scenario_id)
            pomdp = model.pomdp
            table = table_from_obj(store.get("strategies", strategy_id))
            mc = induce_mc(pomdp, strategy_for(pomdp, table))
            spec = Spec(kind=spec_obj["kind"], bad=model.bad, goal=model.goal,
                        threshold=spec_obj["threshold"])
        res = check_spec(mc, spec, with_cost=True)
        payload = {
            "v": VERSION,
            "strategy_id": strategy_id,
            "scenario_id": scenario_id,
            "spec": spec_obj,
            "value_at_initial": res.value_at_initial,
            "conditional_expected_cost": res.conditional_expected_cost,
            "verdict": res.verdict,
            "residual": res.residual,
            "iterations": res.iterations,
            "states": mc.num_states,
        }
        if keep_states:
            payload["per_state"] = [float(x) for x in res.per_state_prob]
        result_sha = store.put("results", payload)
        public = {k: v for k, v in payload.items() if k != "per_state"}
        public["result_id"] = result_sha
        return public

    def run_refine(strategy_id: str, scenario_id: str, spec_obj: dict,
                   k: int) -> dict:
        model = model_for(scenario_id)
        pomdp = model.pomdp
        table = table_from_obj(store.get("strategies", strategy_id))
        mc = induce_mc(pomdp, strategy_for(pomdp, table))
        spec = Spec(kind=spec_obj["kind"], bad=model.bad, goal=model.goal,
                    threshold=spec_obj["threshold"])
        res = check_spec(mc, spec, with_cost=True)
        cx = critical_states(mc, res, spec, k, strategy_snapshot=strategy_id)
        result_sha = store.put("results", {
            "v": VERSION,
            "strategy_id": strategy_id,
            "scenario_id": scenario_id,
            "spec": spec_obj,
            "value_at_initial": res.value_at_initial,
            "conditional_expected_cost": res.conditional_expected_cost,
            "verdict": res.verdict,
            "residual": res.residual,
            "iterations": res.iterations,
            "states": mc.num_states,
            "per_state": [float(x) for x in res.per_state_prob],
        })
        result = {"value_at_initial": res.value_at_initial,
                  "verdict": res.verdict, "result_id": result_sha}
        with lock:
            counters["round"] += 1
            round_id = f"r-{counters['round']:06d}"
        store.put_named("rounds", round_id, {
            "v": VERSION,
            "round_id": round_id,
            "scenario_id": scenario_id,
            "strategy_id": strategy_id,
            "spec": spec_obj,
            "critical": list(cx.critical_states),
            "result_sha": result["result_id"],
            "completed": [],
        })
        return {
            "round_id": round_id,
            "value": result["value_at_initial"],
            "verdict": result["verdict"],
            "critical": [{"state_id": s} for s in cx.critical_states],
            "sessions_suggested": len(cx.critical_states),
        }

    def run_recheck(round_id: str) -> dict:
        round_obj = store.get_named("rounds", round_id)
        result = run_check(round_obj["strategy_id"], round_obj["scenario_id"],
                           round_obj["spec"], keep_states=True)
        round_obj["result_sha"] = result["result_id"]
        store.put_named("rounds", round_id, round_obj)
        result["round_id"] = round_id
        result["strategy_id"] = round_obj["strategy_id"]
        return result

    # --- scenarios -----------------------------------------------------------

    @app.get("/v1/health")
    def health():
        return {"v": VERSION, "ok": True}

    @app.post("/v1/scenarios", status_code=201)
    def post_scenario(body: dict):
        try:
            if "config" in body:
                config = ScenarioConfig.from_obj(body["config"])
            elif "sample" in body:
                sample = body["sample"] or {}
                ranges = ScenarioRanges(
                    width=tuple(sample.get("width", (4, 11))),
                    height=tuple(sample.get("height", (4, 11))),
                    num_landmarks=tuple(sample.get("num_landmarks", (1, 1))),
                    random_start=bool(sample.get("random_start", False)))
                config = random_scenario(
                    random.Random(int(body.get("seed", 0))), ranges)
            else:
                raise ModelError("body needs 'config' or 'sample'")
        except (ModelError, KeyError, TypeError, ValueError) as err:
            raise HTTPException(status_code=422, detail=str(err))
        sha = store.put("scenarios", config.to_obj())
        scenario_id = store.register_scenario(sha)
        return {"scenario_id": scenario_id, "sha256": sha,
                "config": config.to_obj()}

    @app.get("/v1/scenarios/{scenario_id}")
    def get_scenario(scenario_id: str):
        try:
            sha = store.scenario_sha(scenario_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown scenario")
        return {"scenario_id": scenario_id, "sha256": sha,
                "config": store.get("scenarios", sha)}

    # --- sessions ------------------------------------------------------------

    def act(session: Session, action: str) -> dict:
        if action not in ACTIONS:
            raise HTTPException(status_code=400,
                                detail=f"unknown action {action!r}")
        with lock:
            if not session.open:
                raise HTTPException(status_code=409, detail="session closed")
            config = session.model.config
            z = observe(session.state, config).as_string()
            nxt, event = simulate_step(session.state, action, config,
                                       session.env_rng)
            session.steps.append(TrajectoryStep(
                state=session.state, obs=z, action=action, event=event))
            session.state = nxt
            if event != EVENT_NONE:
                session.terminal = event
                outcome = OUTCOME_GOAL if event == EVENT_GOAL else OUTCOME_CRASH
                finish_session(session, outcome)
            return frame(session)

    @app.post("/v1/sessions", status_code=201)
    def post_session(body: dict):
        scenario_id = body.get("scenario_id", "")
        mode = body.get("mode", "fresh")
        try:
            model = model_for(scenario_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown scenario")
        config = model.config
        with lock:
            counters["session"] += 1
            n = counters["session"]
        session_id = f"sess-{n:06d}"
        seed = derive_seed("session", config.rng_seed, n)
        env_rng = random.Random(derive_seed("env", seed))
        if mode == "immersion":
            state_id = body.get("state_id")
            if not isinstance(state_id, int) or \
                    not (0 <= state_id < model.num_states):
                raise HTTPException(status_code=404, detail="unknown state")
            state = model.grid_states[state_id]
            if state is None or classify(state, config) != EVENT_NONE:
                raise HTTPException(status_code=422,
                                    detail="state is terminal")
        elif mode == "fresh":
            if config.agent_start == RANDOM_START:
                free = config.free_positions()
                agent = free[env_rng.randrange(len(free))]
            else:
                agent = config.agent_start
            state = GridState(agent=agent, obstacle=config.obstacle_start)
        else:
            raise HTTPException(status_code=422, detail="unknown mode")
        session = Session(session_id=session_id, scenario_id=scenario_id,
                          model=model, state=state, env_rng=env_rng,
                          seed=seed, round_id=body.get("round_id"))
        sessions[session_id] = session
        return {"session_id": session_id, "frame": frame(session)}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return {"session_id": session_id, "frame": frame(session)}

    @app.post("/v1/sessions/{session_id}/act")
    def post_act(session_id: str, body: dict):
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return {"frame": act(session, body.get("action", ""))}

    @app.websocket("/v1/sessions/{session_id}/ws")
    async def session_ws(ws: WebSocket, session_id: str):
        await ws.accept()
        session = sessions.get(session_id)
        if session is None:
            await ws.send_json({"v": VERSION, "error": "unknown session"})
            await ws.close()
            return
        await ws.send_json(frame(session))
        try:
            while True:
                message = await ws.receive_json()
                action = message.get("action", "")
                try:
                    await ws.send_json(act(session, action))
                except HTTPException as err:
                    await ws.send_json({"v": VERSION, "error": err.detail,
                                        "code": err.status_code})
                if session.terminal is not None:
                    await ws.close()
                    return
        except WebSocketDisconnect:
            with lock:
                if session.open:
                    session.open = False
                    finish_session(session, OUTCOME_ABORT)

    # --- training set and strategies ------------------------------------------

    @app.get("/v1/trainingset")
    def get_training():
        return {"v": VERSION, "size": training.size,
                "counts": [[z, a, n]
                           for (z, a), n in sorted(training.counts.items())]}

    @app.get("/v1/trainingset.csv")
    def get_training_csv():
        return PlainTextResponse(training.to_csv(), media_type="text/csv")

    @app.get("/v1/trajectories/{session_id}")
    def get_trajectory(session_id: str):
        try:
            return store.get_named("trajectories", session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown trajectory")

    @app.post("/v1/strategies", status_code=201)
    def post_strategy(body: dict):
        try:
            table = table_from_obj(body)
            for row in table.values():
                total = sum(row.values())
                if abs(total - 1.0) > 1e-6 or any(p < 0 for p in row.values()):
                    raise ModelError("strategy rows must be distributions")
        except (ModelError, KeyError, TypeError, ValueError) as err:
            raise HTTPException(status_code=422, detail=str(err))
        strategy_id = store.put("strategies", table_to_obj(
            table, body.get("provenance") or None))
        return {"strategy_id": strategy_id}

    @app.get("/v1/strategies/{strategy_id}")
    def get_strategy(strategy_id: str):
        try:
            raw = store.get_bytes("strategies", strategy_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown strategy")
        return Response(content=raw, media_type="application/json")

    @app.post("/v1/clone", status_code=201)
    def post_clone(body: Optional[dict] = None):
        table = clone_table(training)
        strategy_id = store.put("strategies",
                                table_to_obj(table, provenance_for(training)))
        return {"strategy_id": strategy_id, "training_steps": training.size}

    # --- checking, refinement, heatmaps ---------------------------------------

    @app.post("/v1/checks", status_code=202)
    def post_check(body: dict):
        spec_obj = _spec_from_obj(body.get("spec", {}))
        if "p" in body:
            spec_obj["p"] = float(body["p"])
        return {"job_id": submit(run_check, body.get("strategy_id", ""),
                                 body.get("scenario_id", ""), spec_obj,
                                 bool(body.get("per_state", False)))}

    @app.post("/v1/refine", status_code=202)
    def post_refine(body: dict):
        spec_obj = _spec_from_obj(body.get("spec", {}))
        k = int(body.get("k", 5))
        return {"job_id": submit(run_refine, body.get("strategy_id", ""),
                                 body.get("scenario_id", ""), spec_obj, k)}

    @app.post("/v1/rounds/{round_id}/recheck", status_code=202)
    def post_recheck(round_id: str):
        return {"job_id": submit(run_recheck, round_id)}

    @app.get("/v1/rounds/{round_id}")
    def get_round(round_id: str):
        try:
            return store.get_named("rounds", round_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown round")

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return job

    @app.get("/v1/heatmap")
    def get_heatmap(strategy_id: str, scenario_id: str):
        try:
            model = model_for(scenario_id)
            table = table_from_obj(store.get("strategies", strategy_id))
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown reference")
        grid = heatmap(model, strategy_for(model.pomdp, table))
        return {"v": VERSION, "width": model.config.width,
                "height": model.config.height, "grid": grid}

    @app.get("/v1/results/{result_id}")
    def get_result(result_id: str):
        try:
            return store.get("results", result_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown result")

    return app
