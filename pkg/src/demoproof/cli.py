"""Command-line driver for the pipeline: scenario generation, scripted
demonstrations, cloning, checking, bounds, refinement, heatmaps, and the
service.

Every subcommand is deterministic given --seed: artifacts are canonical JSON
(sorted keys, no timestamps), so re-runs are byte-identical. Timing fields
appear only on stdout, never in files. Exit codes: 0 ok, 2 invalid input,
3 UNSAT under --expect-sat, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from pathlib import Path

from demoproof import model_io
from demoproof.cloning import (
    clone_table,
    load_strategy,
    provenance_for,
    save_strategy,
    strategy_for,
    strategy_sha256,
)
from demoproof.features import write_class_table_csv
from demoproof.fixtures import (
    TRADEOFF_BAD,
    TRADEOFF_GOAL,
    tradeoff_pomdp,
    tradeoff_strategy,
)
from demoproof.gridworld import (
    RANDOM_START,
    InvalidScenario,
    ScenarioConfig,
    ScenarioRanges,
    build_pomdp,
    load_scenario,
    random_scenario,
    save_scenario,
)
from demoproof.models import EXPECTED_COST, ModelError, REACH_AVOID, Spec, induce_mc
from demoproof.refine import refine_loop
from demoproof.training import (
    TrainingSet,
    hoeffding_min_samples,
    read_trajectories,
    run_episode,
    saturation_check,
    training_set_from,
)
from demoproof.util import canonical_json, derive_seed
from demoproof.verify import (
    GAUSS_SEIDEL,
    JACOBI,
    NoConvergence,
    SAT,
    check_spec,
    heatmap,
    mdp_max_reach,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNSAT = 3
EXIT_NO_CONVERGENCE = 4


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _emit(obj) -> None:
    print(canonical_json(obj))


def _position(pair):
    return (int(pair[0]), int(pair[1]))


def _add_sample_flags(parser):
    parser.add_argument("--sample", action="store_true",
                        help="sample the scenario from ranges instead of flags")
    parser.add_argument("--width-range", nargs=2, type=int, default=(4, 11),
                        metavar=("LO", "HI"))
    parser.add_argument("--height-range", nargs=2, type=int, default=(4, 11),
                        metavar=("LO", "HI"))
    parser.add_argument("--landmarks-range", nargs=2, type=int, default=(1, 1),
                        metavar=("LO", "HI"))
    parser.add_argument("--random-start", action="store_true",
                        help="leave the agent start cell unspecified")


def _ranges_from(args) -> ScenarioRanges:
    return ScenarioRanges(width=tuple(args.width_range),
                          height=tuple(args.height_range),
                          num_landmarks=tuple(args.landmarks_range),
                          random_start=args.random_start)


def _explicit_config(args) -> ScenarioConfig:
    if args.width is None or args.height is None or args.goal is None \
            or args.obstacle is None or args.agent is None:
        raise InvalidScenario(
            "explicit mode needs --width --height --goal --obstacle --agent "
            "(or use --sample)")
    agent = RANDOM_START if args.agent == ["random"] else _position(args.agent)
    return ScenarioConfig(
        width=args.width, height=args.height,
        landmarks=frozenset(_position(lm) for lm in args.landmark or []),
        obstacle_start=_position(args.obstacle), goal=_position(args.goal),
        agent_start=agent, rng_seed=args.seed)


def cmd_gen(args) -> int:
    if args.sample:
        config = random_scenario(random.Random(args.seed), _ranges_from(args))
    else:
        config = _explicit_config(args)
    if args.out:
        save_scenario(args.out, config)
    _emit(config.to_obj())
    return EXIT_OK


def cmd_demo(args) -> int:
    trajectories = []
    target = None
    if args.hoeffding_eps is not None:
        target = hoeffding_min_samples(args.hoeffding_eps, args.hoeffding_delta,
                                       args.efficiency)
    fixed = load_scenario(args.scenario) if args.scenario else None
    ranges = _ranges_from(args)
    ts = TrainingSet()
    snapshot = TrainingSet()
    next_check = 50
    for i in range(args.episodes):
        config = fixed if fixed is not None else random_scenario(
            random.Random(derive_seed("demo-scenario", args.seed, i)), ranges)
        trajectory = run_episode(config, seed=derive_seed("demo", args.seed, i),
                                 noise=args.noise, max_steps=args.max_steps,
                                 session_id=f"demo-{args.seed}-{i}")
        trajectories.append(trajectory)
        ts = ts.merged(training_set_from([trajectory]))
        if target is not None and ts.size >= target:
            break
        if args.saturation_eps is not None and ts.size >= next_check:
            if snapshot.size and saturation_check(snapshot, ts,
                                                  args.saturation_eps):
                break
            snapshot = ts
            next_check = ts.size + 50
    from demoproof.training import write_trajectories

    write_trajectories(args.out, trajectories)
    if args.training_csv:
        _write(args.training_csv, ts.to_csv())
    _emit({"episodes": len(trajectories), "steps": ts.size,
           "outcomes": {o: sum(1 for t in trajectories if t.outcome == o)
                        for o in ("goal", "crash", "abort")}})
    return EXIT_OK


def cmd_clone(args) -> int:
    if args.training:
        ts = TrainingSet.from_csv(Path(args.training).read_text(encoding="utf-8"))
    else:
        trajectories = []
        for path in args.trajectories or []:
            trajectories.extend(read_trajectories(path))
        ts = training_set_from(trajectories)
    table = clone_table(ts)
    save_strategy(args.out, table, provenance_for(ts))
    if args.classes_csv:
        write_class_table_csv(args.classes_csv)
    _emit({"observations": len(table), "training_steps": ts.size,
           "strategy_sha256": strategy_sha256(table)})
    return EXIT_OK


def _spec_for(args, model=None) -> Spec:
    if args.kappa is not None:
        if model is None:
            return Spec(kind=EXPECTED_COST, bad=TRADEOFF_BAD,
                        goal=TRADEOFF_GOAL, threshold=args.kappa)
        return model.cost_spec(args.kappa)
    lam = args.lam if args.lam is not None else 0.9
    if model is None:
        return Spec(kind=REACH_AVOID, bad=TRADEOFF_BAD, goal=TRADEOFF_GOAL,
                    threshold=lam)
    return model.reach_spec(lam)


def _load_checked(args):
    """Build (mc, spec, states, build_ms) for check/bound style commands."""
    t0 = time.perf_counter()
    if args.fixture:
        pomdp = tradeoff_pomdp()
        sigma = tradeoff_strategy(args.p)
        mc = induce_mc(pomdp, sigma)
        spec = _spec_for(args)
        return mc, pomdp.mdp, spec, pomdp.mdp.num_states, time.perf_counter() - t0
    config = load_scenario(args.scenario)
    model = build_pomdp(config)
    table = load_strategy(args.strategy)
    sigma = strategy_for(model.pomdp, table)
    mc = induce_mc(model.pomdp, sigma)
    spec = _spec_for(args, model)
    return mc, model.pomdp.mdp, spec, model.num_states, time.perf_counter() - t0


def _result_obj(res, spec, states, per_state=False) -> dict:
    obj = {
        "v": 1,
        "kind": spec.kind,
        "threshold": spec.threshold,
        "value_at_initial": res.value_at_initial,
        "conditional_expected_cost": res.conditional_expected_cost,
        "verdict": res.verdict,
        "residual": res.residual,
        "iterations": res.iterations,
        "method": res.method,
        "states": states,
    }
    if per_state:
        obj["per_state"] = [float(x) for x in res.per_state_prob]
    return obj


def cmd_check(args) -> int:
    mc, _, spec, states, build_s = _load_checked(args)
    t0 = time.perf_counter()
    res = check_spec(mc, spec, method=args.method, with_cost=True)
    check_s = time.perf_counter() - t0
    if args.out:
        _write(args.out,
               canonical_json(_result_obj(res, spec, states, args.per_state))
               + "\n")
    _emit({"prob": res.value_at_initial, "cost": res.conditional_expected_cost,
           "verdict": res.verdict, "states": states,
           "build_ms": round(build_s * 1000, 3),
           "check_ms": round(check_s * 1000, 3),
           "residual": res.residual, "iterations": res.iterations})
    if args.expect_sat and res.verdict != SAT:
        return EXIT_UNSAT
    return EXIT_OK


def cmd_bound(args) -> int:
    if args.fixture:
        mdp = tradeoff_pomdp().mdp
        bad, goal = TRADEOFF_BAD, TRADEOFF_GOAL
    else:
        model = build_pomdp(load_scenario(args.scenario))
        mdp, bad, goal = model.pomdp.mdp, model.bad, model.goal
    t0 = time.perf_counter()
    res = mdp_max_reach(mdp, bad, goal, method=args.method)
    elapsed = time.perf_counter() - t0
    if args.out:
        _write(args.out, canonical_json({
            "v": 1, "bound": res.value_at_initial, "residual": res.residual,
            "iterations": res.iterations, "states": mdp.num_states}) + "\n")
    _emit({"bound": res.value_at_initial, "states": mdp.num_states,
           "check_ms": round(elapsed * 1000, 3)})
    return EXIT_OK


def cmd_refine(args) -> int:
    config = load_scenario(args.scenario)
    model = build_pomdp(config)
    trajectories = []
    for path in args.trajectories or []:
        trajectories.extend(read_trajectories(path))
    ts = training_set_from(trajectories)
    spec = _spec_for(args, model)
    result = refine_loop(model, spec, ts, max_iters=args.iters, k=args.k,
                         seed=args.seed, noise=args.noise, method=args.method)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    history_lines = [canonical_json(r.to_obj()) for r in result.history]
    _write(outdir / "history.jsonl", "\n".join(history_lines) + "\n")
    for record, table in zip(result.history, result.tables):
        save_strategy(outdir / f"strategy_{record.iteration:03d}.json", table)
    save_strategy(outdir / "final_strategy.json", result.tables[-1])
    _emit({"iterations": result.history[-1].iteration,
           "initial_value": result.history[0].value,
           "final_value": result.history[-1].value,
           "stop_reason": result.stop_reason})
    return EXIT_OK


def cmd_heatmap(args) -> int:
    config = load_scenario(args.scenario)
    start = config.free_positions()[0] if config.agent_start == RANDOM_START \
        else None
    model = build_pomdp(config, agent_start=start)
    sigma = strategy_for(model.pomdp, load_strategy(args.strategy))
    grid = heatmap(model, sigma, method=args.method)
    lines = []
    for y in range(config.height - 1, -1, -1):
        lines.append(",".join("" if v is None else repr(v) for v in grid[y]))
    _write(args.out, "\n".join(lines) + "\n")
    _emit({"width": config.width, "height": config.height, "out": str(args.out)})
    return EXIT_OK


def cmd_hoeffding(args) -> int:
    print(hoeffding_min_samples(args.eps, args.delta, args.efficiency))
    return EXIT_OK


def cmd_model(args) -> int:
    model = build_pomdp(load_scenario(args.scenario))
    model_io.save_model(args.out, model.pomdp,
                        labels={"bad": tuple(sorted(model.bad)),
                                "goal": tuple(sorted(model.goal))})
    _emit({"states": model.num_states,
           "observations": model.pomdp.num_observations, "out": str(args.out)})
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from demoproof.service import create_app

    app = create_app(Path(args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demoproof",
        description="strategy synthesis from demonstrations, verified by "
                    "probabilistic model checking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a scenario file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--goal", nargs=2)
    p.add_argument("--obstacle", nargs=2)
    p.add_argument("--agent", nargs="+",
                   help="X Y for a fixed start, or the word 'random'")
    p.add_argument("--landmark", nargs=2, action="append")
    _add_sample_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("demo", help="run scripted demonstration episodes")
    p.add_argument("--scenario", type=Path)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--training-csv", type=Path)
    p.add_argument("--saturation-eps", type=float)
    p.add_argument("--hoeffding-eps", type=float)
    p.add_argument("--hoeffding-delta", type=float, default=0.01)
    p.add_argument("--efficiency", type=float, default=1.0)
    _add_sample_flags(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("clone", help="clone a strategy from trajectory logs")
    p.add_argument("--trajectories", type=Path, nargs="+")
    p.add_argument("--training", type=Path,
                   help="training-set CSV instead of trajectory logs")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes-csv", type=Path)
    p.set_defaults(func=cmd_clone)

    for name, fn in (("check", cmd_check), ("bound", cmd_bound)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", type=Path)
        p.add_argument("--strategy", type=Path)
        p.add_argument("--fixture", choices=["tradeoff"],
                       help="use the bundled randomization-vs-memory model")
        p.add_argument("--p", type=float, default=1.0,
                       help="up-probability for the fixture strategy")
        p.add_argument("--lam", type=float)
        p.add_argument("--kappa", type=float)
        p.add_argument("--method", choices=[GAUSS_SEIDEL, JACOBI],
                       default=GAUSS_SEIDEL)
        p.add_argument("--out", type=Path)
        if name == "check":
            p.add_argument("--per-state", action="store_true")
            p.add_argument("--expect-sat", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("refine", help="counterexample-guided refinement loop")
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--trajectories", type=Path, nargs="+")
    p.add_argument("--lam", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--method", choices=[GAUSS_SEIDEL, JACOBI],
                   default=GAUSS_SEIDEL)
    p.add_argument("--outdir", type=Path, required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("heatmap", help="per-start-cell values as CSV")
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--strategy", type=Path, required=True)
    p.add_argument("--method", choices=[GAUSS_SEIDEL, JACOBI],
                   default=GAUSS_SEIDEL)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("hoeffding", help="minimum demonstration count")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--efficiency", type=float, default=1.0)
    p.set_defaults(func=cmd_hoeffding)

    p = sub.add_parser("model", help="export the explicit POMDP of a scenario")
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("serve", help="start the HTTP/WebSocket service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", default="demoproof-data")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoConvergence as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err),
                          "residual": err.residual}), file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ModelError, FileNotFoundError, json.JSONDecodeError,
            ValueError) as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
