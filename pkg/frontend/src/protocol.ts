// Wire types for the demoproof service (schema version 1).

export const ACTIONS = ["left", "right", "up", "down"] as const;
export type Action = (typeof ACTIONS)[number];

export type Cell = [number, number];

export interface KnownMap {
  width: number;
  height: number;
  landmarks: Cell[];
  goal: Cell;
}

export type Terminal = "goal" | "crash" | null;

export interface Frame {
  v: number;
  session_id: string;
  step: number;
  obs: string;
  known_map: KnownMap;
  terminal: Terminal;
  tally: Record<string, number>;
}

export interface ScenarioConfig {
  v: number;
  width: number;
  height: number;
  landmarks: Cell[];
  obstacle_start: Cell;
  goal: Cell;
  agent_start: Cell | "random";
  rng_seed: number;
}

export interface CheckSpec {
  kind: "reach-avoid-prob" | "expected-cost";
  threshold: number;
}

export interface SessionOpened {
  session_id: string;
  frame: Frame;
}

export interface CheckOutcome {
  value_at_initial: number;
  conditional_expected_cost: number | null;
  verdict: "SAT" | "UNSAT";
  result_id: string;
  states?: number;
}

export interface RefineOutcome {
  round_id: string;
  value: number;
  verdict: "SAT" | "UNSAT";
  critical: { state_id: number }[];
  sessions_suggested: number;
}

export interface RecheckOutcome extends CheckOutcome {
  round_id: string;
  strategy_id: string;
}

export interface Job<T> {
  job_id: string;
  status: "pending" | "done" | "error";
  result?: T;
  error?: string;
  message?: string;
  code?: number;
}

export interface HeatmapPayload {
  v: number;
  width: number;
  height: number;
  grid: (number | null)[][];
}

export interface RoundState {
  round_id: string;
  strategy_id: string;
  scenario_id: string;
  critical: number[];
  completed: string[];
}
