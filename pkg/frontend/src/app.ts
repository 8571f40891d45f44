// DOM application: play view, immersion queue, heatmap inspector.
//
// The play view renders only what a demonstrator may know: the static map
// (landmarks and goal), the 3x3 observation panel, and the step counter.
// The agent's true position is never drawn anywhere.

import { ApiClient, HttpSessionTransport, WsSessionTransport } from "./client.js";
import { heatmapView } from "./heatmap.js";
import { ImmersionQueue } from "./immersion.js";
import { panelCells } from "./obsPanel.js";
import type {
  Action,
  CheckOutcome,
  CheckSpec,
  Frame,
  KnownMap,
  RefineOutcome,
  RecheckOutcome,
} from "./protocol.js";
import { SessionController, actionForKey } from "./session.js";

interface AppState {
  scenarioId: string | null;
  strategyId: string | null;
  controller: SessionController | null;
  lastFrame: Frame | null;
  queue: ImmersionQueue | null;
  roundId: string | null;
  probability: number | null;
  verdict: string | null;
  message: string;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderKnownMap(target: HTMLElement, map: KnownMap): void {
  target.replaceChildren();
  target.style.gridTemplateColumns = `repeat(${map.width}, 26px)`;
  const landmarks = new Set(map.landmarks.map(([x, y]) => `${x},${y}`));
  for (let y = map.height - 1; y >= 0; y -= 1) {
    for (let x = 0; x < map.width; x += 1) {
      const cell = el("div", "cell");
      if (landmarks.has(`${x},${y}`)) cell.classList.add("landmark");
      if (x === map.goal[0] && y === map.goal[1]) {
        cell.classList.add("goal");
        cell.textContent = "G";
      }
      target.appendChild(cell);
    }
  }
}

function renderObsPanel(target: HTMLElement, obs: string): void {
  target.replaceChildren();
  for (const row of panelCells(obs)) {
    for (const cell of row) {
      const node = el("div", "cell");
      if (cell.agent) {
        node.classList.add("agent");
        node.textContent = "@";
      }
      if (cell.occupied) node.classList.add("occupied");
      target.appendChild(node);
    }
  }
}

export function createApp(root: HTMLElement, client: ApiClient): void {
  const state: AppState = {
    scenarioId: null,
    strategyId: null,
    controller: null,
    lastFrame: null,
    queue: null,
    roundId: null,
    probability: null,
    verdict: null,
    message: "create a scenario to begin",
  };

  root.replaceChildren();
  const status = el("div", "status");
  const mapView = el("div", "grid map");
  const obsView = el("div", "grid obs");
  const banner = el("div", "banner");
  const refinePanel = el("div", "panel");
  const heatmapTable = el("div", "grid heatmap");

  const scenarioButton = el("button", "", "new random scenario");
  const sessionButton = el("button", "", "start session");
  const cloneButton = el("button", "", "clone strategy from data");
  const checkButton = el("button", "", "check (P >= 0.9)");
  const refineButton = el("button", "", "refine (k = 4)");
  const recheckButton = el("button", "", "re-check round");
  const heatmapButton = el("button", "", "show heatmap");
  const immersionButton = el("button", "", "next immersion session");

  const controls = el("div", "controls");
  controls.append(scenarioButton, sessionButton, cloneButton, checkButton,
                  refineButton, immersionButton, recheckButton, heatmapButton);

  root.append(status, controls, banner, mapView, obsView, refinePanel,
              heatmapTable);

  function show(): void {
    const parts = [state.message];
    if (state.scenarioId) parts.push(`scenario ${state.scenarioId}`);
    if (state.strategyId) parts.push(`strategy ${state.strategyId.slice(0, 10)}`);
    if (state.probability !== null) {
      parts.push(`P = ${state.probability.toFixed(4)} (${state.verdict})`);
    }
    status.textContent = parts.join(" | ");
    if (state.queue) {
      refinePanel.textContent =
        `immersion queue: ${state.queue.remaining()} left, ` +
        `${state.queue.completed()} completed`;
    }
  }

  function onFrame(frame: Frame): void {
    state.lastFrame = frame;
    renderKnownMap(mapView, frame.known_map);
    renderObsPanel(obsView, frame.obs);
    banner.className = "banner";
    if (frame.terminal === "goal") {
      banner.classList.add("goal");
      banner.textContent = `reached the goal in ${frame.step} steps`;
    } else if (frame.terminal === "crash") {
      banner.classList.add("crash");
      banner.textContent = `crashed at step ${frame.step}`;
    } else {
      banner.textContent = `step ${frame.step}`;
    }
    show();
  }

  async function openSession(mode: "fresh" | "immersion", stateId?: number) {
    if (!state.scenarioId) return;
    const opened = await client.openSession(
      state.scenarioId, mode, stateId, state.roundId ?? undefined);
    const supportsWs = typeof WebSocket !== "undefined";
    const transport = supportsWs
      ? new WsSessionTransport(
          `${client.base.replace(/^http/, "ws")}/v1/sessions/` +
            `${opened.session_id}/ws`)
      : new HttpSessionTransport(client, opened.session_id, opened.frame);
    state.controller = new SessionController(transport, {
      onFrame,
      onTerminal: () => {
        if (mode === "immersion" && state.queue && stateId !== undefined) {
          state.queue.markDone(stateId);
        }
        show();
      },
    });
    await state.controller.begin();
    state.message = mode === "immersion"
      ? "immersed at a critical situation - reach the goal"
      : "playing";
    show();
  }

  scenarioButton.addEventListener("click", () => {
    void (async () => {
      const created = await client.sampleScenario(Date.now() % 100000,
                                                  { width: [4, 6],
                                                    height: [4, 6] });
      state.scenarioId = created.scenario_id;
      state.message = "scenario ready";
      show();
    })();
  });

  sessionButton.addEventListener("click", () => {
    void openSession("fresh");
  });

  cloneButton.addEventListener("click", () => {
    void (async () => {
      const cloned = await client.clone();
      state.strategyId = cloned.strategy_id;
      state.message = `cloned from ${cloned.training_steps} steps`;
      show();
    })();
  });

  const spec: CheckSpec = { kind: "reach-avoid-prob", threshold: 0.9 };

  checkButton.addEventListener("click", () => {
    void (async () => {
      if (!state.strategyId || !state.scenarioId) return;
      const { job_id } = await client.check(state.strategyId,
                                            state.scenarioId, spec);
      const job = await client.waitJob<CheckOutcome>(job_id);
      if (job.result) {
        state.probability = job.result.value_at_initial;
        state.verdict = job.result.verdict;
      }
      show();
    })();
  });

  refineButton.addEventListener("click", () => {
    void (async () => {
      if (!state.strategyId || !state.scenarioId) return;
      const { job_id } = await client.refine(state.strategyId,
                                             state.scenarioId, spec, 4);
      const job = await client.waitJob<RefineOutcome>(job_id);
      if (job.status === "error") {
        state.message = `refine: ${job.error}`;
      } else if (job.result) {
        state.roundId = job.result.round_id;
        state.probability = job.result.value;
        state.verdict = job.result.verdict;
        state.queue = new ImmersionQueue(
          job.result.round_id,
          job.result.critical.map((c) => c.state_id),
          window.localStorage,
        );
        state.message = "refinement round open";
      }
      show();
    })();
  });

  immersionButton.addEventListener("click", () => {
    const next = state.queue?.current();
    if (next !== null && next !== undefined) void openSession("immersion", next);
  });

  recheckButton.addEventListener("click", () => {
    void (async () => {
      if (!state.roundId) return;
      const { job_id } = await client.recheck(state.roundId);
      const job = await client.waitJob<RecheckOutcome>(job_id);
      if (job.result) {
        state.probability = job.result.value_at_initial;
        state.verdict = job.result.verdict;
        state.strategyId = job.result.strategy_id;
        state.message = "round re-checked";
      }
      show();
    })();
  });

  heatmapButton.addEventListener("click", () => {
    void (async () => {
      if (!state.strategyId || !state.scenarioId) return;
      const payload = await client.heatmap(state.strategyId, state.scenarioId);
      heatmapTable.replaceChildren();
      heatmapTable.style.gridTemplateColumns = `repeat(${payload.width}, 26px)`;
      for (const row of heatmapView(payload)) {
        for (const cell of row) {
          const node = el("div", "cell");
          node.style.background = cell.color;
          node.title = cell.tooltip;
          if (cell.value === null) node.classList.add("landmark");
          heatmapTable.appendChild(node);
        }
      }
    })();
  });

  window.addEventListener("keydown", (event) => {
    const action: Action | null = actionForKey(event.key);
    if (!action || !state.controller) return;
    event.preventDefault();
    void state.controller.handle(action);
  });

  show();
}
