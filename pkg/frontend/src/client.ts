// HTTP client and lockstep session transports.
//
// The UI talks to live sessions through a SessionTransport so the same
// controller runs over a browser WebSocket or plain HTTP posts (the latter
// also serves the node test environment, which has no WebSocket client).

import type {
  Action,
  CheckOutcome,
  CheckSpec,
  Frame,
  HeatmapPayload,
  Job,
  RecheckOutcome,
  RefineOutcome,
  RoundState,
  ScenarioConfig,
  SessionOpened,
} from "./protocol.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = body.detail ?? JSON.stringify(body);
    } catch {
      // keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    return asJson<T>(
      await fetch(this.url(path), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  private async get<T>(path: string): Promise<T> {
    return asJson<T>(await fetch(this.url(path)));
  }

  health(): Promise<{ v: number; ok: boolean }> {
    return this.get("/v1/health");
  }

  createScenario(config: Omit<ScenarioConfig, "v"> & { v?: number }): Promise<{
    scenario_id: string;
    sha256: string;
    config: ScenarioConfig;
  }> {
    return this.post("/v1/scenarios", { config: { v: 1, ...config } });
  }

  sampleScenario(seed: number, sample: Record<string, unknown> = {}): Promise<{
    scenario_id: string;
    config: ScenarioConfig;
  }> {
    return this.post("/v1/scenarios", { sample, seed });
  }

  scenario(id: string): Promise<{ scenario_id: string; config: ScenarioConfig }> {
    return this.get(`/v1/scenarios/${id}`);
  }

  openSession(
    scenarioId: string,
    mode: "fresh" | "immersion" = "fresh",
    stateId?: number,
    roundId?: string,
  ): Promise<SessionOpened> {
    return this.post("/v1/sessions", {
      scenario_id: scenarioId,
      mode,
      state_id: stateId,
      round_id: roundId,
    });
  }

  act(sessionId: string, action: Action): Promise<{ frame: Frame }> {
    return this.post(`/v1/sessions/${sessionId}/act`, { action });
  }

  sessionFrame(sessionId: string): Promise<{ frame: Frame }> {
    return this.get(`/v1/sessions/${sessionId}`);
  }

  trajectory(sessionId: string): Promise<{
    steps: { state: number[]; obs: string; action: string; event: string }[];
    outcome: string;
  }> {
    return this.get(`/v1/trajectories/${sessionId}`);
  }

  trainingCsv(): Promise<string> {
    return fetch(this.url("/v1/trainingset.csv")).then((r) => r.text());
  }

  uploadStrategy(payload: unknown): Promise<{ strategy_id: string }> {
    return this.post("/v1/strategies", payload);
  }

  strategy(id: string): Promise<unknown> {
    return this.get(`/v1/strategies/${id}`);
  }

  clone(): Promise<{ strategy_id: string; training_steps: number }> {
    return this.post("/v1/clone", {});
  }

  check(strategyId: string, scenarioId: string, spec: CheckSpec): Promise<{ job_id: string }> {
    return this.post("/v1/checks", {
      strategy_id: strategyId,
      scenario_id: scenarioId,
      spec,
    });
  }

  refine(
    strategyId: string,
    scenarioId: string,
    spec: CheckSpec,
    k: number,
  ): Promise<{ job_id: string }> {
    return this.post("/v1/refine", {
      strategy_id: strategyId,
      scenario_id: scenarioId,
      spec,
      k,
    });
  }

  recheck(roundId: string): Promise<{ job_id: string }> {
    return this.post(`/v1/rounds/${roundId}/recheck`, {});
  }

  round(roundId: string): Promise<RoundState> {
    return this.get(`/v1/rounds/${roundId}`);
  }

  job<T>(jobId: string): Promise<Job<T>> {
    return this.get(`/v1/jobs/${jobId}`);
  }

  async waitJob<T>(jobId: string, timeoutMs = 30000, pollMs = 50): Promise<Job<T>> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.job<T>(jobId);
      if (job.status !== "pending") return job;
      if (Date.now() > deadline) throw new ApiError(408, `job ${jobId} timed out`);
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  heatmap(strategyId: string, scenarioId: string): Promise<HeatmapPayload> {
    return this.get(
      `/v1/heatmap?strategy_id=${encodeURIComponent(strategyId)}` +
        `&scenario_id=${encodeURIComponent(scenarioId)}`,
    );
  }
}

// One in-flight action at a time; each send resolves with exactly one frame.
export interface SessionTransport {
  start(): Promise<Frame>;
  send(action: Action): Promise<Frame>;
  close(): void;
}

export class HttpSessionTransport implements SessionTransport {
  constructor(
    private readonly client: ApiClient,
    private readonly sessionId: string,
    private readonly firstFrame: Frame,
  ) {}

  async start(): Promise<Frame> {
    return this.firstFrame;
  }

  async send(action: Action): Promise<Frame> {
    const { frame } = await this.client.act(this.sessionId, action);
    return frame;
  }

  close(): void {}
}

export class WsSessionTransport implements SessionTransport {
  private socket: WebSocket | null = null;
  private pending: ((frame: Frame) => void)[] = [];
  private failures: ((err: Error) => void)[] = [];

  constructor(private readonly url: string) {}

  start(): Promise<Frame> {
    return new Promise((resolve, reject) => {
      const socket = new WebSocket(this.url);
      this.socket = socket;
      this.pending.push(resolve);
      this.failures.push(reject);
      socket.addEventListener("message", (event) => {
        const payload = JSON.parse(String(event.data));
        const next = this.pending.shift();
        this.failures.shift();
        if (!next) return;
        if (payload.error) {
          const fail = new ApiError(payload.code ?? 500, payload.error);
          throw fail;
        }
        next(payload as Frame);
      });
      socket.addEventListener("close", () => {
        const fail = this.failures.shift();
        this.pending.shift();
        if (fail) fail(new Error("session socket closed"));
      });
      socket.addEventListener("error", () => {
        const fail = this.failures.shift();
        this.pending.shift();
        if (fail) fail(new Error("session socket error"));
      });
    });
  }

  send(action: Action): Promise<Frame> {
    return new Promise((resolve, reject) => {
      if (!this.socket || this.socket.readyState !== WebSocket.OPEN) {
        reject(new Error("socket not open"));
        return;
      }
      this.pending.push(resolve);
      this.failures.push(reject);
      this.socket.send(JSON.stringify({ action }));
    });
  }

  close(): void {
    this.socket?.close();
  }
}
