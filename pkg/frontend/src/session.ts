// Lockstep play controller.
//
// Exactly one action may be in flight; key presses while waiting or after a
// terminal frame are dropped. The controller never sees (or stores) the true
// agent or obstacle position: frames carry only the observation bits, the
// known static map, and the step counter.

import type { SessionTransport } from "./client.js";
import type { Action, Frame, Terminal } from "./protocol.js";

export type Phase = "idle" | "playing" | "waiting" | "terminal";

export interface SessionEvents {
  onFrame?: (frame: Frame) => void;
  onTerminal?: (outcome: Exclude<Terminal, null>, frame: Frame) => void;
  onError?: (err: unknown) => void;
}

export class SessionController {
  phase: Phase = "idle";
  frame: Frame | null = null;
  sent = 0;
  received = 0;
  completedRuns = 0;

  constructor(
    private readonly transport: SessionTransport,
    private readonly events: SessionEvents = {},
  ) {}

  async begin(): Promise<Frame> {
    const frame = await this.transport.start();
    this.frame = frame;
    this.phase = frame.terminal ? "terminal" : "playing";
    this.events.onFrame?.(frame);
    return frame;
  }

  // Returns true when the key was accepted (lockstep slot was free).
  async handle(action: Action): Promise<boolean> {
    if (this.phase !== "playing") return false;
    this.phase = "waiting";
    this.sent += 1;
    try {
      const frame = await this.transport.send(action);
      this.received += 1;
      this.frame = frame;
      this.events.onFrame?.(frame);
      if (frame.terminal) {
        this.phase = "terminal";
        this.completedRuns += 1;
        this.events.onTerminal?.(frame.terminal, frame);
        this.transport.close();
      } else {
        this.phase = "playing";
      }
      return true;
    } catch (err) {
      this.phase = "terminal";
      this.events.onError?.(err);
      return false;
    }
  }
}

export const KEY_TO_ACTION: Record<string, Action> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  ArrowUp: "up",
  ArrowDown: "down",
};

export function actionForKey(key: string): Action | null {
  return KEY_TO_ACTION[key] ?? null;
}
