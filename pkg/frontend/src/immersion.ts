// Immersion queue: critical states offered for re-demonstration, one session
// at a time, resumable across page reloads.

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

interface QueueState {
  round_id: string;
  pending: number[];
  done: number[];
}

const KEY_PREFIX = "demoproof-immersion-";

export class ImmersionQueue {
  private state: QueueState;

  constructor(
    roundId: string,
    criticalStates: number[],
    private readonly storage: StorageLike | null = null,
  ) {
    const restored = this.storage?.getItem(KEY_PREFIX + roundId);
    if (restored) {
      this.state = JSON.parse(restored) as QueueState;
    } else {
      this.state = { round_id: roundId, pending: [...criticalStates], done: [] };
      this.persist();
    }
  }

  static resume(roundId: string, storage: StorageLike): ImmersionQueue | null {
    if (!storage.getItem(KEY_PREFIX + roundId)) return null;
    return new ImmersionQueue(roundId, [], storage);
  }

  get roundId(): string {
    return this.state.round_id;
  }

  current(): number | null {
    return this.state.pending[0] ?? null;
  }

  remaining(): number {
    return this.state.pending.length;
  }

  completed(): number {
    return this.state.done.length;
  }

  finished(): boolean {
    return this.state.pending.length === 0;
  }

  markDone(stateId: number): void {
    const index = this.state.pending.indexOf(stateId);
    if (index < 0) return;
    this.state.pending.splice(index, 1);
    this.state.done.push(stateId);
    this.persist();
  }

  clear(): void {
    this.storage?.removeItem(KEY_PREFIX + this.state.round_id);
  }

  private persist(): void {
    this.storage?.setItem(
      KEY_PREFIX + this.state.round_id,
      JSON.stringify(this.state),
    );
  }
}
