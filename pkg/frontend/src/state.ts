import type { MatchFilter } from './types.js';

export interface ViewState {
  tau: number;
  d: number;
  filter: MatchFilter;
  selectedId: string | null;
  queueCursor: number;
  relocateMode: boolean;
  offline: boolean;
  refreshPrompt: boolean;
}

export const INITIAL_STATE: ViewState = {
  tau: 0.5,
  d: 250,
  filter: 'unmatched', // recommended flow: validate unmatched, highest first
  selectedId: null,
  queueCursor: 0,
  relocateMode: false,
  offline: false,
  refreshPrompt: false,
};

export type Listener = (state: ViewState) => void;

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

/** Single source of truth for view state; notifies on every change. */
export class Store {
  private state: ViewState;
  private listeners: Listener[] = [];

  constructor(initial: Partial<ViewState> = {}) {
    this.state = { ...INITIAL_STATE, ...initial };
  }

  get(): ViewState {
    return this.state;
  }

  update(partial: Partial<ViewState>): ViewState {
    const next = { ...this.state, ...partial };
    next.tau = clamp(next.tau, 0, 1);
    next.d = Math.max(1, next.d);
    this.state = next;
    for (const listener of this.listeners) {
      listener(next);
    }
    return next;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}

/** Trailing-edge debouncer for slider-driven refreshes (default 250 ms). */
export class Debouncer {
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private readonly delayMs = 250) {}

  schedule(fn: () => void): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      fn();
    }, this.delayMs);
  }

  cancel(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}
