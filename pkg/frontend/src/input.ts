// Keyboard-first control mapping.
//
// Legend (normalized units per tick are per-axis rates):
//   W/S  forward/back (+y/-y)      Arrow Up/Down   pitch
//   A/D  left/right  (-x/+x)       Arrow Left/Right yaw
//   Q/E  up/down     (+z/-z)       [ / ]            roll
//   Space (hold)  close the hand   R record toggle  X reset

import { ControlMessage, clampControl } from "./protocol.js";

export interface AxisBinding {
  code: string;
  axis: number; // 0..2 angular (rx, ry, rz), 3..5 linear (x, y, z)
  rate: number; // normalized units per tick while held
}

export const DEFAULT_RATE = 0.6;

export const DEFAULT_BINDINGS: AxisBinding[] = [
  { code: "KeyW", axis: 4, rate: +DEFAULT_RATE },
  { code: "KeyS", axis: 4, rate: -DEFAULT_RATE },
  { code: "KeyA", axis: 3, rate: -DEFAULT_RATE },
  { code: "KeyD", axis: 3, rate: +DEFAULT_RATE },
  { code: "KeyQ", axis: 5, rate: +DEFAULT_RATE },
  { code: "KeyE", axis: 5, rate: -DEFAULT_RATE },
  { code: "ArrowUp", axis: 0, rate: +DEFAULT_RATE },
  { code: "ArrowDown", axis: 0, rate: -DEFAULT_RATE },
  { code: "ArrowLeft", axis: 2, rate: +DEFAULT_RATE },
  { code: "ArrowRight", axis: 2, rate: -DEFAULT_RATE },
  { code: "BracketLeft", axis: 1, rate: +DEFAULT_RATE },
  { code: "BracketRight", axis: 1, rate: -DEFAULT_RATE },
];

export const APERTURE_KEY = "Space";
export const OPEN_APERTURE = 1.0;
export const CLOSED_APERTURE = 0.1;

export class InputTracker {
  private held = new Set<string>();

  constructor(private bindings: AxisBinding[] = DEFAULT_BINDINGS) {}

  keyDown(code: string): void {
    this.held.add(code);
  }

  keyUp(code: string): void {
    this.held.delete(code);
  }

  clear(): void {
    this.held.clear();
  }

  eeAxes(): number[] {
    const ee = [0, 0, 0, 0, 0, 0];
    for (const b of this.bindings) {
      if (this.held.has(b.code)) ee[b.axis] = (ee[b.axis] ?? 0) + b.rate;
    }
    return ee;
  }

  aperture(): number {
    return this.held.has(APERTURE_KEY) ? CLOSED_APERTURE : OPEN_APERTURE;
  }
}

/** All finger joints follow the single aperture via a canned synergy. */
export function fingerSynergy(aperture: number, fingerDim: number): number[] {
  const out = new Array<number>(fingerDim).fill(aperture);
  if (fingerDim >= 2) out[1] = 1.0 - aperture;
  return out;
}

export function controlFromInput(tracker: InputTracker, fingerDim: number): ControlMessage {
  return clampControl({
    ee_delta: tracker.eeAxes(),
    fingers: fingerSynergy(tracker.aperture(), fingerDim),
  });
}

/** Token-free limiter: at most maxPerSecond sends, measured on a monotonic clock. */
export class RateLimiter {
  private last = -Infinity;
  private readonly interval: number;

  constructor(maxPerSecond: number, private now: () => number = () => performance.now()) {
    this.interval = 1000 / maxPerSecond;
  }

  allow(): boolean {
    const t = this.now();
    if (t - this.last >= this.interval) {
      this.last = t;
      return true;
    }
    return false;
  }
}
