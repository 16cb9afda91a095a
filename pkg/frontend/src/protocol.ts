// Message shapes for the teleop wire protocol, plus defensive parsers.
// Server messages arrive from the network, so every parser returns null on
// anything malformed instead of throwing; the view keeps a count of those.

export interface Handshake {
  proto: number;
  task: string;
  F: number;
  resolution: [number, number];
}

export interface FrameImage {
  w: number;
  h: number;
  rgb8_b64: string;
}

export interface FrameMessage {
  tick: number;
  image: FrameImage;
  proprio: number[];
  success_flag: boolean;
  recording_flag: boolean;
}

export interface ResetRequest {
  task: string;
  level: number;
  seed: number;
}

export interface ControlMessage {
  ee_delta: number[];
  fingers?: number[];
  record_toggle?: boolean;
  reset?: ResetRequest;
}

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function numberArray(x: unknown, length?: number): number[] | null {
  if (!Array.isArray(x)) return null;
  if (length !== undefined && x.length !== length) return null;
  const out: number[] = [];
  for (const v of x) {
    if (!isFiniteNumber(v)) return null;
    out.push(v);
  }
  return out;
}

export function parseHandshake(x: unknown): Handshake | null {
  if (!isRecord(x)) return null;
  if (!isFiniteNumber(x.proto) || typeof x.task !== "string" || !isFiniteNumber(x.F)) return null;
  const res = numberArray(x.resolution, 2);
  if (!res || res[0]! < 8 || res[1]! < 8) return null;
  return { proto: x.proto, task: x.task, F: x.F, resolution: [res[0]!, res[1]!] };
}

export function parseFrame(x: unknown): FrameMessage | null {
  if (!isRecord(x)) return null;
  if (!isFiniteNumber(x.tick)) return null;
  if (!isRecord(x.image)) return null;
  const { w, h, rgb8_b64 } = x.image as Record<string, unknown>;
  if (!isFiniteNumber(w) || !isFiniteNumber(h) || typeof rgb8_b64 !== "string") return null;
  if (w <= 0 || h <= 0 || w > 4096 || h > 4096) return null;
  const proprio = numberArray(x.proprio);
  if (!proprio) return null;
  if (typeof x.success_flag !== "boolean" || typeof x.recording_flag !== "boolean") return null;
  return {
    tick: x.tick,
    image: { w, h, rgb8_b64 },
    proprio,
    success_flag: x.success_flag,
    recording_flag: x.recording_flag,
  };
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/** Clamp a control into protocol range: ee in [-1, 1], fingers in [0, 2]. */
export function clampControl(c: ControlMessage): ControlMessage {
  const out: ControlMessage = {
    ee_delta: c.ee_delta.slice(0, 6).map((v) => clamp(Number.isFinite(v) ? v : 0, -1, 1)),
  };
  while (out.ee_delta.length < 6) out.ee_delta.push(0);
  if (c.fingers) out.fingers = c.fingers.map((v) => clamp(Number.isFinite(v) ? v : 0, 0, 2));
  if (c.record_toggle !== undefined) out.record_toggle = c.record_toggle;
  if (c.reset) out.reset = c.reset;
  return out;
}

/** Decode base64 in both browser and Node without extra dependencies. */
export function decodeBase64(s: string): Uint8Array {
  const g = globalThis as { atob?: (s: string) => string; Buffer?: { from(s: string, e: string): Uint8Array } };
  if (typeof g.atob === "function") {
    const bin = g.atob(s);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  if (g.Buffer) return Uint8Array.from(g.Buffer.from(s, "base64"));
  throw new Error("no base64 decoder available");
}
