// Client session: handshake, latest-frame slot, rate-limited control sends.
//
// The transport is injected so the same session runs over a browser
// WebSocket (carrying the length-prefixed bytes) or a Node TCP socket in
// tests; the session itself never touches the DOM.

import { Deframer, ProtocolError, encodeMessage } from "./framing.js";
import {
  ControlMessage,
  FrameMessage,
  Handshake,
  clampControl,
  parseFrame,
  parseHandshake,
} from "./protocol.js";
import { RateLimiter } from "./input.js";

export interface Transport {
  send(data: Uint8Array): void;
  onData(cb: (data: Uint8Array) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export interface SessionEvents {
  onHandshake?: (h: Handshake) => void;
  onFrame?: (f: FrameMessage) => void;
  onStatus?: (text: string) => void;
  onClose?: () => void;
}

export const SEND_RATE_LIMIT_HZ = 30;

export class TeleopClient {
  handshake: Handshake | null = null;
  framesReceived = 0;
  framesDropped = 0; // arrived while an unconsumed frame sat in the slot
  malformedMessages = 0;
  lastTick = -1;
  private slot: FrameMessage | null = null;
  private deframer = new Deframer();
  private limiter: RateLimiter;
  private closed = false;

  constructor(private transport: Transport, private events: SessionEvents = {},
              now?: () => number) {
    this.limiter = new RateLimiter(SEND_RATE_LIMIT_HZ, now);
    transport.onData((data) => this.ingest(data));
    transport.onClose(() => {
      this.closed = true;
      this.events.onStatus?.("connection lost");
      this.events.onClose?.();
    });
  }

  private ingest(data: Uint8Array): void {
    let msgs: unknown[];
    try {
      msgs = this.deframer.push(data);
    } catch (e) {
      if (e instanceof ProtocolError) {
        this.malformedMessages += 1;
        this.events.onStatus?.(`protocol error: ${e.message}`);
        this.transport.close();
        return;
      }
      throw e;
    }
    for (const m of msgs) {
      if (this.handshake === null) {
        const h = parseHandshake(m);
        if (h) {
          this.handshake = h;
          this.events.onHandshake?.(h);
        } else {
          this.malformedMessages += 1;
        }
        continue;
      }
      const f = parseFrame(m);
      if (!f) {
        this.malformedMessages += 1;
        continue;
      }
      this.framesReceived += 1;
      this.lastTick = f.tick;
      if (this.slot !== null) this.framesDropped += 1;
      this.slot = f;
      this.events.onFrame?.(f);
    }
  }

  /** Consume the most recent frame (render loop calls this). */
  takeFrame(): FrameMessage | null {
    const f = this.slot;
    this.slot = null;
    return f;
  }

  /** Rate-limited, range-clamped send; returns whether it went out. */
  sendControl(c: ControlMessage): boolean {
    if (this.closed || !this.limiter.allow()) return false;
    this.transport.send(encodeMessage(clampControl(c)));
    return true;
  }

  /** Unthrottled one-shot commands (buttons). */
  sendCommand(c: ControlMessage): void {
    if (this.closed) return;
    this.transport.send(encodeMessage(clampControl(c)));
  }

  toggleRecord(): void {
    this.sendCommand({ ee_delta: [0, 0, 0, 0, 0, 0], record_toggle: true });
  }

  requestReset(task: string, level: number, seed: number): void {
    this.sendCommand({ ee_delta: [0, 0, 0, 0, 0, 0], reset: { task, level, seed } });
  }
}
