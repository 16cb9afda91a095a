import { describe, expect, it } from "vitest";
import { encodeMessage } from "../src/framing.js";
import { Transport, TeleopClient } from "../src/session.js";
import { statusLine } from "../src/view.js";

class FakeTransport implements Transport {
  sent: Uint8Array[] = [];
  private dataCb: (d: Uint8Array) => void = () => {};
  private closeCb: () => void = () => {};
  closed = false;

  send(d: Uint8Array): void {
    this.sent.push(d);
  }
  onData(cb: (d: Uint8Array) => void): void {
    this.dataCb = cb;
  }
  onClose(cb: () => void): void {
    this.closeCb = cb;
  }
  close(): void {
    this.closed = true;
    this.closeCb();
  }
  feed(obj: unknown): void {
    this.dataCb(encodeMessage(obj));
  }
  feedRaw(d: Uint8Array): void {
    this.dataCb(d);
  }
}

const HANDSHAKE = { proto: 1, task: "pick_place", F: 2, resolution: [16, 16] };

function frame(tick: number): unknown {
  return {
    tick,
    image: { w: 16, h: 16, rgb8_b64: "A".repeat(1024) },
    proprio: [1, 0, 0, 0, 0, 0, 0.1, 1, 0],
    success_flag: false,
    recording_flag: false,
  };
}

describe("teleop client session", () => {
  it("parses the handshake and then frames in order", () => {
    const t = new FakeTransport();
    const seen: number[] = [];
    const c = new TeleopClient(t, { onFrame: (f) => seen.push(f.tick) }, () => 0);
    t.feed(HANDSHAKE);
    expect(c.handshake?.resolution).toEqual([16, 16]);
    t.feed(frame(0));
    t.feed(frame(1));
    expect(seen).toEqual([0, 1]);
  });

  it("counts drops when frames arrive faster than the view consumes", () => {
    const t = new FakeTransport();
    const c = new TeleopClient(t, {}, () => 0);
    t.feed(HANDSHAKE);
    t.feed(frame(0));
    t.feed(frame(1));
    t.feed(frame(2));
    expect(c.framesDropped).toBe(2);
    expect(c.takeFrame()?.tick).toBe(2);
    expect(c.takeFrame()).toBeNull();
    t.feed(frame(3));
    expect(c.framesDropped).toBe(2);
  });

  it("survives malformed frames without crashing", () => {
    const t = new FakeTransport();
    const c = new TeleopClient(t, {}, () => 0);
    t.feed(HANDSHAKE);
    t.feed({ tick: "x" });
    t.feed([1, 2, 3]);
    t.feed(frame(5));
    expect(c.malformedMessages).toBe(2);
    expect(c.lastTick).toBe(5);
  });

  it("closes the transport on an unframeable byte stream", () => {
    const t = new FakeTransport();
    const c = new TeleopClient(t, {}, () => 0);
    t.feed(HANDSHAKE);
    t.feedRaw(new Uint8Array([0, 0, 0, 2, 0x21, 0x21]));
    expect(t.closed).toBe(true);
    expect(c.malformedMessages).toBe(1);
  });

  it("rate-limits controls to the server tick rate", () => {
    let now = 0;
    const t = new FakeTransport();
    const c = new TeleopClient(t, {}, () => now);
    t.feed(HANDSHAKE);
    let sent = 0;
    for (let i = 0; i < 120; i++) {
      if (c.sendControl({ ee_delta: [0, 0, 0, 0.5, 0, 0] })) sent += 1;
      now += 1000 / 120; // trying at 120 Hz for one second
    }
    expect(sent).toBeLessThanOrEqual(30);
    expect(sent).toBeGreaterThan(25);
  });

  it("clamps outgoing controls", () => {
    const t = new FakeTransport();
    const c = new TeleopClient(t, {}, () => 0);
    t.feed(HANDSHAKE);
    c.sendControl({ ee_delta: [9, -9, 0, 0, 0, 0], fingers: [5, -5] });
    const body = JSON.parse(new TextDecoder().decode(t.sent[0]!.subarray(4)));
    expect(body.ee_delta).toEqual([1, -1, 0, 0, 0, 0]);
    expect(body.fingers).toEqual([2, 0]);
  });

  it("record and reset buttons emit the corresponding fields", () => {
    const t = new FakeTransport();
    const c = new TeleopClient(t, {}, () => 0);
    t.feed(HANDSHAKE);
    c.toggleRecord();
    c.requestReset("rotate", 1, 42);
    const msgs = t.sent.map((b) => JSON.parse(new TextDecoder().decode(b.subarray(4))));
    expect(msgs[0].record_toggle).toBe(true);
    expect(msgs[1].reset).toEqual({ task: "rotate", level: 1, seed: 42 });
  });

  it("reports the connection loss", () => {
    const t = new FakeTransport();
    let status = "";
    new TeleopClient(t, { onStatus: (s) => (status = s) }, () => 0);
    t.close();
    expect(status).toContain("connection lost");
  });
});

describe("status line", () => {
  it("summarizes the session", () => {
    const s = statusLine({ connected: true, tick: 12, recording: true, success: false, dropped: 3 });
    expect(s).toContain("connected");
    expect(s).toContain("tick 12");
    expect(s).toContain("RECORDING");
    expect(s).toContain("dropped 3");
  });
});
