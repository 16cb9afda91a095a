// Browser entry point: wires keyboard input, the frame canvas, and the
// record/reset buttons to a TeleopClient over a WebSocket transport.
//
// The server speaks the length-prefixed protocol over plain TCP, so point
// this page at a ws->tcp bridge (e.g. `websockify 8765 127.0.0.1:7777`)
// carrying the raw bytes, or any WebSocket endpoint that relays them.

import { InputTracker, controlFromInput } from "./input.js";
import { Transport, TeleopClient } from "./session.js";
import { FrameView, statusLine } from "./view.js";

function webSocketTransport(url: string): Transport {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  let dataCb: (d: Uint8Array) => void = () => {};
  let closeCb: () => void = () => {};
  ws.onmessage = (ev) => dataCb(new Uint8Array(ev.data as ArrayBuffer));
  ws.onclose = () => closeCb();
  ws.onerror = () => ws.close();
  return {
    send: (d) => ws.send(d),
    onData: (cb) => {
      dataCb = cb;
    },
    onClose: (cb) => {
      closeCb = cb;
    },
    close: () => ws.close(),
  };
}

export function start(): void {
  const doc = document;
  const canvas = doc.getElementById("frame") as HTMLCanvasElement | null;
  const status = doc.getElementById("status");
  const view = new FrameView(canvas, status);
  const urlInput = doc.getElementById("url") as HTMLInputElement | null;
  const connectBtn = doc.getElementById("connect");
  const recordBtn = doc.getElementById("record");
  const resetBtn = doc.getElementById("reset");

  let client: TeleopClient | null = null;
  let fingerDim = 2;
  let connected = false;
  let recording = false;
  let success = false;
  const tracker = new InputTracker();

  doc.addEventListener("keydown", (e) => {
    if (e.code === "KeyR") client?.toggleRecord();
    else if (e.code === "KeyX") client?.requestReset("pick_place", 1, Math.floor(Math.random() * 1e6));
    else tracker.keyDown(e.code);
    if (e.code === "Space") e.preventDefault();
  });
  doc.addEventListener("keyup", (e) => tracker.keyUp(e.code));

  function connect(): void {
    const url = urlInput?.value || "ws://127.0.0.1:8765";
    const transport = webSocketTransport(url);
    client = new TeleopClient(transport, {
      onHandshake: (h) => {
        connected = true;
        fingerDim = h.F;
        view.sizeTo(h.resolution[0], h.resolution[1]);
        view.setStatus(`connected: ${h.task}`);
      },
      onFrame: (f) => {
        recording = f.recording_flag;
        success = f.success_flag;
      },
      onStatus: (t) => view.setStatus(t),
      onClose: () => {
        connected = false;
        view.setStatus("connection lost; press Connect to retry");
      },
    });
  }
  connectBtn?.addEventListener("click", connect);
  recordBtn?.addEventListener("click", () => client?.toggleRecord());
  resetBtn?.addEventListener("click", () =>
    client?.requestReset("pick_place", 1, Math.floor(Math.random() * 1e6)),
  );

  function loop(): void {
    if (client) {
      const frame = client.takeFrame();
      if (frame) view.draw(frame);
      client.sendControl(controlFromInput(tracker, fingerDim));
      if (status) {
        status.textContent = statusLine({
          connected,
          tick: client.lastTick,
          recording,
          success,
          dropped: client.framesDropped,
        });
      }
    }
    requestAnimationFrame(loop);
  }
  requestAnimationFrame(loop);
}

if (typeof document !== "undefined") {
  if (document.readyState === "loading") document.addEventListener("DOMContentLoaded", start);
  else start();
}
