// Canvas + status rendering. Everything here degrades to a no-op without a
// DOM so the session logic stays testable in Node.

import { FrameMessage } from "./protocol.js";
import { decodeBase64 } from "./protocol.js";

export class FrameView {
  private ctx: CanvasRenderingContext2D | null = null;
  private off: HTMLCanvasElement | null = null;

  constructor(private canvas: HTMLCanvasElement | null, private status: HTMLElement | null) {
    if (canvas) this.ctx = canvas.getContext("2d");
  }

  sizeTo(w: number, h: number): void {
    if (!this.canvas) return;
    // fixed on-screen size, aspect preserved by scaling the square source
    this.canvas.width = w;
    this.canvas.height = h;
    this.canvas.style.imageRendering = "pixelated";
  }

  draw(frame: FrameMessage): void {
    if (!this.ctx || !this.canvas) return;
    const { w, h, rgb8_b64 } = frame.image;
    const rgb = decodeBase64(rgb8_b64);
    if (rgb.length !== w * h * 3) return;
    const rgba = new Uint8ClampedArray(w * h * 4);
    for (let i = 0, j = 0; i < rgb.length; i += 3, j += 4) {
      rgba[j] = rgb[i]!;
      rgba[j + 1] = rgb[i + 1]!;
      rgba[j + 2] = rgb[i + 2]!;
      rgba[j + 3] = 255;
    }
    if (this.canvas.width !== w || this.canvas.height !== h) this.sizeTo(w, h);
    this.ctx.putImageData(new ImageData(rgba, w, h), 0, 0);
  }

  setStatus(text: string): void {
    if (this.status) this.status.textContent = text;
  }
}

export function statusLine(opts: {
  connected: boolean;
  tick: number;
  recording: boolean;
  success: boolean;
  dropped: number;
  saved?: number;
}): string {
  const parts = [
    opts.connected ? "connected" : "disconnected",
    `tick ${opts.tick}`,
    opts.recording ? "RECORDING" : "idle",
    opts.success ? "SUCCESS" : "",
    `dropped ${opts.dropped}`,
  ];
  if (opts.saved !== undefined) parts.push(`saved ${opts.saved}`);
  return parts.filter(Boolean).join(" | ");
}
