// 4-byte big-endian length prefix + UTF-8 JSON body, matching the server.

export class ProtocolError extends Error {}

const MAX_BODY = 1 << 22;

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

export function encodeMessage(obj: unknown): Uint8Array {
  const body = encoder.encode(JSON.stringify(obj));
  const out = new Uint8Array(4 + body.length);
  new DataView(out.buffer).setUint32(0, body.length, false);
  out.set(body, 4);
  return out;
}

/** Incremental deframer: feed chunks, get complete JSON values back. */
export class Deframer {
  private buf = new Uint8Array(0);

  push(chunk: Uint8Array): unknown[] {
    const joined = new Uint8Array(this.buf.length + chunk.length);
    joined.set(this.buf, 0);
    joined.set(chunk, this.buf.length);
    this.buf = joined;
    const out: unknown[] = [];
    for (;;) {
      if (this.buf.length < 4) return out;
      const n = new DataView(this.buf.buffer, this.buf.byteOffset).getUint32(0, false);
      if (n > MAX_BODY) throw new ProtocolError(`message length ${n} exceeds limit`);
      if (this.buf.length < 4 + n) return out;
      const body = this.buf.subarray(4, 4 + n);
      this.buf = this.buf.slice(4 + n);
      let text: string;
      try {
        text = decoder.decode(body);
      } catch {
        throw new ProtocolError("message body is not valid UTF-8");
      }
      try {
        out.push(JSON.parse(text));
      } catch {
        throw new ProtocolError("message body is not valid JSON");
      }
    }
  }
}
