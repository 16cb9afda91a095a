// TCP transport for Node (tests and command-line use). The browser build
// uses the WebSocket transport in main.ts instead.

import * as net from "net";
import { Transport } from "./session.js";

export function connectTcp(host: string, port: number, timeoutMs = 5000): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const sock = net.createConnection({ host, port });
    const timer = setTimeout(() => {
      sock.destroy();
      reject(new Error(`connect timeout to ${host}:${port}`));
    }, timeoutMs);
    sock.once("error", (e) => {
      clearTimeout(timer);
      reject(e);
    });
    sock.once("connect", () => {
      clearTimeout(timer);
      let dataCb: (d: Uint8Array) => void = () => {};
      let closeCb: () => void = () => {};
      sock.on("data", (d) => dataCb(new Uint8Array(d)));
      sock.on("close", () => closeCb());
      sock.on("error", () => sock.destroy());
      resolve({
        send: (d) => sock.write(d),
        onData: (cb) => {
          dataCb = cb;
        },
        onClose: (cb) => {
          closeCb = cb;
        },
        close: () => sock.destroy(),
      });
    });
  });
}
