/** Integration: key press -> control message -> reflected in the stream,
 * measured against the real service running locally. */

import { spawn, type ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { decodeColumn, parseControlReply } from "../src/protocol.js";

const PORT = 8891;
const BASE = `http://127.0.0.1:${PORT}`;
const HERE = path.dirname(fileURLToPath(import.meta.url));

let server: ChildProcess;

async function waitForServer(timeoutMs = 60000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/project`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up");
}

function openSocket(url: string): Promise<WebSocket> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(url);
    ws.binaryType = "arraybuffer";
    ws.once("open", () => resolve(ws));
    ws.once("error", reject);
  });
}

beforeAll(async () => {
  server = spawn("python3", [path.join(HERE, "serve_toy.py"), String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  await waitForServer();
}, 90000);

afterAll(() => {
  server?.kill();
});

describe("round trip against a local service", () => {
  it("describes the project over HTTP", async () => {
    const doc = await (await fetch(`${BASE}/project`)).json();
    expect(doc.layers.map((l: { id: string }) => l.id)).toEqual(["L0", "L1"]);
    expect(doc.frame_rate).toBe(30);
  });

  it("reflects a trigger in the stream within 250 ms", async () => {
    const control = await openSocket(`${BASE.replace("http", "ws")}/control`);
    const stream = await openSocket(`${BASE.replace("http", "ws")}/stream`);

    let lastColumn = -1;
    let ackColumn: number | null = null;
    let reflectedAt: number | null = null;

    const reflected = new Promise<void>((resolve) => {
      stream.on("message", (data: ArrayBuffer) => {
        const { column } = decodeColumn(data);
        lastColumn = column;
        if (ackColumn !== null && column >= ackColumn && !reflectedAt) {
          reflectedAt = performance.now();
          resolve();
        }
      });
    });
    const acked = new Promise<void>((resolve) => {
      control.on("message", (data: Buffer) => {
        const reply = parseControlReply(data.toString());
        if (reply.op === "ack") {
          ackColumn = reply.column;
          resolve();
        }
      });
    });

    // let the clock tick a little so the session is mid-performance
    await new Promise((r) => setTimeout(r, 300));
    expect(lastColumn).toBeGreaterThanOrEqual(0);

    const pressAt = performance.now();
    control.send(JSON.stringify({ op: "trigger", layer: "L0", action: "a1" }));
    await acked;
    await reflected;
    const elapsed = reflectedAt! - pressAt;
    console.log(
      `[ROUNDTRIP] trigger -> ack column ${ackColumn} -> reflected in ` +
        `${elapsed.toFixed(1)} ms`,
    );
    expect(elapsed).toBeLessThan(250);

    control.close();
    stream.close();
  }, 30000);
});
