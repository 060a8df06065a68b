/**
 * Request loop: one JSON line in, exactly one JSON line out.
 *
 * Malformed requests produce an error line and the loop keeps serving;
 * closing the stream ends it cleanly. Socket mode accepts one connection
 * at a time (the protocol serializes requests anyway).
 */

import { createInterface } from "node:readline";
import net from "node:net";
import { Readable, Writable } from "node:stream";

import { MockCvPredictor } from "./mock-cv.js";
import { errorLine, parseRequest } from "./protocol.js";

export interface AdapterConfig {
  mode: "stdio" | "socket";
  host?: string;
  port?: number;
  seed: number;
  predictor: MockCvPredictor;
}

export function handleLine(predictor: MockCvPredictor, line: string): string {
  try {
    const request = parseRequest(line);
    return JSON.stringify(predictor.predict(request));
  } catch (err) {
    return errorLine(err instanceof Error ? err.message : String(err));
  }
}

export function serveStream(
  predictor: MockCvPredictor,
  input: Readable,
  output: Writable,
): Promise<void> {
  return new Promise((resolve) => {
    const rl = createInterface({ input, crlfDelay: Infinity });
    rl.on("line", (line) => {
      if (line.trim().length === 0) return;
      output.write(handleLine(predictor, line) + "\n");
    });
    rl.on("close", resolve);
  });
}

export async function serve(config: AdapterConfig): Promise<void> {
  if (config.mode === "stdio") {
    await serveStream(config.predictor, process.stdin, process.stdout);
    return;
  }
  const server = net.createServer();
  server.maxConnections = 1;
  server.on("connection", (socket) => {
    socket.on("error", () => socket.destroy());
    void serveStream(config.predictor, socket, socket);
  });
  await new Promise<void>((resolve, reject) => {
    server.on("error", reject);
    server.listen(config.port, config.host, () => {
      const addr = server.address() as net.AddressInfo;
      // stderr so the protocol channel stays clean; tests parse this line
      process.stderr.write(`listening on ${addr.address}:${addr.port}\n`);
      resolve();
    });
  });
  await new Promise<void>((resolve) => server.on("close", resolve));
}
