#!/usr/bin/env node
/**
 * Reference predictor adapter for the simloop bridge protocol.
 *
 * Usage:
 *   simloop-mock-adapter --stdio [--seed N] [--predictor mock-cv]
 *   simloop-mock-adapter --listen HOST:PORT [--seed N] [--predictor mock-cv]
 *
 * Swap makePredictor() for a learned model to serve real predictions; the
 * harness only sees the wire protocol.
 */

import { makePredictor } from "./mock-cv.js";
import { AdapterConfig, serve } from "./server.js";

function usage(message?: string): never {
  if (message) process.stderr.write(`error: ${message}\n`);
  process.stderr.write(
    "usage: simloop-mock-adapter (--stdio | --listen HOST:PORT) " +
      "[--seed N] [--predictor mock-cv]\n",
  );
  process.exit(message ? 2 : 0);
}

export function parseArgs(argv: string[]): AdapterConfig {
  let mode: "stdio" | "socket" | undefined;
  let host = "127.0.0.1";
  let port = 0;
  let seed = 0;
  let predictorName = "mock-cv";
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    switch (arg) {
      case "--stdio":
        if (mode) usage("exactly one of --stdio / --listen");
        mode = "stdio";
        break;
      case "--listen": {
        if (mode) usage("exactly one of --stdio / --listen");
        const value = argv[++i];
        if (!value) usage("--listen needs HOST:PORT");
        const sep = value.lastIndexOf(":");
        if (sep <= 0) usage(`bad endpoint ${value}`);
        host = value.slice(0, sep);
        port = Number(value.slice(sep + 1));
        if (!Number.isInteger(port) || port < 0 || port > 65535) {
          usage(`bad port in ${value}`);
        }
        mode = "socket";
        break;
      }
      case "--seed": {
        const value = Number(argv[++i]);
        if (!Number.isInteger(value)) usage("--seed needs an integer");
        seed = value;
        break;
      }
      case "--predictor":
        predictorName = argv[++i] ?? usage("--predictor needs a name");
        break;
      case "--help":
      case "-h":
        usage();
        break;
      default:
        usage(`unknown argument ${arg}`);
    }
  }
  if (!mode) usage("exactly one of --stdio / --listen is required");
  return { mode, host, port, seed, predictor: makePredictor(predictorName, seed) };
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("main.js") || entry.endsWith("simloop-mock-adapter")) {
  serve(parseArgs(process.argv.slice(2))).catch((err) => {
    process.stderr.write(`fatal: ${err}\n`);
    process.exit(1);
  });
}
