/**
 * Wire protocol types: newline-delimited JSON, one response per request.
 *
 * Request:  {"type":"predict","scenario_id",...,"agents":[{"id","kind",
 *            "history":[[10 numbers] x 11]}],"map":[...]}
 * Response: {"type":"prediction","agents":[{"id","modes":[{"probability",
 *            "trajectory":[[cx,cy,vx,vy] x horizon]} x 6]}]}
 * Error:    {"type":"error","message"}
 */

export const HISTORY_LEN = 11;
export const FRAME_WIDTH = 10;
export const MODES_PER_AGENT = 6;

export interface AgentInput {
  id: string;
  kind: string;
  history: number[][];
}

export interface PredictRequest {
  type: "predict";
  scenario_id: string;
  horizon_frames: number;
  agents: AgentInput[];
  map: unknown[];
}

export interface Mode {
  probability: number;
  trajectory: number[][];
}

export interface AgentOutput {
  id: string;
  modes: Mode[];
}

export interface PredictionResponse {
  type: "prediction";
  agents: AgentOutput[];
}

export interface ErrorResponse {
  type: "error";
  message: string;
}

export class ProtocolError extends Error {}

export function parseRequest(line: string): PredictRequest {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch (err) {
    throw new ProtocolError(`request is not valid JSON: ${err}`);
  }
  if (typeof doc !== "object" || doc === null) {
    throw new ProtocolError("request must be a JSON object");
  }
  const req = doc as Record<string, unknown>;
  if (req.type !== "predict") {
    throw new ProtocolError(`unknown message type ${JSON.stringify(req.type)}`);
  }
  if (typeof req.scenario_id !== "string") {
    throw new ProtocolError("missing scenario_id");
  }
  if (typeof req.horizon_frames !== "number" || req.horizon_frames < 1) {
    throw new ProtocolError("horizon_frames must be a positive number");
  }
  if (!Array.isArray(req.agents) || req.agents.length === 0) {
    throw new ProtocolError("agents must be a non-empty array");
  }
  for (const [i, agent] of (req.agents as unknown[]).entries()) {
    const a = agent as Record<string, unknown>;
    if (typeof a?.id !== "string") {
      throw new ProtocolError(`agent ${i}: missing id`);
    }
    const history = a.history;
    if (!Array.isArray(history) || history.length !== HISTORY_LEN) {
      throw new ProtocolError(
        `agent ${a.id}: history must have ${HISTORY_LEN} frames`,
      );
    }
    for (const [t, row] of (history as unknown[]).entries()) {
      if (
        !Array.isArray(row) ||
        row.length !== FRAME_WIDTH ||
        !row.every((v) => typeof v === "number" && Number.isFinite(v))
      ) {
        throw new ProtocolError(
          `agent ${a.id}: history frame ${t} must be ${FRAME_WIDTH} finite numbers`,
        );
      }
    }
  }
  return req as unknown as PredictRequest;
}

export function errorLine(message: string): string {
  const doc: ErrorResponse = { type: "error", message };
  return JSON.stringify(doc);
}
