/**
 * Mock multimodal predictor: noisy constant-velocity modes.
 *
 * Each agent gets 6 modes fanned off its last history frame's velocity
 * (straight, +-5deg, +-15deg, 0.8x speed), each perturbed with Gaussian
 * noise (sigma 0.05 rad on heading, 0.5 m/s on speed). Noise streams are
 * keyed by (seed, scenario_id, agent id, step), where step counts the
 * requests seen for that scenario, so a fixed seed reproduces every
 * response bit for bit while different agents and steps stay diverse.
 */

import { AgentOutput, Mode, PredictRequest, MODES_PER_AGENT } from "./protocol.js";
import { Rng } from "./rng.js";

const FRAME_PERIOD = 0.1;
const PROBABILITIES = [0.5, 0.15, 0.15, 0.08, 0.08, 0.04];
const ANGLE_OFFSETS_DEG = [0, 5, -5, 15, -15];
const SLOW_FACTOR = 0.8;
const HEADING_SIGMA = 0.05; // radians
const SPEED_SIGMA = 0.5; // m/s

export class MockCvPredictor {
  readonly name = "mock-cv";
  private stepByScenario = new Map<string, number>();

  constructor(private readonly seed: number) {}

  predict(request: PredictRequest): { type: "prediction"; agents: AgentOutput[] } {
    const step = this.stepByScenario.get(request.scenario_id) ?? 0;
    this.stepByScenario.set(request.scenario_id, step + 1);
    const agents = request.agents.map((agent) =>
      this.agentModes(request, agent.id, agent.history, step),
    );
    return { type: "prediction", agents };
  }

  private agentModes(
    request: PredictRequest,
    agentId: string,
    history: number[][],
    step: number,
  ): AgentOutput {
    const last = history[history.length - 1];
    const [cx, cy] = [last[0], last[1]];
    const [vx, vy] = [last[7], last[8]];
    const rng = new Rng(`${this.seed}|${request.scenario_id}|${agentId}|${step}`);
    const modes: Mode[] = [];
    for (let m = 0; m < MODES_PER_AGENT; m++) {
      const base =
        m < ANGLE_OFFSETS_DEG.length
          ? rotate(vx, vy, (ANGLE_OFFSETS_DEG[m] * Math.PI) / 180)
          : [SLOW_FACTOR * vx, SLOW_FACTOR * vy];
      const dtheta = rng.normal(0, HEADING_SIGMA);
      const dspeed = rng.normal(0, SPEED_SIGMA);
      const speed = Math.hypot(base[0], base[1]);
      const scale = speed > 1e-12 ? Math.max(0, speed + dspeed) / speed : 0;
      const [nvx, nvy] = rotate(scale * base[0], scale * base[1], dtheta);
      const trajectory: number[][] = [];
      for (let j = 0; j < request.horizon_frames; j++) {
        const t = (j + 1) * FRAME_PERIOD;
        trajectory.push([cx + nvx * t, cy + nvy * t, nvx, nvy]);
      }
      modes.push({ probability: PROBABILITIES[m], trajectory });
    }
    return { id: agentId, modes };
  }
}

function rotate(x: number, y: number, angle: number): [number, number] {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  return [c * x - s * y, s * x + c * y];
}

export function makePredictor(name: string, seed: number): MockCvPredictor {
  if (name !== "mock-cv") {
    throw new Error(`unknown predictor plugin ${JSON.stringify(name)}`);
  }
  return new MockCvPredictor(seed);
}
