"""Multimodal motion-predictor contract and built-in predictors.

A predictor maps a batch request (one 11-frame history window per agent,
plus map polylines) to exactly 6 candidate trajectories per agent with
descending, sum-to-one probabilities. The rollout engine treats predictors
as black boxes behind this contract; the built-ins below are analytic
stand-ins for a learned model at desk scale.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .collision import MODES_PER_AGENT, ModeSet, ModeSetError
from .scenario import (
    HISTORY_LEN,
    FRAME_PERIOD,
    AgentFrame,
    AgentKind,
    MapPolyline,
    Scenario,
    TrajectorySample,
)

CV_PROBABILITIES = (0.5, 0.15, 0.15, 0.08, 0.08, 0.04)
# modes 1..4 rotate the velocity vector, mode 5 keeps course at reduced speed
CV_ANGLE_OFFSETS = (
    math.radians(5.0),
    -math.radians(5.0),
    math.radians(15.0),
    -math.radians(15.0),
)
CV_SLOW_FACTOR = 0.8

REPLAY_PROBABILITIES = (0.95, 0.01, 0.01, 0.01, 0.01, 0.01)

NOISE_HEADING_SIGMA = 0.05  # radians
NOISE_SPEED_SIGMA = 0.5  # m/s


class PredictorError(RuntimeError):
    """A predictor failed to produce a usable response."""


class ContractViolation(PredictorError):
    """A response violates the predictor contract."""


@dataclass(frozen=True)
class AgentRequest:
    agent_id: str
    kind: AgentKind
    history: tuple[AgentFrame, ...]

    def __post_init__(self) -> None:
        if len(self.history) != HISTORY_LEN:
            raise ValueError(
                f"agent {self.agent_id!r}: history window must have "
                f"{HISTORY_LEN} frames, got {len(self.history)}"
            )


@dataclass(frozen=True)
class PredictionRequest:
    scenario_id: str
    agents: tuple[AgentRequest, ...]
    map_polylines: tuple[MapPolyline, ...]
    horizon_frames: int
    # first index into the 80-frame future this plan covers; harness-side
    # bookkeeping for the replay predictor, never serialized to bridges
    start_frame: int = 0

    def __post_init__(self) -> None:
        if self.horizon_frames < 1:
            raise ValueError("horizon_frames must be >= 1")


@dataclass(frozen=True)
class PredictionResponse:
    modes: tuple[ModeSet, ...]  # aligned with request agent order


@runtime_checkable
class Predictor(Protocol):
    """The contract the rollout engine consumes."""

    name: str

    def predict(self, request: PredictionRequest) -> PredictionResponse:
        ...


def validate_response(
    request: PredictionRequest, response: PredictionResponse
) -> PredictionResponse:
    """Check a response against the contract; raises ContractViolation."""
    if len(response.modes) != len(request.agents):
        raise ContractViolation(
            f"response covers {len(response.modes)} agents, "
            f"request had {len(request.agents)}"
        )
    for i, ms in enumerate(response.modes):
        if ms.agent_index != i:
            raise ContractViolation(
                f"mode set {i} labeled with agent_index {ms.agent_index}"
            )
        if ms.horizon != request.horizon_frames:
            raise ContractViolation(
                f"agent {request.agents[i].agent_id!r}: horizon {ms.horizon}, "
                f"requested {request.horizon_frames}"
            )
    return response


def _mode_set(agent_index: int, trajs, probs) -> ModeSet:
    try:
        return ModeSet(
            agent_index=agent_index,
            trajectories=tuple(tuple(t) for t in trajs),
            probabilities=tuple(probs),
        )
    except ModeSetError as exc:
        raise ContractViolation(str(exc)) from None


def _extrapolate(
    frame: AgentFrame, vx: float, vy: float, horizon: int
) -> tuple[TrajectorySample, ...]:
    return tuple(
        TrajectorySample(
            cx=float(frame.cx + vx * (j + 1) * FRAME_PERIOD),
            cy=float(frame.cy + vy * (j + 1) * FRAME_PERIOD),
            vx=float(vx),
            vy=float(vy),
        )
        for j in range(horizon)
    )


def _cv_velocity_variants(vx: float, vy: float) -> list[tuple[float, float]]:
    variants = [(vx, vy)]
    for ang in CV_ANGLE_OFFSETS:
        ca, sa = math.cos(ang), math.sin(ang)
        variants.append((ca * vx - sa * vy, sa * vx + ca * vy))
    variants.append((CV_SLOW_FACTOR * vx, CV_SLOW_FACTOR * vy))
    return variants


class ConstantVelocityPredictor:
    """Linear extrapolation of each agent's last valid state.

    Mode 0 continues the last frame's velocity; modes 1-4 rotate the velocity
    vector by +-5 and +-15 degrees; mode 5 keeps course at 0.8x speed.
    Deterministic and purely per-agent.
    """

    name = "cv"

    def predict(self, request: PredictionRequest) -> PredictionResponse:
        modes = []
        for i, agent in enumerate(request.agents):
            last = agent.history[-1]
            if not last.valid:
                raise PredictorError(
                    f"agent {agent.agent_id!r}: last history frame is invalid"
                )
            trajs = [
                _extrapolate(last, vx, vy, request.horizon_frames)
                for vx, vy in _cv_velocity_variants(last.vx, last.vy)
            ]
            modes.append(_mode_set(i, trajs, CV_PROBABILITIES))
        return validate_response(request, PredictionResponse(modes=tuple(modes)))


class NoisyConstantVelocityPredictor:
    """Seeded Gaussian perturbation of the constant-velocity modes.

    Stands in for an ensemble of fine-tuned model variants: each (seed,
    scenario, agent, plan start) tuple deterministically derives its own
    noise stream, so rollouts are reproducible and two variants with
    different seeds produce diverse behaviors. Heading noise sigma 0.05 rad,
    speed noise sigma 0.5 m/s, per mode.
    """

    name = "noisy-cv"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.name = f"noisy-cv-{self.seed}"

    def _rng(self, scenario_id: str, agent_id: str, start_frame: int) -> np.random.Generator:
        key = f"{self.seed}|{scenario_id}|{agent_id}|{start_frame}".encode()
        digest = hashlib.sha256(key).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def predict(self, request: PredictionRequest) -> PredictionResponse:
        modes = []
        for i, agent in enumerate(request.agents):
            last = agent.history[-1]
            if not last.valid:
                raise PredictorError(
                    f"agent {agent.agent_id!r}: last history frame is invalid"
                )
            rng = self._rng(request.scenario_id, agent.agent_id, request.start_frame)
            trajs = []
            for vx, vy in _cv_velocity_variants(last.vx, last.vy):
                dtheta = rng.normal(0.0, NOISE_HEADING_SIGMA)
                dspeed = rng.normal(0.0, NOISE_SPEED_SIGMA)
                speed = math.hypot(vx, vy)
                if speed > 1e-12:
                    scale = max(0.0, speed + dspeed) / speed
                else:
                    scale = 0.0
                ca, sa = math.cos(dtheta), math.sin(dtheta)
                nvx = scale * (ca * vx - sa * vy)
                nvy = scale * (sa * vx + ca * vy)
                trajs.append(_extrapolate(last, nvx, nvy, request.horizon_frames))
            modes.append(_mode_set(i, trajs, CV_PROBABILITIES))
        return validate_response(request, PredictionResponse(modes=tuple(modes)))


class ReplayPredictor:
    """Ground-truth oracle: mode 0 replays the logged future.

    Modes 1-5 duplicate mode 0 so the mode-set shape matches the contract;
    probabilities are fixed at [0.95, 0.01 x 5].
    """

    name = "replay"

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        for agent in scenario.agents:
            if agent.ground_truth_future is None:
                raise PredictorError(
                    f"agent {agent.id!r}: replay needs ground_truth_future"
                )

    def predict(self, request: PredictionRequest) -> PredictionResponse:
        lo = request.start_frame
        hi = lo + request.horizon_frames
        modes = []
        for i, agent_req in enumerate(request.agents):
            agent = self.scenario.agent(agent_req.agent_id)
            future = agent.ground_truth_future
            assert future is not None
            if lo < 0 or hi > len(future):
                raise PredictorError(
                    f"agent {agent.id!r}: requested frames [{lo}, {hi}) beyond "
                    f"the {len(future)}-frame ground truth"
                )
            traj = tuple(
                TrajectorySample(cx=f.cx, cy=f.cy, vx=f.vx, vy=f.vy)
                for f in future[lo:hi]
            )
            modes.append(
                _mode_set(i, [traj] * MODES_PER_AGENT, REPLAY_PROBABILITIES)
            )
        return validate_response(request, PredictionResponse(modes=tuple(modes)))


def build_request(
    scenario_id: str,
    agents: Sequence[tuple[str, AgentKind, Sequence[AgentFrame]]],
    map_polylines: Sequence[MapPolyline],
    horizon_frames: int,
    start_frame: int = 0,
) -> PredictionRequest:
    return PredictionRequest(
        scenario_id=scenario_id,
        agents=tuple(
            AgentRequest(agent_id=a, kind=k, history=tuple(h)) for a, k, h in agents
        ),
        map_polylines=tuple(map_polylines),
        horizon_frames=horizon_frames,
        start_frame=start_frame,
    )
