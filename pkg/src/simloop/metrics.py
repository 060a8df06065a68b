"""Desk-scale rollout evaluation.

minADE against the logged future, disc-test collision counting on executed
frames, and the four kinematic channels: linear speed, linear acceleration
magnitude, angular speed, angular acceleration magnitude. Angular speed is
differenced from executed headings (the post-processing output), wrapped on
the circle so the +-pi seam never produces spurious spikes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import Rollout
from .heading import wrapped_delta
from .scenario import FRAME_PERIOD, Scenario


@dataclass(frozen=True)
class KinematicFeatures:
    """Per-agent channels; finite differencing trims one frame per derivative."""

    agent_ids: tuple[str, ...]
    linear_speed: np.ndarray  # (N, T)
    linear_accel: np.ndarray  # (N, T-1), magnitudes
    angular_speed: np.ndarray  # (N, T-1), signed
    angular_accel: np.ndarray  # (N, T-2), magnitudes


@dataclass(frozen=True)
class RolloutRow:
    variant_id: str
    branch_path: tuple[int, ...]
    ade: float
    collision_pairs: int


@dataclass(frozen=True)
class EvaluationReport:
    scenario_id: str
    min_ade: float
    rollout_count: int
    rows: tuple[RolloutRow, ...]
    feature_means: dict[str, float]
    feature_maxes: dict[str, float]


def _positions(rollout: Rollout) -> np.ndarray:
    """(N, T, 2) center positions."""
    return np.array(
        [[(f.cx, f.cy) for f in agent] for agent in rollout.frames], dtype=float
    )


def _gt_positions(scenario: Scenario, agent_ids: Sequence[str], t: int) -> np.ndarray:
    out = np.empty((len(agent_ids), t, 2), dtype=float)
    for i, agent_id in enumerate(agent_ids):
        agent = scenario.agent(agent_id)
        if agent.ground_truth_future is None:
            raise ValueError(f"agent {agent_id!r} has no ground_truth_future")
        if len(agent.ground_truth_future) < t:
            raise ValueError(
                f"agent {agent_id!r}: ground truth covers "
                f"{len(agent.ground_truth_future)} frames, rollout has {t}"
            )
        out[i] = [(f.cx, f.cy) for f in agent.ground_truth_future[:t]]
    return out


def ade(rollout: Rollout, scenario: Scenario) -> float:
    """Average displacement error over all agents and frames, in meters."""
    sim = _positions(rollout)
    gt = _gt_positions(scenario, rollout.agent_ids, sim.shape[1])
    return float(np.mean(np.hypot(sim[..., 0] - gt[..., 0], sim[..., 1] - gt[..., 1])))


def min_ade(rollouts: Sequence[Rollout], scenario: Scenario) -> float:
    """Minimum ADE across the rollout set (the tie-breaking metric)."""
    if not rollouts:
        raise ValueError("need at least one rollout")
    return min(ade(r, scenario) for r in rollouts)


def collision_pairs(
    rollout: Rollout, widths: Sequence[float]
) -> tuple[int, list[tuple[tuple[str, str], int]]]:
    """Agent pairs closer than their half width sum at any synchronized frame.

    Returns the pair count and, per colliding pair, the first frame at which
    the disc test fires. Each unordered pair counts once.
    """
    n = len(rollout.agent_ids)
    if len(widths) != n:
        raise ValueError(f"expected {n} widths, got {len(widths)}")
    pos = _positions(rollout)
    hits: list[tuple[tuple[str, str], int]] = []
    for i in range(n):
        for j in range(i + 1, n):
            gap = np.hypot(
                pos[i, :, 0] - pos[j, :, 0], pos[i, :, 1] - pos[j, :, 1]
            )
            close = gap <= (widths[i] + widths[j]) / 2.0
            if close.any():
                frame = int(np.argmax(close))
                hits.append(((rollout.agent_ids[i], rollout.agent_ids[j]), frame))
    return len(hits), hits


def kinematic_features(rollout: Rollout) -> KinematicFeatures:
    t = rollout.n_frames
    if t < 3:
        raise ValueError(f"need at least 3 frames, got {t}")
    n = len(rollout.agent_ids)
    vel = np.array(
        [[(f.vx, f.vy) for f in agent] for agent in rollout.frames], dtype=float
    )
    headings = np.array(
        [[f.heading for f in agent] for agent in rollout.frames], dtype=float
    )
    speed = np.hypot(vel[..., 0], vel[..., 1])
    accel = np.abs(np.diff(speed, axis=1)) / FRAME_PERIOD
    ang_speed = np.empty((n, t - 1))
    for i in range(n):
        for k in range(t - 1):
            ang_speed[i, k] = wrapped_delta(headings[i, k], headings[i, k + 1]) / FRAME_PERIOD
    ang_accel = np.abs(np.diff(ang_speed, axis=1)) / FRAME_PERIOD
    return KinematicFeatures(
        agent_ids=rollout.agent_ids,
        linear_speed=speed,
        linear_accel=accel,
        angular_speed=ang_speed,
        angular_accel=ang_accel,
    )


def evaluate(
    scenario: Scenario,
    rollouts: Sequence[Rollout],
    widths: Sequence[float] | None = None,
) -> EvaluationReport:
    """Assemble the per-scenario report; deterministic in rollout order.

    Widths default to each agent's box width (dy) at the simulation start.
    """
    if not rollouts:
        raise ValueError("need at least one rollout")
    agent_ids = rollouts[0].agent_ids
    scenario_ids = {r.scenario_id for r in rollouts}
    if scenario_ids != {scenario.scenario_id}:
        raise ValueError(
            f"rollout scenario ids {sorted(scenario_ids)} do not match "
            f"{scenario.scenario_id!r}"
        )
    for r in rollouts:
        if r.agent_ids != agent_ids:
            raise ValueError("rollouts disagree on agent ids")
    if set(agent_ids) != {a.id for a in scenario.agents}:
        raise ValueError("rollout agents do not match the scenario")
    if widths is None:
        widths = [scenario.agent(a).current.dy for a in agent_ids]
    rows = []
    channel_values: dict[str, list[np.ndarray]] = {
        "linear_speed": [],
        "linear_accel": [],
        "angular_speed": [],
        "angular_accel": [],
    }
    for r in rollouts:
        count, _ = collision_pairs(r, widths)
        rows.append(
            RolloutRow(
                variant_id=r.variant_id,
                branch_path=r.branch_path,
                ade=ade(r, scenario),
                collision_pairs=count,
            )
        )
        feats = kinematic_features(r)
        channel_values["linear_speed"].append(feats.linear_speed)
        channel_values["linear_accel"].append(feats.linear_accel)
        channel_values["angular_speed"].append(feats.angular_speed)
        channel_values["angular_accel"].append(feats.angular_accel)
    means = {k: float(np.mean(np.concatenate([a.ravel() for a in v])))
             for k, v in channel_values.items()}
    maxes = {k: float(np.max(np.concatenate([a.ravel() for a in v])))
             for k, v in channel_values.items()}
    return EvaluationReport(
        scenario_id=scenario.scenario_id,
        min_ade=min(row.ade for row in rows),
        rollout_count=len(rollouts),
        rows=tuple(rows),
        feature_means=means,
        feature_maxes=maxes,
    )
