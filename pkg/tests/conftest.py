"""Shared scenario builders for the test suite."""

from __future__ import annotations

import math

import pytest

from simloop import Agent, AgentFrame, AgentKind, Scenario
from simloop.scenario import FRAME_PERIOD, FUTURE_LEN, HISTORY_LEN


def make_frame(
    cx=0.0, cy=0.0, cz=0.0, dx=4.0, dy=2.0, dz=1.5,
    heading=0.0, vx=0.0, vy=0.0, valid=True,
) -> AgentFrame:
    return AgentFrame(
        cx=cx, cy=cy, cz=cz, dx=dx, dy=dy, dz=dz,
        heading=heading, vx=vx, vy=vy, valid=valid,
    )


def straight_history(
    x0: float, y0: float, vx: float, vy: float, **frame_kw
) -> tuple[AgentFrame, ...]:
    """11 frames of constant-velocity motion ending at (x0, y0)."""
    heading = math.atan2(vy, vx) if (vx, vy) != (0.0, 0.0) else 0.0
    if heading >= math.pi:
        heading = -math.pi
    frames = []
    for i in range(HISTORY_LEN):
        back = (HISTORY_LEN - 1 - i) * FRAME_PERIOD
        frames.append(
            make_frame(
                cx=x0 - vx * back, cy=y0 - vy * back,
                heading=heading, vx=vx, vy=vy, **frame_kw,
            )
        )
    return tuple(frames)


def straight_future(
    x0: float, y0: float, vx: float, vy: float, n: int = FUTURE_LEN, **frame_kw
) -> tuple[AgentFrame, ...]:
    """n frames continuing constant-velocity motion from (x0, y0)."""
    heading = math.atan2(vy, vx) if (vx, vy) != (0.0, 0.0) else 0.0
    if heading >= math.pi:
        heading = -math.pi
    return tuple(
        make_frame(
            cx=x0 + vx * (j + 1) * FRAME_PERIOD,
            cy=y0 + vy * (j + 1) * FRAME_PERIOD,
            heading=heading, vx=vx, vy=vy, **frame_kw,
        )
        for j in range(n)
    )


def straight_agent(
    agent_id: str, x0: float, y0: float, vx: float, vy: float,
    kind: AgentKind = AgentKind.VEHICLE, with_future: bool = False, **frame_kw
) -> Agent:
    return Agent(
        id=agent_id,
        kind=kind,
        history=straight_history(x0, y0, vx, vy, **frame_kw),
        ground_truth_future=(
            straight_future(x0, y0, vx, vy, **frame_kw) if with_future else None
        ),
    )


def make_scenario(*agents: Agent, scenario_id: str = "test") -> Scenario:
    return Scenario(scenario_id=scenario_id, agents=tuple(agents))


@pytest.fixture
def single_agent_scenario() -> Scenario:
    return make_scenario(straight_agent("a0", 0.0, 0.0, 10.0, 0.0, with_future=True))


@pytest.fixture
def two_agent_scenario() -> Scenario:
    return make_scenario(
        straight_agent("a0", 0.0, 0.0, 10.0, 0.0, with_future=True),
        straight_agent("a1", 0.0, 50.0, 10.0, 0.0, with_future=True),
    )
