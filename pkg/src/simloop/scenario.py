"""Scenario data model and file format.

A scenario is a JSON document describing N agents, each with a 1.1 s history
window sampled at 10 Hz (11 frames) and optionally a logged 8 s future
(80 frames) used as ground truth by the replay predictor and the metrics.

Frame layout on disk (one array of 10 numbers per frame):

    [cx, cy, cz, dx, dy, dz, heading, vx, vy, valid]

where (cx, cy, cz) is the box center in meters, (dx, dy, dz) are the box
length/width/height, heading is in radians in [-pi, pi), (vx, vy) is the
velocity in m/s and valid is 0 or 1.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

HISTORY_LEN = 11
FUTURE_LEN = 80
FRAME_PERIOD = 0.1
FRAME_WIDTH = 10  # numbers per frame in the file format


class ScenarioFormatError(ValueError):
    """The document does not parse or does not follow the scenario schema."""


class ScenarioValidationError(ValueError):
    """A parsed document violates a scenario invariant."""


class AgentKind(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"


class PolylineKind(str, enum.Enum):
    LANE_CENTER = "lane_center"
    ROAD_EDGE = "road_edge"
    OTHER = "other"


@dataclass(frozen=True)
class AgentFrame:
    """One 10 Hz state sample of one agent in the scene frame."""

    cx: float
    cy: float
    cz: float
    dx: float
    dy: float
    dz: float
    heading: float
    vx: float
    vy: float
    valid: bool

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "cz", "dx", "dy", "dz", "heading", "vx", "vy"):
            if not math.isfinite(getattr(self, name)):
                raise ScenarioValidationError(f"non-finite {name}")
        if not (-math.pi <= self.heading < math.pi):
            raise ScenarioValidationError(
                f"heading {self.heading!r} outside [-pi, pi)"
            )
        if self.valid and not (self.dx > 0 and self.dy > 0 and self.dz > 0):
            raise ScenarioValidationError("valid frame with nonpositive box extent")

    def as_row(self) -> list[float]:
        return [
            self.cx, self.cy, self.cz,
            self.dx, self.dy, self.dz,
            self.heading, self.vx, self.vy,
            1.0 if self.valid else 0.0,
        ]

    @staticmethod
    def from_row(row: Sequence[float]) -> "AgentFrame":
        if len(row) != FRAME_WIDTH:
            raise ScenarioFormatError(
                f"frame must have {FRAME_WIDTH} numbers, got {len(row)}"
            )
        if row[9] not in (0, 1):
            raise ScenarioValidationError(f"valid flag must be 0 or 1, got {row[9]!r}")
        return AgentFrame(
            cx=float(row[0]), cy=float(row[1]), cz=float(row[2]),
            dx=float(row[3]), dy=float(row[4]), dz=float(row[5]),
            heading=float(row[6]), vx=float(row[7]), vy=float(row[8]),
            valid=bool(row[9]),
        )


@dataclass(frozen=True)
class TrajectorySample:
    """One predicted sample: position plus velocity, both in the scene frame."""

    cx: float
    cy: float
    vx: float
    vy: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "vx", "vy"):
            if not math.isfinite(getattr(self, name)):
                raise ScenarioValidationError(f"non-finite trajectory {name}")


@dataclass(frozen=True)
class Agent:
    id: str
    kind: AgentKind
    history: tuple[AgentFrame, ...]
    ground_truth_future: tuple[AgentFrame, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.history) != HISTORY_LEN:
            raise ScenarioValidationError(
                f"agent {self.id!r}: history length {len(self.history)}, "
                f"expected {HISTORY_LEN}"
            )
        if (
            self.ground_truth_future is not None
            and len(self.ground_truth_future) != FUTURE_LEN
        ):
            raise ScenarioValidationError(
                f"agent {self.id!r}: ground_truth_future length "
                f"{len(self.ground_truth_future)}, expected {FUTURE_LEN}"
            )

    @property
    def current(self) -> AgentFrame:
        """The simulation-start state (last history frame)."""
        return self.history[-1]


@dataclass(frozen=True)
class MapPolyline:
    id: str
    kind: PolylineKind
    points: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ScenarioValidationError(
                f"polyline {self.id!r}: needs at least 2 points"
            )
        for p in self.points:
            if not all(math.isfinite(c) for c in p):
                raise ScenarioValidationError(
                    f"polyline {self.id!r}: non-finite coordinate"
                )


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    agents: tuple[Agent, ...]
    map_polylines: tuple[MapPolyline, ...] = ()
    frame_period: float = FRAME_PERIOD

    def __post_init__(self) -> None:
        if len(self.agents) < 1:
            raise ScenarioValidationError("scenario needs at least one agent")
        seen: set[str] = set()
        for agent in self.agents:
            if agent.id in seen:
                raise ScenarioValidationError(f"duplicate id {agent.id!r}")
            seen.add(agent.id)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def agent(self, agent_id: str) -> Agent:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)


def trailing_history(frames: Sequence[AgentFrame], k: int) -> tuple[AgentFrame, ...]:
    """Return the final k frames, the history window fed into the next step."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if len(frames) < k:
        raise ValueError(f"need at least {k} frames, got {len(frames)}")
    return tuple(frames[len(frames) - k:])


def _reject_constant(token: str) -> float:
    raise ScenarioFormatError(f"non-finite number {token!r} not allowed")


def _parse_frames(
    rows: object, n: int, what: str, agent_id: str, lenient_headings: bool
) -> tuple[AgentFrame, ...]:
    if not isinstance(rows, list) or len(rows) != n:
        got = len(rows) if isinstance(rows, list) else type(rows).__name__
        raise ScenarioValidationError(
            f"agent {agent_id!r}: {what} length {got}, expected {n}"
        )
    frames = []
    for t, row in enumerate(rows):
        if not isinstance(row, list) or not all(
            isinstance(v, (int, float)) for v in row
        ):
            raise ScenarioFormatError(
                f"agent {agent_id!r}: {what} frame {t} is not an array of numbers"
            )
        if lenient_headings and len(row) == FRAME_WIDTH and math.isfinite(row[6]):
            from .heading import normalize_angle

            row = list(row)
            row[6] = normalize_angle(row[6])
        try:
            frames.append(AgentFrame.from_row(row))
        except (ScenarioFormatError, ScenarioValidationError) as exc:
            raise type(exc)(f"agent {agent_id!r}: {what} frame {t}: {exc}") from None
    return tuple(frames)


def load_scenario(path: str | os.PathLike, *, lenient_headings: bool = False) -> Scenario:
    """Load and validate a scenario file.

    With ``lenient_headings=True`` out-of-range headings are renormalized to
    [-pi, pi) instead of rejected; every other invariant stays strict.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"{path}: {exc}") from None
    return scenario_from_dict(doc, lenient_headings=lenient_headings)


def scenario_from_dict(doc: object, *, lenient_headings: bool = False) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("top level must be an object")
    for key in ("scenario_id", "agents"):
        if key not in doc:
            raise ScenarioFormatError(f"missing top-level key {key!r}")
    agents = []
    if not isinstance(doc["agents"], list):
        raise ScenarioFormatError("'agents' must be an array")
    for idx, entry in enumerate(doc["agents"]):
        if not isinstance(entry, dict):
            raise ScenarioFormatError(f"agent {idx} is not an object")
        try:
            agent_id = str(entry["id"])
            kind = AgentKind(entry["kind"])
        except KeyError as exc:
            raise ScenarioFormatError(f"agent {idx}: missing key {exc}") from None
        except ValueError:
            raise ScenarioFormatError(
                f"agent {idx}: unknown kind {entry.get('kind')!r}"
            ) from None
        history = _parse_frames(
            entry.get("history"), HISTORY_LEN, "history", agent_id, lenient_headings
        )
        future = None
        if entry.get("ground_truth_future") is not None:
            future = _parse_frames(
                entry["ground_truth_future"], FUTURE_LEN,
                "ground_truth_future", agent_id, lenient_headings,
            )
        agents.append(
            Agent(id=agent_id, kind=kind, history=history, ground_truth_future=future)
        )
    polylines = []
    for idx, entry in enumerate(doc.get("map", []) or []):
        if not isinstance(entry, dict):
            raise ScenarioFormatError(f"polyline {idx} is not an object")
        try:
            pts = tuple(
                (float(p[0]), float(p[1]), float(p[2])) for p in entry["points"]
            )
            polylines.append(
                MapPolyline(
                    id=str(entry["id"]), kind=PolylineKind(entry["kind"]), points=pts
                )
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioValidationError):
                raise
            raise ScenarioFormatError(f"polyline {idx}: {exc}") from None
    return Scenario(
        scenario_id=str(doc["scenario_id"]),
        agents=tuple(agents),
        map_polylines=tuple(polylines),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    doc: dict = {"scenario_id": scenario.scenario_id, "agents": [], "map": []}
    for agent in scenario.agents:
        entry: dict = {
            "id": agent.id,
            "kind": agent.kind.value,
            "history": [f.as_row() for f in agent.history],
        }
        if agent.ground_truth_future is not None:
            entry["ground_truth_future"] = [
                f.as_row() for f in agent.ground_truth_future
            ]
        doc["agents"].append(entry)
    for pl in scenario.map_polylines:
        doc["map"].append(
            {"id": pl.id, "kind": pl.kind.value, "points": [list(p) for p in pl.points]}
        )
    return doc


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> None:
    """Write a scenario file that loads back bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=1, allow_nan=False)
        fh.write("\n")
