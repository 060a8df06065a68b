"""Autoregressive closed-loop rollout engine.

Each simulation step runs one predictor inference for all agents, selects
one of the 6 modes per agent (collision-mitigation policy or plain top-1),
recomputes headings from the selected plan's (x, y), executes the full plan
as new frames and feeds the trailing 11 frames back as the next history
window. Four 2 s steps assemble an 8 s rollout of 80 frames.

Rollout diversity comes from two axes: predictor variants (independent
pipelines, one rollout tree each) and per-step branching [m1, m2, m3, m4],
which expands the m_s best mode combinations by joint probability at step s.
Shared branch prefixes are evaluated once per tree level.
"""

from __future__ import annotations

import heapq
import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .collision import (
    ModeSet,
    Selection,
    SelectionSearchStats,
    build_collision_graph,
    build_distance_matrix,
    count_colliding_pairs,
    find_selection,
    top1_selection,
    MODES_PER_AGENT,
)
from .heading import HeadingParams, headings_from_xy
from .predictor import (
    PredictionRequest,
    Predictor,
    PredictorError,
    build_request,
    validate_response,
)
from .scenario import (
    FRAME_PERIOD,
    HISTORY_LEN,
    AgentFrame,
    AgentKind,
    MapPolyline,
    Scenario,
    trailing_history,
)

DEFAULT_UPDATE_PERIOD = 2.0
DEFAULT_TOTAL_DURATION = 8.0
DEFAULT_HORIZON_FRAMES = 20
DEFAULT_ROLLOUTS = 32

SELECT_FAST_PATH = "clique-fast-path"
SELECT_SEARCH = "dense-subgraph-search"
SELECT_FALLBACK = "top1-fallback"
SELECT_TOP1 = "top1"
SELECT_BRANCH = "branch-alternative"


class ConfigError(ValueError):
    """Rollout configuration violates an engine invariant."""


class StepError(RuntimeError):
    """A simulation step failed; carries the step index."""

    def __init__(self, step_index: int, message: str):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index


@dataclass(frozen=True)
class RolloutConfig:
    update_period: float = DEFAULT_UPDATE_PERIOD  # seconds between replans
    total_duration: float = DEFAULT_TOTAL_DURATION  # seconds simulated
    horizon_frames: int = DEFAULT_HORIZON_FRAMES  # plan length, 10 Hz frames
    collision_policy_enabled: bool = True
    density_threshold: float = 0.95
    branching: tuple[int, ...] = (1, 1, 1, 1)
    rollouts_required: int = DEFAULT_ROLLOUTS
    # rank candidates by joint probability only (default) or drop colliding
    # combinations first
    branch_filter_collisions: bool = False
    heading_params: HeadingParams = field(default_factory=HeadingParams)
    heading_overrides: Mapping[AgentKind, HeadingParams] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.update_period <= 0 or self.total_duration <= 0:
            raise ConfigError("durations must be positive")
        steps = self.total_duration / self.update_period
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ConfigError(
                f"total_duration ({self.total_duration}) must be an integer "
                f"multiple of update_period ({self.update_period})"
            )
        plan_frames = self.update_period / FRAME_PERIOD
        if abs(plan_frames - self.horizon_frames) > 1e-9:
            raise ConfigError(
                f"horizon_frames ({self.horizon_frames}) must equal "
                f"update_period x 10 ({plan_frames:g}): the engine executes the "
                f"whole plan each step, so a longer plan means the re-feed "
                f"window exceeds the executed plan"
            )
        if len(self.branching) != self.n_steps:
            raise ConfigError(
                f"branching needs one entry per step "
                f"({self.n_steps}), got {len(self.branching)}"
            )
        if any(m < 1 for m in self.branching):
            raise ConfigError("branch counts must be >= 1")
        if self.rollouts_required < 1:
            raise ConfigError("rollouts_required must be >= 1")
        if not (0.0 < self.density_threshold <= 1.0):
            raise ConfigError("density_threshold must be in (0, 1]")

    @property
    def n_steps(self) -> int:
        return round(self.total_duration / self.update_period)

    @property
    def total_frames(self) -> int:
        return self.n_steps * self.horizon_frames

    @property
    def branch_product(self) -> int:
        return math.prod(self.branching)

    def n_variants(self) -> int:
        """Number of predictor variants needed to reach rollouts_required."""
        if self.rollouts_required % self.branch_product != 0:
            raise ConfigError(
                f"rollouts_required ({self.rollouts_required}) is not a "
                f"multiple of the branch product ({self.branch_product})"
            )
        return self.rollouts_required // self.branch_product

    def discouraged_mode(self) -> str | None:
        """Human-readable note when replanning faster than the 0.5 Hz default."""
        if self.update_period < DEFAULT_UPDATE_PERIOD:
            return (
                f"replanning every {self.update_period:g}s (faster than the "
                f"0.5 Hz default); short plans accumulate per-step disturbance"
            )
        return None

    def heading_for(self, kind: AgentKind) -> HeadingParams:
        return self.heading_overrides.get(kind, self.heading_params)


@dataclass(frozen=True)
class AgentState:
    agent_id: str
    kind: AgentKind
    window: tuple[AgentFrame, ...]  # the 11-frame history fed to predictors

    @property
    def width(self) -> float:
        return self.window[-1].dy


@dataclass(frozen=True)
class SimState:
    scenario_id: str
    agents: tuple[AgentState, ...]
    map_polylines: tuple[MapPolyline, ...]


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    branch_rank: int
    method: str
    selection: tuple[int, ...]  # vertex indices


@dataclass(frozen=True)
class StepResult:
    frames: tuple[tuple[AgentFrame, ...], ...]  # per agent, horizon_frames each
    next_state: SimState
    record: StepRecord


@dataclass(frozen=True)
class Rollout:
    scenario_id: str
    variant_id: str
    branch_path: tuple[int, ...]
    agent_ids: tuple[str, ...]
    frames: tuple[tuple[AgentFrame, ...], ...]  # per agent, total_frames each
    steps: tuple[StepRecord, ...] = ()

    def __post_init__(self) -> None:
        if len(self.frames) != len(self.agent_ids):
            raise ValueError("one frame sequence per agent required")
        if self.frames:
            n = len(self.frames[0])
            for agent_frames in self.frames:
                if len(agent_frames) != n:
                    raise ValueError("agents disagree on frame count")
                first = agent_frames[0]
                for f in agent_frames:
                    if (
                        f.cz != first.cz
                        or f.dx != first.dx
                        or f.dy != first.dy
                        or f.dz != first.dz
                    ):
                        raise ValueError("cz/dx/dy/dz must stay constant")

    @property
    def n_frames(self) -> int:
        return len(self.frames[0]) if self.frames else 0

    def agent_frames(self, agent_id: str) -> tuple[AgentFrame, ...]:
        return self.frames[self.agent_ids.index(agent_id)]


def initial_state(scenario: Scenario) -> SimState:
    """Starting windows for a simulation; the start frame must be valid."""
    agents = []
    for agent in scenario.agents:
        if not agent.history[-1].valid:
            raise ConfigError(
                f"agent {agent.id!r}: simulation-start frame (history index "
                f"{HISTORY_LEN - 1}) is not valid"
            )
        agents.append(
            AgentState(agent_id=agent.id, kind=agent.kind, window=agent.history)
        )
    return SimState(
        scenario_id=scenario.scenario_id,
        agents=tuple(agents),
        map_polylines=scenario.map_polylines,
    )


def top_k_joint_combinations(modes: Sequence[ModeSet], k: int) -> list[Selection]:
    """The k most likely mode combinations by product of probabilities.

    Best-first frontier search over the 6^N product space: start from the
    all-top-1 assignment and expand one mode index at a time, so only O(k*N)
    assignments materialize. Descending joint probability, ties broken by
    ascending vertex indices (matching a full sort of the enumeration).
    """
    n = len(modes)
    if n < 1:
        raise ValueError("need at least one mode set")
    space = MODES_PER_AGENT**n
    if not (1 <= k <= space):
        raise ValueError(f"k must be in [1, {space}], got {k}")
    probs = [ms.probabilities for ms in modes]

    def joint(idx: tuple[int, ...]) -> float:
        p = 1.0
        for m, i in enumerate(idx):
            p *= probs[m][i]
        return p

    def verts(idx: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(MODES_PER_AGENT * m + i for m, i in enumerate(idx))

    start = (0,) * n
    heap = [(-joint(start), verts(start), start)]
    seen = {start}
    out: list[Selection] = []
    while heap and len(out) < k:
        _, v, idx = heapq.heappop(heap)
        out.append(Selection(v))
        for m in range(n):
            if idx[m] + 1 < MODES_PER_AGENT:
                child = idx[:m] + (idx[m] + 1,) + idx[m + 1:]
                if child not in seen:
                    seen.add(child)
                    heapq.heappush(heap, (-joint(child), verts(child), child))
    return out


def _plan_request(state: SimState, config: RolloutConfig, step_index: int) -> PredictionRequest:
    return build_request(
        scenario_id=state.scenario_id,
        agents=[(a.agent_id, a.kind, a.window) for a in state.agents],
        map_polylines=state.map_polylines,
        horizon_frames=config.horizon_frames,
        start_frame=step_index * config.horizon_frames,
    )


def _predict(
    state: SimState, predictor: Predictor, config: RolloutConfig, step_index: int
) -> tuple[ModeSet, ...]:
    request = _plan_request(state, config, step_index)
    try:
        response = validate_response(request, predictor.predict(request))
    except PredictorError as exc:
        raise StepError(step_index, f"predictor {predictor.name!r} failed: {exc}") from exc
    return response.modes


def _branch_selections(
    state: SimState,
    modes: tuple[ModeSet, ...],
    config: RolloutConfig,
    count: int,
) -> list[tuple[Selection, str]]:
    """Selections for branch ranks 0..count-1, base policy first.

    Rank 0 is the collision policy's choice (or top-1 when disabled or
    failed); later ranks walk the joint-probability order, skipping any
    combination already used. The candidate order is independent of `count`
    so trees sharing a prefix agree on the shared ranks.
    """
    n = len(modes)
    graph = None
    need_graph = config.collision_policy_enabled or (
        count > 1 and config.branch_filter_collisions
    )
    if need_graph:
        widths = [a.width for a in state.agents]
        graph = build_collision_graph(build_distance_matrix(modes), widths)
    if config.collision_policy_enabled:
        assert graph is not None
        stats = SelectionSearchStats()
        sel = find_selection(graph, config.density_threshold, stats)
        if sel is None:
            base, method = top1_selection(n), SELECT_FALLBACK
        elif stats.fast_path:
            base, method = sel, SELECT_FAST_PATH
        else:
            base, method = sel, SELECT_SEARCH
    else:
        base, method = top1_selection(n), SELECT_TOP1
    out = [(base, method)]
    if count <= 1:
        return out
    space = MODES_PER_AGENT**n
    if count > space:
        raise ConfigError(
            f"branch factor {count} exceeds the {space} available combinations"
        )
    k = min(space, max(count + 1, 2 * count))
    candidates = top_k_joint_combinations(modes, k)
    used = {base.vertex_indices}
    ranked: list[Selection] = []
    deferred: list[Selection] = []
    for cand in candidates:
        if cand.vertex_indices in used:
            continue
        if (
            config.branch_filter_collisions
            and graph is not None
            and count_colliding_pairs(graph, cand) > 0
        ):
            deferred.append(cand)
            continue
        used.add(cand.vertex_indices)
        ranked.append(cand)
    # collision-filtered mode: colliding combinations only as a last resort
    for cand in deferred:
        if cand.vertex_indices not in used:
            used.add(cand.vertex_indices)
            ranked.append(cand)
    for r, cand in enumerate(ranked[: count - 1], start=1):
        out.append((cand, f"{SELECT_BRANCH}-{r}"))
    if len(out) < count:
        raise ConfigError(
            f"only {len(out)} distinct combinations available for "
            f"branch factor {count}"
        )
    return out


def _execute(
    state: SimState,
    modes: tuple[ModeSet, ...],
    selection: Selection,
    config: RolloutConfig,
) -> tuple[tuple[tuple[AgentFrame, ...], ...], SimState]:
    """Turn the selected plans into executed frames and the next windows."""
    new_frames = []
    next_agents = []
    for i, agent in enumerate(state.agents):
        traj = modes[i].trajectories[selection.modes[i]]
        last = agent.window[-1]
        xy = [(s.cx, s.cy) for s in traj]
        headings = headings_from_xy(xy, last.heading, config.heading_for(agent.kind))
        frames = tuple(
            AgentFrame(
                cx=s.cx, cy=s.cy, cz=last.cz,
                dx=last.dx, dy=last.dy, dz=last.dz,
                heading=float(h), vx=s.vx, vy=s.vy, valid=True,
            )
            for s, h in zip(traj, headings)
        )
        new_frames.append(frames)
        next_agents.append(
            AgentState(
                agent_id=agent.agent_id,
                kind=agent.kind,
                window=trailing_history(agent.window + frames, HISTORY_LEN),
            )
        )
    next_state = SimState(
        scenario_id=state.scenario_id,
        agents=tuple(next_agents),
        map_polylines=state.map_polylines,
    )
    return tuple(new_frames), next_state


def run_step(
    state: SimState,
    predictor: Predictor,
    config: RolloutConfig,
    branch_rank: int = 0,
    step_index: int = 0,
) -> StepResult:
    """One predict / select / post-process / execute cycle."""
    modes = _predict(state, predictor, config, step_index)
    selections = _branch_selections(state, modes, config, branch_rank + 1)
    selection, method = selections[branch_rank]
    frames, next_state = _execute(state, modes, selection, config)
    record = StepRecord(
        step_index=step_index,
        branch_rank=branch_rank,
        method=method,
        selection=selection.vertex_indices,
    )
    return StepResult(frames=frames, next_state=next_state, record=record)


def _assemble(
    scenario: Scenario,
    variant_id: str,
    branch_path: tuple[int, ...],
    per_step_frames: Sequence[tuple[tuple[AgentFrame, ...], ...]],
    records: tuple[StepRecord, ...],
    config: RolloutConfig,
) -> Rollout:
    agent_ids = tuple(a.id for a in scenario.agents)
    frames = tuple(
        tuple(f for step in per_step_frames for f in step[i])
        for i in range(len(agent_ids))
    )
    rollout = Rollout(
        scenario_id=scenario.scenario_id,
        variant_id=variant_id,
        branch_path=branch_path,
        agent_ids=agent_ids,
        frames=frames,
        steps=records,
    )
    if rollout.n_frames != config.total_frames:
        raise StepError(
            len(records) - 1,
            f"assembled {rollout.n_frames} frames, expected {config.total_frames}",
        )
    return rollout


def run_rollout(
    scenario: Scenario,
    predictor: Predictor,
    config: RolloutConfig,
    branch_path: Sequence[int] = (),
    variant_id: str | None = None,
) -> Rollout:
    """Chain all steps for one branch path into a single rollout."""
    path = tuple(branch_path) if branch_path else (0,) * config.n_steps
    if len(path) != config.n_steps:
        raise ConfigError(
            f"branch path needs {config.n_steps} entries, got {len(path)}"
        )
    for s, (rank, m) in enumerate(zip(path, config.branching)):
        if not (0 <= rank < m):
            raise ConfigError(
                f"branch path rank {rank} at step {s} outside [0, {m})"
            )
    state = initial_state(scenario)
    per_step = []
    records = []
    for s in range(config.n_steps):
        result = run_step(state, predictor, config, branch_rank=path[s], step_index=s)
        per_step.append(result.frames)
        records.append(result.record)
        state = result.next_state
    return _assemble(
        scenario, variant_id or predictor.name, path, per_step, tuple(records), config
    )


@dataclass
class _TreeNode:
    state: SimState
    per_step: list
    path: tuple[int, ...]
    records: tuple[StepRecord, ...]


def run_ensemble(
    scenario: Scenario,
    predictors: Sequence[Predictor],
    config: RolloutConfig,
) -> list[Rollout]:
    """All (variant, branch path) rollouts, sharing branch-tree prefixes.

    Each variant walks its own tree: one predictor call per node, expanded
    into branching[s] children at step s, so siblings reuse both the call
    and every frame of the shared prefix. Rollouts come back ordered by
    variant then mixed-radix branch path.
    """
    expected = config.n_variants()
    if len(predictors) != expected:
        raise ConfigError(
            f"{len(predictors)} predictor variants for branching "
            f"{list(config.branching)} and rollouts_required "
            f"{config.rollouts_required}; expected {expected}"
        )
    names = [p.name for p in predictors]
    unique = len(set(names)) == len(names)
    rollouts: list[Rollout] = []
    for v_idx, predictor in enumerate(predictors):
        variant_id = names[v_idx] if unique else f"{names[v_idx]}#{v_idx}"
        nodes = [
            _TreeNode(
                state=initial_state(scenario), per_step=[], path=(), records=()
            )
        ]
        for s in range(config.n_steps):
            m = config.branching[s]
            children: list[_TreeNode] = []
            for node in nodes:
                modes = _predict(node.state, predictor, config, s)
                selections = _branch_selections(node.state, modes, config, m)
                for rank in range(m):
                    selection, method = selections[rank]
                    frames, next_state = _execute(node.state, modes, selection, config)
                    record = StepRecord(
                        step_index=s,
                        branch_rank=rank,
                        method=method,
                        selection=selection.vertex_indices,
                    )
                    children.append(
                        _TreeNode(
                            state=next_state,
                            per_step=node.per_step + [frames],
                            path=node.path + (rank,),
                            records=node.records + (record,),
                        )
                    )
            nodes = children
        for node in nodes:
            rollouts.append(
                _assemble(
                    scenario, variant_id, node.path, node.per_step, node.records, config
                )
            )
    return rollouts


# ---------------------------------------------------------------------------
# rollout file format


def rollouts_to_dict(scenario_id: str, rollouts: Sequence[Rollout]) -> dict:
    return {
        "scenario_id": scenario_id,
        "rollouts": [
            {
                "variant_id": r.variant_id,
                "branch_path": list(r.branch_path),
                "agents": [
                    {
                        "id": agent_id,
                        "frames": [f.as_row() for f in r.frames[i]],
                    }
                    for i, agent_id in enumerate(r.agent_ids)
                ],
            }
            for r in rollouts
        ],
    }


def write_rollouts(
    path: str | os.PathLike, scenario_id: str, rollouts: Sequence[Rollout]
) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(rollouts_to_dict(scenario_id, rollouts), fh, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def load_rollouts(path: str | os.PathLike) -> tuple[str, list[Rollout]]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    scenario_id = doc["scenario_id"]
    rollouts = []
    for entry in doc["rollouts"]:
        agent_ids = tuple(a["id"] for a in entry["agents"])
        frames = tuple(
            tuple(AgentFrame.from_row(row) for row in a["frames"])
            for a in entry["agents"]
        )
        rollouts.append(
            Rollout(
                scenario_id=scenario_id,
                variant_id=entry["variant_id"],
                branch_path=tuple(entry["branch_path"]),
                agent_ids=agent_ids,
                frames=frames,
            )
        )
    return scenario_id, rollouts
