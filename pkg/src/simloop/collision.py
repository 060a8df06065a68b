"""Collision-mitigation trajectory selection.

Each of the N agents has 6 candidate trajectories sorted by descending
probability. A 6N x 6N distance matrix holds the synchronized minimum
center distance between every cross-agent trajectory pair; thresholding it
at half the width sum yields a 0-1 adjacency matrix C in which an edge means
"these two plans do NOT collide". Picking one vertex per 6-block so that the
induced subgraph is dense (density >= 0.95, a clique when 1.0) yields a
combination with few or no colliding pairs. The greedy search below first
tries to grow a clique block by block and falls back to dense-subgraph
growth inside a block when no clique extension exists; it can fail, in
which case callers fall back to the all-top-1 selection.

``brute_force_selection`` enumerates all 6^N combinations and is the testing
oracle for the heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import TrajectorySample

MODES_PER_AGENT = 6
DEFAULT_DENSITY_THRESHOLD = 0.95
BRUTE_FORCE_MAX_AGENTS = 7

PROBABILITY_SUM_TOL = 1e-6


class ModeSetError(ValueError):
    """A candidate-trajectory set violates the predictor contract."""


@dataclass(frozen=True)
class ModeSet:
    """An agent's 6 candidate futures with sum-to-one probabilities.

    Trajectories are sorted by descending probability; index 0 is the most
    likely mode and the selection heuristic's starting point.
    """

    agent_index: int
    trajectories: tuple[tuple[TrajectorySample, ...], ...]
    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.trajectories) != MODES_PER_AGENT:
            raise ModeSetError(
                f"agent {self.agent_index}: expected {MODES_PER_AGENT} modes, "
                f"got {len(self.trajectories)}"
            )
        if len(self.probabilities) != MODES_PER_AGENT:
            raise ModeSetError(
                f"agent {self.agent_index}: expected {MODES_PER_AGENT} probabilities"
            )
        horizon = len(self.trajectories[0])
        if horizon < 1:
            raise ModeSetError(f"agent {self.agent_index}: empty trajectory")
        for i, traj in enumerate(self.trajectories):
            if len(traj) != horizon:
                raise ModeSetError(
                    f"agent {self.agent_index}: mode {i} has {len(traj)} samples, "
                    f"expected {horizon}"
                )
        for i, p in enumerate(self.probabilities):
            if not (p >= 0.0):
                raise ModeSetError(
                    f"agent {self.agent_index}: negative probability at mode {i}"
                )
            if i > 0 and p > self.probabilities[i - 1]:
                raise ModeSetError(
                    f"agent {self.agent_index}: probabilities not descending at mode {i}"
                )
        total = sum(self.probabilities)
        if abs(total - 1.0) > PROBABILITY_SUM_TOL:
            raise ModeSetError(
                f"agent {self.agent_index}: probabilities sum to {total}, expected 1"
            )

    @property
    def horizon(self) -> int:
        return len(self.trajectories[0])

    def xy(self, mode: int) -> np.ndarray:
        """(H, 2) array of the mode's center positions."""
        return np.array([(s.cx, s.cy) for s in self.trajectories[mode]], dtype=float)

    def xy_all(self) -> np.ndarray:
        """(6, H, 2) array over all modes."""
        return np.stack([self.xy(m) for m in range(MODES_PER_AGENT)])


@dataclass(frozen=True)
class DistanceMatrix:
    n_agents: int
    entries: np.ndarray  # (6N, 6N), meters

    def __post_init__(self) -> None:
        n = MODES_PER_AGENT * self.n_agents
        if self.entries.shape != (n, n):
            raise ValueError(f"expected shape ({n}, {n}), got {self.entries.shape}")


@dataclass(frozen=True)
class CollisionGraph:
    """0-1 adjacency over (agent, mode) vertices; vertex = 6*agent + mode."""

    n_agents: int
    adjacency: np.ndarray  # (6N, 6N) of {0, 1}

    def __post_init__(self) -> None:
        n = MODES_PER_AGENT * self.n_agents
        a = self.adjacency
        if a.shape != (n, n):
            raise ValueError(f"expected shape ({n}, {n}), got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        for m in range(self.n_agents):
            block = a[self.block(m)][:, self.block(m)]
            if block.any():
                raise ValueError(f"diagonal block {m} must be all-zero")

    @staticmethod
    def block(agent: int) -> slice:
        return slice(MODES_PER_AGENT * agent, MODES_PER_AGENT * (agent + 1))

    @property
    def n_vertices(self) -> int:
        return MODES_PER_AGENT * self.n_agents


@dataclass(frozen=True)
class Selection:
    """One chosen vertex per agent block (Algorithm output array c)."""

    vertex_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        for agent, v in enumerate(self.vertex_indices):
            lo = MODES_PER_AGENT * agent
            if not (lo <= v < lo + MODES_PER_AGENT):
                raise ValueError(
                    f"vertex {v} outside agent {agent}'s block [{lo}, {lo + 5}]"
                )

    @property
    def n_agents(self) -> int:
        return len(self.vertex_indices)

    @property
    def modes(self) -> tuple[int, ...]:
        """Per-agent mode indices in [0, 5]."""
        return tuple(
            v - MODES_PER_AGENT * agent for agent, v in enumerate(self.vertex_indices)
        )


def top1_selection(n_agents: int) -> Selection:
    """The all-most-likely selection [0, 6, ..., 6(N-1)]."""
    return Selection(tuple(MODES_PER_AGENT * m for m in range(n_agents)))


def min_pairwise_distance(
    a: Sequence[TrajectorySample] | np.ndarray,
    b: Sequence[TrajectorySample] | np.ndarray,
) -> float:
    """Minimum synchronized center distance between two equal-length plans.

    The minimum runs over frames, comparing positions at the same time index:
    a collision requires co-location in time, so crossing paths occupied at
    different frames stay at a positive distance.
    """
    pa = _as_xy(a)
    pb = _as_xy(b)
    if pa.shape[0] == 0:
        raise ValueError("empty trajectories")
    if pa.shape != pb.shape:
        raise ValueError(f"length mismatch: {pa.shape[0]} vs {pb.shape[0]}")
    return float(np.min(np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1])))


def _as_xy(traj: Sequence[TrajectorySample] | np.ndarray) -> np.ndarray:
    if isinstance(traj, np.ndarray):
        arr = np.asarray(traj, dtype=float)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise ValueError(f"expected (H, >=2) array, got {arr.shape}")
        return arr[:, :2]
    return np.array([(s.cx, s.cy) for s in traj], dtype=float)


def build_distance_matrix(modes: Sequence[ModeSet]) -> DistanceMatrix:
    """6N x 6N matrix of synchronized minimum distances.

    Within-agent blocks are set to 0 rather than computed: an agent's own
    modes share a start point and count as colliding by construction.
    """
    n_agents = len(modes)
    horizon = modes[0].horizon
    for ms in modes:
        if ms.horizon != horizon:
            raise ValueError(
                f"inconsistent horizons: agent {ms.agent_index} has {ms.horizon}, "
                f"expected {horizon}"
            )
    xy = np.concatenate([ms.xy_all() for ms in modes])  # (6N, H, 2)
    diff = xy[:, None, :, :] - xy[None, :, :, :]
    dist = np.min(np.hypot(diff[..., 0], diff[..., 1]), axis=-1)
    for m in range(n_agents):
        blk = CollisionGraph.block(m)
        dist[blk, blk] = 0.0
    return DistanceMatrix(n_agents=n_agents, entries=dist)


def build_collision_graph(
    d: DistanceMatrix, widths: Sequence[float]
) -> CollisionGraph:
    """Threshold the distance matrix into the no-collision adjacency matrix.

    A cross-block entry is 0 (collision) when the distance is at most the
    half sum of the two agents' widths, 1 otherwise; diagonal blocks are
    forced to 0.
    """
    if len(widths) != d.n_agents:
        raise ValueError(f"expected {d.n_agents} widths, got {len(widths)}")
    w = np.asarray(widths, dtype=float)
    if not (w > 0).all():
        raise ValueError("agent widths must be positive")
    per_vertex = np.repeat(w, MODES_PER_AGENT)
    threshold = (per_vertex[:, None] + per_vertex[None, :]) / 2.0
    adj = (d.entries > threshold).astype(np.int8)
    for m in range(d.n_agents):
        blk = CollisionGraph.block(m)
        adj[blk, blk] = 0
    return CollisionGraph(n_agents=d.n_agents, adjacency=adj)


def subgraph_density(c: CollisionGraph, vertices: Sequence[int]) -> float:
    """Sum of the induced submatrix over l*(l-1); 1.0 for l <= 1.

    Equals 1 exactly when the vertices form a clique, since each undirected
    edge contributes two symmetric entries.
    """
    verts = list(vertices)
    if len(set(verts)) != len(verts):
        raise ValueError("vertices must be distinct")
    l = len(verts)
    if l <= 1:
        return 1.0
    idx = np.asarray(verts, dtype=int)
    sub = c.adjacency[np.ix_(idx, idx)]
    return float(sub.sum()) / (l * (l - 1))


def degrees(c: CollisionGraph) -> np.ndarray:
    """Vertex degrees (row sums) of the adjacency matrix."""
    return c.adjacency.sum(axis=1)


def _is_clique(adj: np.ndarray, verts: list[int]) -> bool:
    if len(verts) <= 1:
        return True
    idx = np.asarray(verts, dtype=int)
    sub = adj[np.ix_(idx, idx)]
    l = len(verts)
    return int(sub.sum()) == l * (l - 1)


@dataclass
class SelectionSearchStats:
    """Instrumentation for the greedy search; fast path leaves both at 0."""

    clique_calls: int = 0
    dsg_calls: int = 0
    fast_path: bool = False


def find_selection(
    c: CollisionGraph,
    density_threshold: float = DEFAULT_DENSITY_THRESHOLD,
    stats: SelectionSearchStats | None = None,
) -> Selection | None:
    """Greedy clique / dense-subgraph search for one mode per agent.

    Starts from the all-top-1 vertices and returns them immediately when they
    already form a clique. Otherwise grows the subgraph one agent block at a
    time: the clique phase commits to the first in-block vertex that keeps a
    clique; when none exists it switches permanently to the dense phase,
    which admits a vertex only when its precomputed global degree is at least
    N-1 and the grown prefix keeps density >= ``density_threshold``, and
    backtracks over in-block choices. Returns None when the search exhausts
    without completing all N blocks; callers then fall back to all-top-1.
    """
    n = c.n_agents
    adj = c.adjacency
    sel = list(range(0, MODES_PER_AGENT * n, MODES_PER_AGENT))
    if _is_clique(adj, sel):
        if stats is not None:
            stats.fast_path = True
        return Selection(tuple(sel))
    deg = degrees(c)  # computed once; the dense phase never recomputes it

    found: list[tuple[int, ...]] = []

    def find_dsg(i: int, l: int, s: int) -> bool:
        if stats is not None:
            stats.dsg_calls += 1
        for j in range(i, i + MODES_PER_AGENT):
            if deg[j] >= s - 1:
                sel[l] = j
                if subgraph_density(c, sel[: l + 1]) >= density_threshold:
                    if l < s - 1:
                        if find_dsg(MODES_PER_AGENT * (l + 1), l + 1, s):
                            return True
                    else:
                        found.append(tuple(sel))
                        return True
        return False

    def find_clique(i: int, l: int, s: int) -> bool:
        if stats is not None:
            stats.clique_calls += 1
        j_tmp = -1
        for j in range(i, i + MODES_PER_AGENT):
            sel[l] = j
            if _is_clique(adj, sel[: l + 1]):
                j_tmp = j
                break
        if j_tmp != -1:
            sel[l] = j_tmp
            if l < s - 1:
                return find_clique(MODES_PER_AGENT * (l + 1), l + 1, s)
            found.append(tuple(sel))
            return True
        # no clique extension in this block: same block, dense criterion;
        # sel[l] holds the last tried vertex but find_dsg overwrites it
        return find_dsg(i, l, s)

    if find_clique(0, 0, n):
        return Selection(found[0])
    return None


def count_colliding_pairs(c: CollisionGraph, selection: Selection) -> int:
    """Number of agent pairs whose selected plans collide (missing edges)."""
    verts = selection.vertex_indices
    n = len(verts)
    count = 0
    for m in range(n):
        for k in range(m + 1, n):
            if c.adjacency[verts[m], verts[k]] == 0:
                count += 1
    return count


def random_collision_graph(
    n_agents: int, edge_probability: float, rng: np.random.Generator
) -> CollisionGraph:
    """Symmetric random 0-1 graph with zeroed diagonal blocks (diagnostics)."""
    size = MODES_PER_AGENT * n_agents
    upper = rng.random((size, size)) < edge_probability
    adj = np.triu(upper, k=1).astype(np.int8)
    adj = adj + adj.T
    for m in range(n_agents):
        blk = CollisionGraph.block(m)
        adj[blk, blk] = 0
    return CollisionGraph(n_agents=n_agents, adjacency=adj)


def brute_force_selection(c: CollisionGraph) -> tuple[Selection, int]:
    """Exhaustive oracle: the selection minimizing colliding pairs.

    Enumerates all 6^N combinations in lexicographic order and returns the
    first one attaining the minimum collision count, together with that
    count. Intended for tests; refuses N > 7.
    """
    n = c.n_agents
    if n > BRUTE_FORCE_MAX_AGENTS:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_MAX_AGENTS}")
    combos = np.indices((MODES_PER_AGENT,) * n).reshape(n, -1).T  # lexicographic
    verts = combos + MODES_PER_AGENT * np.arange(n)
    collisions = np.zeros(len(verts), dtype=np.int64)
    for m in range(n):
        for k in range(m + 1, n):
            collisions += c.adjacency[verts[:, m], verts[:, k]] == 0
    best = int(np.argmin(collisions))  # argmin takes the first, i.e. lexicographic
    return Selection(tuple(int(v) for v in verts[best])), int(collisions[best])
