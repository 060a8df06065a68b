"""Heading derivation and stabilization for planned (x, y) trajectories.

Predicted trajectories carry positions and velocities but no trustworthy
heading, so headings are recomputed from consecutive displacements and then
stabilized: agents that barely move keep their previous heading, and any
frame-to-frame jump larger than ``max_step_delta`` is overwritten with the
preceding (already corrected) value. All results live in [-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HeadingParams:
    stop_distance_threshold: float = 0.3  # meters of path length over the plan
    max_step_delta: float = 0.3  # radians per 0.1 s frame
    horizon: float = 2.0  # seconds the stop test refers to

    def __post_init__(self) -> None:
        if not (
            self.stop_distance_threshold > 0
            and self.max_step_delta > 0
            and self.horizon > 0
        ):
            raise ValueError("HeadingParams fields must be strictly positive")


def normalize_angle(h: float) -> float:
    """Reduce an angle to [-pi, pi); +pi maps to -pi."""
    if not math.isfinite(h):
        raise ValueError(f"non-finite angle {h!r}")
    r = math.fmod(h + math.pi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    r -= math.pi
    # fmod rounding can land exactly on +pi for inputs just below a period edge
    if r >= math.pi:
        r = -math.pi
    return r


def wrapped_delta(a: float, b: float) -> float:
    """Signed difference b - a measured on the circle, in [-pi, pi)."""
    return normalize_angle(b - a)


def path_length(xy: Sequence[tuple[float, float]] | np.ndarray) -> float:
    pts = np.asarray(xy, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) point sequence, got shape {pts.shape}")
    if pts.shape[0] < 2:
        return 0.0
    return float(np.sum(np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))))


def is_stopped(
    xy: Sequence[tuple[float, float]] | np.ndarray, params: HeadingParams
) -> bool:
    """True when the cumulative path length stays under the stop threshold.

    Path length, not net displacement: an agent that jitters in place but
    covers real distance along its path does not count as stopped.
    """
    pts = np.asarray(xy, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("is_stopped needs at least 2 points")
    return path_length(pts) < params.stop_distance_threshold


def stabilize_rate(
    h: Sequence[float] | np.ndarray,
    prev_heading: float,
    params: HeadingParams | None = None,
) -> np.ndarray:
    """Clamp the per-frame heading rate in one forward pass.

    Each value is compared (on the circle) against its already corrected
    predecessor, the first one against ``prev_heading``; a jump larger than
    ``max_step_delta`` is replaced by the predecessor, so corrections cascade
    and every adjacent wrapped delta of the output is <= max_step_delta.
    """
    params = params or HeadingParams()
    arr = np.asarray(h, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d heading sequence")
    out = np.empty_like(arr)
    anchor = normalize_angle(prev_heading)
    for i, value in enumerate(arr):
        value = normalize_angle(float(value))
        if abs(wrapped_delta(anchor, value)) > params.max_step_delta:
            value = anchor
        out[i] = value
        anchor = value
    return out


def headings_from_xy(
    xy: Sequence[tuple[float, float]] | np.ndarray,
    prev_heading: float,
    params: HeadingParams | None = None,
) -> np.ndarray:
    """Headings for a planned trajectory, one per input point.

    Stopped plans (path length under the stop threshold) keep ``prev_heading``
    for every frame. Moving plans take the two-argument arctangent of each
    forward displacement, the last point copying the final chord, and are then
    rate-clamped against ``prev_heading``.
    """
    params = params or HeadingParams()
    pts = np.asarray(xy, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValueError(f"expected a nonempty (n, 2) point sequence, got {pts.shape}")
    prev = normalize_angle(prev_heading)
    n = pts.shape[0]
    if n == 1 or path_length(pts) < params.stop_distance_threshold:
        return np.full(n, prev)
    dx = np.diff(pts[:, 0])
    dy = np.diff(pts[:, 1])
    chord = np.arctan2(dy, dx)
    raw = np.append(chord, chord[-1])
    raw = np.array([normalize_angle(float(v)) for v in raw])
    return stabilize_rate(raw, prev, params)
