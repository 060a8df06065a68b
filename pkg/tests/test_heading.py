"""Heading post-processing tests.

Derived expectations come from independent oracles: a loop-based angle
reduction, a brute-force segment-length sum, and the closed-form tangent of
a parameterized circular arc.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simloop import (
    HeadingParams,
    headings_from_xy,
    is_stopped,
    normalize_angle,
    stabilize_rate,
    wrapped_delta,
)

PARAMS = HeadingParams()


def reduce_by_loop(h: float) -> float:
    # independent oracle: subtract/add full turns until inside [-pi, pi)
    while h >= math.pi:
        h -= 2 * math.pi
    while h < -math.pi:
        h += 2 * math.pi
    return h


def segment_length_sum(xy) -> float:
    total = 0.0
    for (x0, y0), (x1, y1) in zip(xy, xy[1:]):
        total += math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2)
    return total


# --- normalize_angle ---------------------------------------------------------


def test_pi_maps_to_minus_pi():
    assert normalize_angle(math.pi) == -math.pi


def test_identity_inside_range():
    assert normalize_angle(-math.pi / 2) == -math.pi / 2


def test_three_pi():
    expected = reduce_by_loop(3 * math.pi)
    assert normalize_angle(3 * math.pi) == pytest.approx(expected, abs=1e-12)
    assert expected == -math.pi


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        normalize_angle(float("nan"))
    with pytest.raises(ValueError):
        normalize_angle(float("inf"))


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=-1000.0, max_value=1000.0, allow_nan=False))
def test_normalize_angle_range_and_congruence(h):
    r = normalize_angle(h)
    assert -math.pi <= r < math.pi
    # congruent mod 2*pi
    k = round((h - r) / (2 * math.pi))
    assert h - r == pytest.approx(k * 2 * math.pi, abs=1e-9)
    assert r == pytest.approx(reduce_by_loop(h), abs=1e-9) or (
        # the loop oracle may land on +pi boundary from the other side
        abs(abs(r) - math.pi) < 1e-9 and abs(abs(reduce_by_loop(h)) - math.pi) < 1e-9
    )


# --- is_stopped --------------------------------------------------------------


def test_identical_points_stopped():
    xy = [(5.0, -3.0)] * 20
    assert is_stopped(xy, PARAMS)


def test_straight_031m_not_stopped():
    # total length 0.31 m over 20 points, just past the 0.3 m threshold
    xy = [(0.31 * i / 19, 0.0) for i in range(20)]
    assert segment_length_sum(xy) == pytest.approx(0.31, abs=1e-12)
    assert not is_stopped(xy, PARAMS)


def test_zigzag_uses_path_length_not_displacement():
    # tiny net displacement but brute-force path length 0.5 m
    xy = [(0.0, 0.0)]
    for m in [0.05, -0.05] * 5:
        xy.append((xy[-1][0] + m, 0.0))
    total = segment_length_sum(xy)
    assert total == pytest.approx(0.5, abs=1e-12)
    net = abs(xy[-1][0] - xy[0][0])
    assert net <= 0.05 + 1e-12  # displacement alone would count as stopped
    assert not is_stopped(xy, PARAMS)


def test_under_threshold_stopped():
    xy = [(0.29 * i / 19, 0.0) for i in range(20)]
    assert is_stopped(xy, PARAMS)


def test_single_point_rejected():
    with pytest.raises(ValueError):
        is_stopped([(0.0, 0.0)], PARAMS)


# --- stabilize_rate ----------------------------------------------------------


def test_cascading_overwrite():
    out = stabilize_rate([0.0, 0.5, 0.5], 0.0)
    assert list(out) == [0.0, 0.0, 0.0]


def test_small_deltas_unchanged():
    out = stabilize_rate([0.0, 0.2, 0.4], 0.0)
    assert np.allclose(out, [0.0, 0.2, 0.4])


def test_wrapped_delta_at_seam():
    # oracle: wrapped difference via normalize_angle(b - a)
    assert abs(normalize_angle(3.1 - (-3.1))) == pytest.approx(
        2 * math.pi - 6.2, abs=1e-12
    )
    out = stabilize_rate([-3.1, 3.1], -3.1)
    assert np.allclose(out, [-3.1, 3.1])


def test_first_value_checked_against_prev():
    out = stabilize_rate([1.0, 1.1], 0.0)
    # 1.0 jumps > 0.3 from prev 0.0 -> clamped to 0.0, cascade clamps 1.1 too
    assert list(out) == [0.0, 0.0]


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-10.0, 10.0), min_size=1, max_size=30),
    st.floats(-math.pi, math.pi, exclude_max=True),
)
def test_stabilize_rate_postcondition_and_idempotence(values, prev):
    out = stabilize_rate(values, prev)
    assert all(-math.pi <= v < math.pi for v in out)
    assert abs(wrapped_delta(prev, float(out[0]))) <= PARAMS.max_step_delta + 1e-12
    for a, b in zip(out, out[1:]):
        assert abs(wrapped_delta(float(a), float(b))) <= PARAMS.max_step_delta + 1e-12
    again = stabilize_rate(out, prev)
    assert np.array_equal(out, again)


# --- headings_from_xy --------------------------------------------------------


def test_axis_aligned_plus_x():
    xy = [(0.1 * (i + 1), 0.0) for i in range(20)]
    out = headings_from_xy(xy, 0.0)
    assert np.allclose(out, 0.0)


def test_axis_aligned_plus_y():
    xy = [(0.0, 0.1 * (i + 1)) for i in range(20)]
    out = headings_from_xy(xy, math.pi / 2)
    assert np.allclose(out, math.pi / 2)


def test_quarter_circle_matches_analytic_tangent():
    # radius 10 m arc over 20 points; chord heading should match the tangent
    # at each chord midpoint within 0.01 rad
    radius = 10.0
    n = 20
    thetas = np.linspace(0.0, math.pi / 2, n)
    xy = [(radius * math.sin(t), radius * (1.0 - math.cos(t))) for t in thetas]
    prev = 0.0  # tangent at arc start
    out = headings_from_xy(xy, prev)
    for i in range(n - 1):
        mid = (thetas[i] + thetas[i + 1]) / 2
        # tangent direction of (R sin t, R (1 - cos t)) is (cos t, sin t)
        analytic = math.atan2(math.sin(mid), math.cos(mid))
        assert abs(wrapped_delta(analytic, float(out[i]))) < 0.01
    # last heading copies the final chord
    assert out[-1] == out[-2]


def test_stopped_plan_keeps_prev_heading():
    xy = [(0.001 * i, 0.0) for i in range(20)]  # 19 mm total
    out = headings_from_xy(xy, 1.234)
    assert np.all(out == 1.234)


def test_single_point_plan_keeps_prev_heading():
    out = headings_from_xy([(3.0, 4.0)], -2.0)
    assert list(out) == [-2.0]


def test_empty_plan_rejected():
    with pytest.raises(ValueError):
        headings_from_xy(np.zeros((0, 2)), 0.0)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_outputs_always_in_range(data):
    n = data.draw(st.integers(min_value=1, max_value=30))
    pts = [
        (
            data.draw(st.floats(-100.0, 100.0)),
            data.draw(st.floats(-100.0, 100.0)),
        )
        for _ in range(n)
    ]
    prev = data.draw(st.floats(-math.pi, math.pi, exclude_max=True))
    out = headings_from_xy(pts, prev)
    assert all(-math.pi <= v < math.pi for v in out)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_rotation_equivariance(data):
    n = data.draw(st.integers(min_value=2, max_value=25))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    pts = np.cumsum(rng.normal(0.0, 1.0, size=(n, 2)), axis=0)
    prev = data.draw(st.floats(-math.pi, math.pi, exclude_max=True))
    phi = data.draw(st.floats(-math.pi, math.pi))
    rot = np.array(
        [[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]]
    )
    base = headings_from_xy(pts, prev)
    turned = headings_from_xy(pts @ rot.T, normalize_angle(prev + phi))
    for a, b in zip(base, turned):
        assert abs(wrapped_delta(normalize_angle(float(a) + phi), float(b))) < 1e-9


def test_stopped_constancy_property():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = rng.integers(2, 25)
        # jitter small enough that the path stays under 0.3 m
        steps = rng.normal(0.0, 0.001, size=(n - 1, 2))
        pts = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
        if segment_length_sum([tuple(p) for p in pts]) >= 0.3:
            continue
        prev = float(rng.uniform(-math.pi, math.pi - 1e-9))
        out = headings_from_xy(pts, prev)
        assert np.all(out == prev)
