import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import hom, rodrigues, rot_z, twist_matrix
from sageicp.geometry import (
    DegenerateRotationError, Pose, azimuth_phase, compose, correct_vertical_angle, deskew,
    exp_map, log_map, poses_to_array, so3_exp,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)
twists = st.lists(st.floats(-1.0, 1.0), min_size=6, max_size=6).map(np.array)


def random_pose(rng, scale=5.0):
    axis = rng.normal(size=3)
    return Pose(rodrigues(axis, rng.uniform(0, math.pi * 0.95)), rng.normal(scale=scale, size=3))


def test_pose_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, 1.1]))
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        Pose(np.eye(3), [0.0, np.nan, 0.0])


def test_pose_arrays_are_read_only():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.translation[0] = 1.0


def test_identity_composition():
    assert compose(Pose.identity(), Pose.identity()) == Pose.identity()


def test_compose_with_inverse(rng):
    for _ in range(20):
        p = random_pose(rng)
        m = (p @ p.inverse()).matrix
        assert np.allclose(m, np.eye(4), atol=1e-9)


def test_compose_matches_homogeneous_product(rng):
    for _ in range(20):
        a, b = random_pose(rng), random_pose(rng)
        x = rng.normal(size=3)
        ref = hom(a.rotation, a.translation) @ hom(b.rotation, b.translation) @ np.append(x, 1.0)
        assert np.allclose(compose(a, b).apply(x), ref[:3], atol=1e-12)
        assert np.allclose(a.apply(b.apply(x)), ref[:3], atol=1e-12)


def test_compose_associative(rng):
    for _ in range(20):
        a, b, c = (random_pose(rng) for _ in range(3))
        assert np.allclose(((a @ b) @ c).matrix, (a @ (b @ c)).matrix, atol=1e-9)


def test_exp_zero_is_identity():
    assert np.array_equal(exp_map(np.zeros(6)).matrix, np.eye(4))


def test_exp_planar_rotation():
    theta = 0.7
    p = exp_map([0, 0, theta, 0, 0, 0])
    assert np.allclose(p.rotation, rot_z(math.degrees(theta)), atol=1e-12)
    assert np.allclose(p.translation, 0.0)


@given(twists)
def test_exp_matches_matrix_exponential(xi):
    assert np.allclose(exp_map(xi).matrix, twist_matrix(xi), atol=1e-10)


@given(twists)
def test_log_exp_round_trip(xi):
    assert np.allclose(log_map(exp_map(xi)), xi, atol=1e-9)


def test_log_round_trip_large_angle(rng):
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(2.5, math.pi - 1e-4)
        xi = np.concatenate([axis * angle, rng.normal(size=3)])
        p = exp_map(xi)
        assert np.allclose(log_map(p), xi, atol=1e-9)
        assert np.allclose(exp_map(log_map(p)).matrix, p.matrix, atol=1e-9)


def test_log_near_pi_raises():
    with pytest.raises(DegenerateRotationError):
        log_map(Pose(rot_z(180.0)))
    with pytest.raises(DegenerateRotationError):
        log_map(Pose(so3_exp([0.0, math.pi - 1e-8, 0.0])))


def test_exp_rejects_non_finite():
    with pytest.raises(ValueError):
        exp_map([0, 0, np.inf, 0, 0, 0])


def spherical(p):
    x, y, z = p
    return math.hypot(x, y, z), math.atan2(y, x), math.atan2(z, math.hypot(x, y))


def test_vertical_correction_zero_angle():
    assert np.array_equal(correct_vertical_angle([[1.0, 0.0, 0.0]], 0.0), [[1.0, 0.0, 0.0]])


def test_vertical_correction_quarter_turn():
    out = correct_vertical_angle([[1.0, 0.0, 0.0]], 90.0)
    assert np.allclose(out, [[0.0, 0.0, 1.0]], atol=1e-9)


def test_vertical_correction_spherical_oracle():
    out = correct_vertical_angle([[3.0, 4.0, 0.0]], 0.205)[0]
    el = math.radians(0.205)
    az = math.atan2(4, 3)
    ref = [5 * math.cos(el) * math.cos(az), 5 * math.cos(el) * math.sin(az), 5 * math.sin(el)]
    assert np.allclose(out, ref, atol=1e-12)
    r, a, e = spherical(out)
    assert math.isclose(r, 5.0, rel_tol=1e-12)
    assert math.isclose(a, az, rel_tol=1e-12)
    assert math.isclose(e, el, rel_tol=1e-9)


def test_vertical_correction_origin_passthrough():
    out = correct_vertical_angle([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert np.array_equal(out[0], [0.0, 0.0, 0.0])


@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=30), st.floats(-5, 5))
def test_vertical_correction_preserves_count_norm_azimuth(pts, angle):
    pts = np.array(pts)
    out = correct_vertical_angle(pts, angle)
    assert out.shape == pts.shape
    n_in, n_out = np.linalg.norm(pts, axis=1), np.linalg.norm(out, axis=1)
    assert np.allclose(n_out, n_in, rtol=1e-9, atol=1e-12)
    # azimuth is only defined away from the z axis and away from the elevation wrap
    horiz = np.hypot(pts[:, 0], pts[:, 1])
    el = np.arctan2(pts[:, 2], horiz)
    ok = (horiz > 1e-6) & (np.abs(el + math.radians(angle)) < math.pi / 2 - 1e-3)
    az_in = np.arctan2(pts[ok, 1], pts[ok, 0])
    az_out = np.arctan2(out[ok, 1], out[ok, 0])
    assert np.allclose(np.angle(np.exp(1j * (az_out - az_in))), 0.0, atol=1e-9)
    el_out = np.arctan2(out[ok, 2], np.hypot(out[ok, 0], out[ok, 1]))
    assert np.allclose(el_out - el[ok], math.radians(angle), atol=1e-9)


def test_deskew_identity_motion_is_bitwise_noop(rng):
    pts = rng.normal(size=(100, 3))
    out = deskew(pts, rng.random(100), Pose.identity())
    assert np.array_equal(out, pts)
    assert out is not pts


def test_deskew_full_phase_translation():
    motion = Pose(np.eye(3), [1.0, 0.0, 0.0])
    out = deskew([[2.0, 3.0, 4.0], [2.0, 3.0, 4.0]], [1.0, 0.0], motion)
    assert np.allclose(out[0], [3.0, 3.0, 4.0], atol=1e-12)
    assert np.allclose(out[1], [2.0, 3.0, 4.0], atol=1e-12)


def test_deskew_half_phase_rotation():
    motion = Pose(rot_z(10.0))
    p = np.array([[5.0, 1.0, 2.0]])
    out = deskew(p, [0.5], motion)
    assert np.allclose(out[0], rot_z(5.0) @ p[0], atol=1e-9)


def test_deskew_matches_per_point_exp(rng):
    motion = exp_map(rng.normal(scale=0.2, size=6))
    pts = rng.normal(scale=10, size=(50, 3))
    s = rng.random(50)
    xi = log_map(motion)
    out = deskew(pts, s, motion)
    for i in range(50):
        m = twist_matrix(s[i] * xi)
        assert np.allclose(out[i], m[:3, :3] @ pts[i] + m[:3, 3], atol=1e-9)


def test_azimuth_phase_range():
    pts = np.array([[-1.0, 1e-12, 0.0], [1.0, 0.0, 0.0], [-1.0, -1e-12, 0.0], [0.0, 1.0, 0.0]])
    s = azimuth_phase(pts)
    assert np.all((s >= 0) & (s <= 1))
    assert s[0] < 1e-9 and s[2] > 1 - 1e-9
    assert math.isclose(s[1], 0.5) and math.isclose(s[3], 0.25)


def test_poses_to_array_accepts_generators():
    arr = poses_to_array(Pose.identity() for _ in range(3))
    assert arr.shape == (3, 4, 4)
    assert poses_to_array([]).shape == (0, 4, 4)
