import math

import numpy as np
import pytest

from oracles import rot_z
from sageicp.config import RunConfig
from sageicp.geometry import Pose, poses_to_array
from sageicp.io import FrameMismatchError
from sageicp.pipeline import STAGES, Odometry, run_batch
from sageicp.synthetic import street_sequence

CFG = RunConfig(vertical_correction_deg=0.0)


@pytest.fixture(scope="module")
def short_drive():
    return street_sequence(n_frames=8, n_points=6000, seed=3)


def test_predict_without_history():
    assert Odometry().predict() == Pose.identity()


def test_predict_constant_translation():
    o = Odometry()
    o.history.extend([Pose(None, [1, 0, 0]), Pose(None, [2, 0, 0])])
    assert np.allclose(o.predict().translation, [3, 0, 0])


def test_predict_constant_yaw():
    o = Odometry()
    a, b = Pose(rot_z(10.0), [1.0, 2.0, 0.0]), Pose(rot_z(15.0), [2.0, 2.5, 0.0])
    o.history.extend([a, b])
    rel = np.linalg.inv(a.matrix) @ b.matrix
    assert np.allclose(o.predict().matrix, b.matrix @ rel, atol=1e-12)
    assert np.allclose(o.predict().rotation, rot_z(20.0), atol=1e-12)


def test_single_pose_history_predicts_last():
    o = Odometry()
    o.history.append(Pose(None, [4, 0, 0]))
    assert o.predict() == Pose(None, [4, 0, 0])


def test_first_frame_bootstraps_map(short_drive):
    o = Odometry(CFG)
    pts, labs = short_drive.frames[0]
    pose, diag = o.process_scan(pts, labs)
    assert pose == Pose.identity()
    assert o.voxel_map.n_points > 0 and diag.points_registered > 0
    assert set(diag.timings_ms) == set(STAGES)


def test_repeated_frame_stays_at_identity(short_drive):
    o = Odometry(CFG)
    pts, labs = short_drive.frames[0]
    o.process_scan(pts, labs)
    pose, diag = o.process_scan(pts, labs)
    assert np.linalg.norm(pose.translation) < 1e-3
    assert diag.correspondences > 0 and not diag.degenerate


def test_tracks_synthetic_drive(short_drive):
    poses, diags = run_batch(short_drive.frames, CFG)
    est = poses_to_array(poses)
    gt = short_drive.relative_gt()
    err = np.linalg.norm(est[:, :3, 3] - gt[:, :3, 3], axis=1)
    assert err.max() < 0.1
    assert not any(d.degenerate for d in diags)
    assert any(d.instances_removed for d in diags)


def test_history_length_and_frame_counter(short_drive):
    o = Odometry(CFG)
    for k, (pts, labs) in enumerate(short_drive.frames[:3]):
        o.process_scan(pts, labs)
        assert len(o.history) == min(k + 1, 2)
    assert o.frame_count == 3


def test_invalid_frame_leaves_state_untouched(short_drive):
    o = Odometry(CFG)
    pts, labs = short_drive.frames[0]
    o.process_scan(pts, labs)
    before = (o.frame_count, o.voxel_map.n_points, o.threshold.tau, list(o.history))
    with pytest.raises(FrameMismatchError):
        o.process_scan(pts, labs[:-1])
    bad = pts.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        o.process_scan(bad, labs)
    assert before == (o.frame_count, o.voxel_map.n_points, o.threshold.tau, list(o.history))


def test_baseline_ignores_labels(short_drive):
    frames = short_drive.frames[:4]
    a, _ = run_batch(frames, CFG, baseline=True)
    b, _ = run_batch([(p, np.zeros(len(p), np.uint16)) for p, _ in frames], CFG, baseline=True)
    assert a == b


def test_all_switches_off_equals_baseline(short_drive):
    off = CFG.replace(ablation=CFG.ablation.disabled("rdi", "ss", "saa", "avm"))
    a, _ = run_batch(short_drive.frames[:5], off)
    b, _ = run_batch(short_drive.frames[:5], CFG, baseline=True)
    assert poses_to_array(a).tobytes() == poses_to_array(b).tobytes()


def test_saa_off_forces_plain_distance(short_drive, monkeypatch):
    import sageicp.pipeline as pl

    seen = []
    real = pl.register_scan

    def spy(*args, **kw):
        seen.append(args[5])
        return real(*args, **kw)

    monkeypatch.setattr(pl, "register_scan", spy)
    o = Odometry(CFG.replace(ablation=CFG.ablation.disabled("saa")))
    o.process_scan(*short_drive.frames[0])
    assert seen == [1.0]


def test_deskew_and_vertical_correction_run(short_drive):
    cfg = RunConfig(deskew=True)
    poses, diags = run_batch(short_drive.frames[:4], cfg)
    assert len(poses) == 4 and all(math.isfinite(d.tau) for d in diags)


def test_far_labels_stripped_before_use():
    o = Odometry(CFG)
    pts = np.array([[60.0, 0.0, 0.0]] * 3 + [[5.0, 0.0, 0.0]])
    o.process_scan(pts, np.array([81, 81, 81, 81]))
    _, labs = o.voxel_map.point_cloud()
    assert sorted(labs.tolist()) == [0, 81]


def test_diagnostics_json_round_trip(short_drive):
    import json

    _, diag = Odometry(CFG).process_scan(*short_drive.frames[0], frame_index=5)
    rec = json.loads(diag.to_json())
    assert rec["frame"] == 5 and len(rec["pose"]) == 12 and set(rec["timings_ms"]) == set(STAGES)
