import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sageicp.geometry import Pose, exp_map
from sageicp.io import (
    FrameMismatchError, KittiSequence, MalformedLabelError, MalformedScanError, MissingFrameError,
    TrajectoryParseError, camera_to_lidar, encode_labels, encode_scan, parse_trajectory, read_labels,
    read_scan, read_trajectory, read_velo_to_cam, write_sequence, write_trajectory,
)


def test_empty_scan():
    rec = read_scan(b"")
    assert len(rec) == 0 and rec.points.shape == (0, 3)


def test_single_record_decode():
    rec = read_scan(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5), frame_index=7)
    assert np.array_equal(rec.points, [[1.0, 2.0, 3.0]])
    assert np.array_equal(rec.intensities, [0.5])
    assert rec.frame_index == 7


def test_misaligned_scan_names_source_and_size():
    with pytest.raises(MalformedScanError, match=r"scan\.bin.*33"):
        read_scan(b"\0" * 33, source="scan.bin")


def test_non_finite_points_dropped_and_counted():
    data = struct.pack("<8f", 1, 2, 3, 0, float("nan"), 0, 0, 0)
    rec = read_scan(data)
    assert len(rec) == 1 and rec.dropped == 1
    assert len(rec.points) == len(rec.intensities)


@given(arrays(np.float32, st.tuples(st.integers(0, 50), st.just(3)),
              elements=st.floats(-1e4, 1e4, width=32)))
def test_scan_encode_round_trip(pts):
    rec = read_scan(encode_scan(pts))
    assert np.array_equal(rec.points, pts.astype(np.float64))


def test_label_bit_split():
    rec = read_labels(struct.pack("<2I", 0x00000028, 0x0003000A))
    assert rec.class_codes.tolist() == [40, 10]
    assert rec.instance_ids.tolist() == [0, 3]


def test_empty_labels_and_misaligned():
    assert len(read_labels(b"")) == 0
    with pytest.raises(MalformedLabelError):
        read_labels(b"\0" * 5)


def test_label_encode_round_trip(rng):
    codes = rng.integers(0, 1 << 16, 100)
    inst = rng.integers(0, 1 << 16, 100)
    rec = read_labels(encode_labels(codes, inst))
    assert np.array_equal(rec.class_codes, codes) and np.array_equal(rec.instance_ids, inst)


def test_kitti_identity_and_translation_lines():
    assert write_trajectory([Pose.identity()]) == "1 0 0 0 0 1 0 0 0 0 1 0\n"
    assert write_trajectory([Pose(None, [1, 2, 3])]) == "1 0 0 1 0 1 0 2 0 0 1 3\n"


def test_no_negative_zero_in_output():
    p = Pose(None, [-0.0, 0.0, -0.0])
    assert "-0" not in write_trajectory([p])


def test_tum_line_layout():
    line = write_trajectory([Pose(None, [1, 2, 3])], fmt="tum")
    assert line == "0 1 2 3 0 0 0 1\n"


@pytest.mark.parametrize("fmt", ["kitti", "tum"])
def test_trajectory_round_trip(rng, fmt):
    poses = [exp_map(rng.normal(size=6)) for _ in range(30)]
    back = parse_trajectory(write_trajectory(poses, fmt=fmt), fmt=fmt)
    for p, m in zip(poses, back):
        assert np.allclose(p.matrix, m, atol=1e-6)


def test_parse_error_reports_line_number():
    good = "1 0 0 0 0 1 0 0 0 0 1 0\n"
    with pytest.raises(TrajectoryParseError) as info:
        parse_trajectory(good + "1 0 0 0 0 1 0 0 0 0 1\n", source="est.txt")
    assert info.value.line == 2
    assert "est.txt:2" in str(info.value)
    with pytest.raises(TrajectoryParseError):
        parse_trajectory("1 0 0 0 0 1 0 0 0 0 1 x\n")


def _frames(rng, n=3, m=50):
    return [(rng.normal(size=(m, 3)).astype(np.float32), rng.choice([40, 252, 10], m)) for _ in range(n)]


def test_sequence_layout_and_moving_remap(tmp_path, rng):
    frames = _frames(rng)
    write_sequence(tmp_path / "sequences" / "05", frames)
    seq = KittiSequence(tmp_path, "05")
    assert len(seq) == 3
    pts, labs, rec = seq.load(1)
    assert np.array_equal(pts, frames[1][0].astype(np.float64))
    expect = np.where(frames[1][1] == 252, 10, frames[1][1])
    assert np.array_equal(labs, expect)
    assert rec.frame_index == 1


def test_separate_label_root(tmp_path, rng):
    frames = _frames(rng, 2)
    write_sequence(tmp_path / "velo" / "sequences" / "00", frames, labels=False)
    lab_dir = tmp_path / "lab" / "sequences" / "00" / "labels"
    lab_dir.mkdir(parents=True)
    for i, (_, labs) in enumerate(frames):
        (lab_dir / f"{i:06d}.label").write_bytes(encode_labels(labs))
    seq = KittiSequence(tmp_path / "velo", "00", labels=tmp_path / "lab")
    assert seq.label_dir == lab_dir


def test_missing_label_dir_is_explicit(tmp_path, rng):
    d = write_sequence(tmp_path / "s", _frames(rng), labels=False)
    with pytest.raises(MissingFrameError, match="labels"):
        KittiSequence(d)
    seq = KittiSequence(d, require_labels=False)
    assert np.all(seq.load(0)[1] == 0)


def test_missing_frame_names_first_gap(tmp_path, rng):
    d = write_sequence(tmp_path / "s", _frames(rng, 4))
    (d / "velodyne" / "000002.bin").unlink()
    with pytest.raises(MissingFrameError, match="000002.bin"):
        KittiSequence(d)


def test_missing_label_file(tmp_path, rng):
    d = write_sequence(tmp_path / "s", _frames(rng, 3))
    (d / "labels" / "000001.label").unlink()
    with pytest.raises(MissingFrameError, match="000001.label"):
        KittiSequence(d)


def test_length_mismatch_rejected_naming_frame(tmp_path, rng):
    d = write_sequence(tmp_path / "s", _frames(rng, 2))
    (d / "labels" / "000001.label").write_bytes(encode_labels(np.zeros(10)))
    seq = KittiSequence(d)
    seq.load(0)
    with pytest.raises(FrameMismatchError, match="frame 1"):
        seq.load(1)


def test_read_trajectory_file(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text(write_trajectory([Pose.identity()] * 2))
    assert read_trajectory(p).shape == (2, 4, 4)


KITTI_TR = ("Tr: 4.276802385584e-04 -9.999672484946e-01 -8.084491683471e-03 -1.198459927713e-02 "
            "-7.210626507497e-03 8.081198471645e-03 -9.999413164504e-01 -5.403984729748e-02 "
            "9.999738645903e-01 4.859485810390e-04 -7.206933692422e-03 -2.921968648686e-01")


def test_calibration_round_trip(tmp_path, rng):
    calib = tmp_path / "calib.txt"
    calib.write_text("P0: " + " ".join(["0"] * 12) + "\n" + KITTI_TR + "\n")
    Tr = read_velo_to_cam(calib)
    assert Tr[3].tolist() == [0, 0, 0, 1] and Tr[0, 3] == pytest.approx(-1.198459927713e-02)
    lidar = np.stack([exp_map(rng.normal(size=6)).matrix for _ in range(4)])
    cam = np.einsum("ij,njk,kl->nil", Tr, lidar, np.linalg.inv(Tr))
    assert np.allclose(camera_to_lidar(cam, Tr), lidar, atol=1e-12)
    assert np.allclose(camera_to_lidar(np.eye(4)[None], Tr), np.eye(4), atol=1e-12)


def test_calibration_without_tr(tmp_path):
    calib = tmp_path / "calib.txt"
    calib.write_text("P0: 1 2 3\n")
    with pytest.raises(TrajectoryParseError, match="no Tr"):
        read_velo_to_cam(calib)
    calib.write_text("Tr: 1 2 3\n")
    with pytest.raises(TrajectoryParseError, match="calib.txt:1"):
        read_velo_to_cam(calib)
