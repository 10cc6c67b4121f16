"""Auto-labeling tests: pair geometry, sequence folding, augmentation.

Ground truth comes from the simulator's exact navigator state, so label
quality is measured against the geometry that generated the frames.
"""

import dataclasses
import math

import numpy as np
import pytest

from skypatrol.augment import (augment, crop_jitter_sample, flip_sample,
                               scale_sample)
from skypatrol.camera import CameraConfig, Observation, SimTruth, world_to_pixel
from skypatrol.dataset import DatasetError, LabeledDataset, LabeledSample, read_pgm, write_pgm
from skypatrol.drone import DronePose
from skypatrol.geometry import BoundingBox, GeometryError
from skypatrol.labeling import (ConsistencyError, DegenerateMotionError,
                                LabelConfig, TranslationRangeError,
                                direction_from_motion, label_pair,
                                label_sequence, translation_label)
from skypatrol.runs import CollectConfig, collect_run, initial_box
from skypatrol.seeding import rng_for
from skypatrol.world import Route, straight_world, hex_world

CAM = CameraConfig()

EXACT = LabelConfig(tracker_jitter_px=0.0, match_noise_px=0.0, match_outlier_frac=0.0)
NOISY = LabelConfig(tracker_jitter_px=1.0, match_noise_px=1.0, match_outlier_frac=0.3)


def _obs_at(pose: DronePose, nav_world, tick=0) -> Observation:
    nav_world = np.asarray(nav_world, float)
    truth = SimTruth(nav_position=nav_world, nav_bearing=0.0, nav_speed=1.5,
                     nav_pixel=world_to_pixel(pose, CAM, nav_world),
                     junction_dist=math.inf)
    return Observation(raster=np.zeros((CAM.height, CAM.width), np.uint8),
                       pose=pose, tick=tick, meters_per_pixel=CAM.meters_per_pixel(pose.altitude),
                       truth=truth)


def _center_box():
    return BoundingBox(CAM.cx, CAM.cy, 30.0, 30.0)


# -- label_pair geometry ---------------------------------------------------

def test_straight_motion_centered_gives_zero_labels():
    pose = DronePose(0.0, 0.0, 0.0)
    a = _obs_at(pose, (0.0, 0.0))
    b = _obs_at(pose, (2.25, 0.0), tick=1)  # 30 px toward image top
    sample, carried = label_pair(a, b, _center_box(), EXACT, rng_for(0, "t"))
    assert sample.d == pytest.approx(0.0, abs=1e-9)
    assert sample.t == pytest.approx(0.0, abs=1e-9)
    assert carried.center == pytest.approx([CAM.cx, CAM.cy - 30.0])


def test_stationary_navigator_is_degenerate():
    pose = DronePose(0.0, 0.0, 0.0)
    a = _obs_at(pose, (0.0, 0.0))
    b = _obs_at(pose, (0.0, 0.0), tick=1)
    with pytest.raises(DegenerateMotionError):
        label_pair(a, b, _center_box(), EXACT, rng_for(0, "t"))


def test_rightward_motion_is_positive_d():
    pose = DronePose(0.0, 0.0, 0.0)
    a = _obs_at(pose, (0.0, 0.0))
    # forward and to the right (world -y) at 45 degrees
    b = _obs_at(pose, (2.0, -2.0), tick=1)
    sample, _ = label_pair(a, b, _center_box(), EXACT, rng_for(0, "t"))
    assert sample.d == pytest.approx(0.5, abs=1e-6)
    # the motion line back-extended to the bottom row lands left of center
    expected_t = (CAM.cx - (CAM.height - 1 - CAM.cy) * 1.0 - CAM.cx) / (CAM.width / 2)
    assert sample.t == pytest.approx(expected_t, abs=1e-6)
    assert sample.t < 0


def test_ego_motion_is_compensated():
    # identical navigator walk, three different drone motions: labels agree
    nav_i, nav_j = (0.0, 0.0), (2.25, 0.3)
    pose_i = DronePose(0.0, 0.0, 0.0)
    results = []
    for pose_j in (pose_i, DronePose(1.5, -0.5, 0.0), DronePose(0.8, 0.4, 0.18)):
        a = _obs_at(pose_i, nav_i)
        b = _obs_at(pose_j, nav_j, tick=1)
        box = BoundingBox(*world_to_pixel(pose_i, CAM, nav_i), 30.0, 30.0)
        sample, _ = label_pair(a, b, box, EXACT, rng_for(0, "t"))
        results.append(sample.d)
    assert max(results) - min(results) < 1e-3
    assert results[0] == pytest.approx(results[1], abs=1e-6)


def test_teleport_jump_fails_consistency():
    pose = DronePose(0.0, 0.0, 0.0)
    a = _obs_at(pose, (0.0, 0.0))
    b = _obs_at(pose, (2.25, -8.0), tick=1)  # 8 m sideways: > 61 px jump
    with pytest.raises(ConsistencyError):
        label_pair(a, b, _center_box(), EXACT, rng_for(0, "t"))


def test_out_of_frame_intersection_rejected():
    pose = DronePose(0.0, 0.0, 0.0)
    nav_i = np.array([0.0, -13.5])  # near the right frame edge
    nav_j = nav_i + np.array([2.25, 2.25])  # up-left at 45 degrees
    a = _obs_at(pose, nav_i)
    b = _obs_at(pose, nav_j, tick=1)
    box = BoundingBox(*world_to_pixel(pose, CAM, nav_i), 30.0, 30.0)
    with pytest.raises(TranslationRangeError):
        label_pair(a, b, box, EXACT, rng_for(0, "t"))


def test_label_formulas_match_hand_values():
    theta, d = direction_from_motion(np.array([10.0, -10.0]))
    assert theta == pytest.approx(math.pi / 4)
    assert d == pytest.approx(0.5)
    # box at center, 45 degrees right: intersection 49.5 px left of center
    t = translation_label(np.array([CAM.cx, CAM.cy]), math.pi / 4, CAM)
    assert t == pytest.approx(-49.5 / 200.0)


# -- sequences over simulator runs -----------------------------------------

def _straight_run(n_frames, seed=0):
    world = straight_world(length=1400.0, width=6.0, angle=0.0)
    route = Route.from_nodes(world, [0, 1])
    cfg = CollectConfig(max_frames=n_frames)
    return world, collect_run(world, cfg, seed=seed, route=route)


def test_two_static_frames_log_one_degenerate_skip():
    pose = DronePose(0.0, 0.0, 0.0)
    frames = [_obs_at(pose, (0.0, 0.0)), _obs_at(pose, (0.0, 0.0), tick=1)]
    ds = label_sequence(frames, _center_box(), EXACT, seed=0)
    assert len(ds) == 0
    assert len(ds.rejections) == 1
    assert ds.rejections[0] == {"index": 0, "reason": "degenerate-motion",
                                "detail": ds.rejections[0]["detail"]}


def test_straight_run_labels_are_small_and_dense():
    _, frames = _straight_run(500)
    assert len(frames) == 500
    ds = label_sequence(frames, initial_box(frames[0]), LabelConfig(), seed=0)
    assert len(ds) >= 480
    d = np.array([s.d for s in ds.samples])
    assert np.abs(d).mean() < 0.05


def test_exact_labels_match_ground_truth_bearing():
    _, frames = _straight_run(60, seed=3)
    ds = label_sequence(frames, initial_box(frames[0]), EXACT, seed=0)
    assert len(ds) >= 55
    for s in ds.samples:
        assert s.gt_d is not None
        assert abs(s.d - s.gt_d) * 90.0 < 0.1  # degrees


def test_noisy_labels_hit_headline_accuracy_bar():
    world = hex_world(seed=11)
    frames = collect_run(world, CollectConfig(max_frames=120), seed=11)
    assert len(frames) >= 100
    ds = label_sequence(frames, initial_box(frames[0]), NOISY, seed=1)
    errs = np.array([abs(s.d - s.gt_d) * 90.0 for s in ds.samples if s.gt_d is not None])
    assert len(errs) >= 80
    assert (errs < 5.0).mean() >= 0.70


def test_teleported_tail_yields_single_consistency_rejection():
    _, frames = _straight_run(40, seed=5)

    def shifted(obs):
        pose = DronePose(obs.pose.x, obs.pose.y - 8.0, obs.pose.yaw, obs.pose.altitude)
        truth = SimTruth(nav_position=obs.truth.nav_position - np.array([0.0, 8.0]),
                         nav_bearing=obs.truth.nav_bearing, nav_speed=obs.truth.nav_speed,
                         nav_pixel=obs.truth.nav_pixel, junction_dist=obs.truth.junction_dist)
        return Observation(raster=obs.raster, pose=pose, tick=obs.tick,
                           meters_per_pixel=obs.meters_per_pixel, truth=truth)

    frames = frames[:20] + [shifted(o) for o in frames[20:]]
    ds = label_sequence(frames, initial_box(frames[0]), EXACT, seed=0)
    consistency = [r for r in ds.rejections if r["reason"] == "consistency"]
    assert len(consistency) == 1
    assert consistency[0]["index"] == 19
    assert len(ds) == 38


def test_sequence_determinism():
    _, frames = _straight_run(30, seed=7)
    a = label_sequence(frames, initial_box(frames[0]), NOISY, seed=9)
    b = label_sequence(frames, initial_box(frames[0]), NOISY, seed=9)
    assert [(s.d, s.t) for s in a.samples] == [(s.d, s.t) for s in b.samples]
    c = label_sequence(frames, initial_box(frames[0]), NOISY, seed=10)
    assert [(s.d, s.t) for s in a.samples] != [(s.d, s.t) for s in c.samples]


def test_sequence_needs_two_frames():
    _, frames = _straight_run(2)
    with pytest.raises(GeometryError):
        label_sequence(frames[:1], initial_box(frames[0]), EXACT)


# -- dataset on disk -------------------------------------------------------

def test_pgm_roundtrip(tmp_path):
    raster = rng_for(0, "pgm").integers(0, 256, size=(100, 400)).astype(np.uint8)
    path = tmp_path / "f.pgm"
    write_pgm(path, raster)
    assert np.array_equal(read_pgm(path), raster)
    with pytest.raises(DatasetError):
        write_pgm(path, raster.astype(np.float32))


def test_dataset_roundtrip_and_byte_determinism(tmp_path):
    _, frames = _straight_run(12, seed=2)
    ds = label_sequence(frames, initial_box(frames[0]), LabelConfig(), seed=4)
    ds.save(tmp_path / "a")
    ds.save(tmp_path / "b")
    for name in ("header.json", "manifest.jsonl", "rejections.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    loaded = LabeledDataset.load(tmp_path / "a")
    assert len(loaded) == len(ds)
    assert loaded.header["config_hash"] == ds.header["config_hash"]
    for s, l in zip(ds.samples, loaded.samples):
        assert l.d == pytest.approx(s.d, abs=1e-9)
        assert l.t == pytest.approx(s.t, abs=1e-9)
        assert np.array_equal(l.frame, s.frame)


def test_dataset_load_rejects_missing_and_inconsistent(tmp_path):
    with pytest.raises(DatasetError):
        LabeledDataset.load(tmp_path / "nope")


# -- augmentation ----------------------------------------------------------

def _sample(d=0.3, t=-0.2, frame=None):
    if frame is None:
        frame = rng_for(1, "aug").integers(0, 256, size=(100, 400)).astype(np.uint8)
    return LabeledSample(frame=frame, d=d, t=t, gt_d=d, gt_t=t)


def test_flip_mirrors_labels():
    f = flip_sample(_sample(0.3, -0.2))
    assert (f.d, f.t) == (-0.3, 0.2)
    assert (f.gt_d, f.gt_t) == (-0.3, 0.2)


def test_flip_twice_is_identity():
    s = _sample(0.3, -0.2)
    ff = flip_sample(flip_sample(s))
    assert (ff.d, ff.t) == (s.d, s.t)
    assert np.array_equal(ff.frame, s.frame)


def test_crop_shift_right_drops_t_by_tenth_of_width():
    s = _sample(d=0.0, t=0.1)
    c = crop_jitter_sample(s, dx=40, dy=0)
    assert c.t == pytest.approx(s.t - 0.2)
    assert c.d == s.d


def test_crop_vertical_shift_uses_motion_line_geometry():
    # oracle: recompute the bottom-edge intersection after moving the box
    s = _sample(d=0.5, t=translation_label(np.array([CAM.cx, CAM.cy]), math.pi / 4, CAM))
    dy = 10
    c = crop_jitter_sample(s, dx=0, dy=dy)
    moved_box = np.array([CAM.cx, CAM.cy - dy])
    assert c.t == pytest.approx(translation_label(moved_box, math.pi / 4, CAM), abs=1e-9)


def test_crop_out_of_range_returns_none():
    assert crop_jitter_sample(_sample(d=0.0, t=0.95), dx=-40, dy=0) is None


def test_scale_blurs_but_keeps_labels():
    s = _sample()
    z = scale_sample(s, 4)
    assert (z.d, z.t) == (s.d, s.t)
    assert z.frame.shape == s.frame.shape
    assert z.frame.std() < s.frame.std()
    with pytest.raises(DatasetError):
        scale_sample(s, 3)


def test_augment_appends_with_provenance():
    ds = LabeledDataset(samples=[_sample(), _sample(0.1, 0.4)])
    out = augment(ds, ["flip", "crop_jitter", "scale"], seed=3)
    origins = [s.origin for s in out.samples]
    assert origins.count("raw") == 2
    assert origins.count("flip") == 2
    assert origins.count("scale") == 2
    assert out.header["augment"]["ops"] == ["flip", "crop_jitter", "scale"]
    again = augment(ds, ["flip", "crop_jitter", "scale"], seed=3)
    assert [(s.d, s.t) for s in again.samples] == [(s.d, s.t) for s in out.samples]


def test_augment_rejects_unknown_op():
    with pytest.raises(DatasetError):
        augment(LabeledDataset(samples=[_sample()]), ["rotate"], seed=0)
