"""Smoke tests for the Python bindings."""

import numpy as np
import pytest

import homalign as ha


def test_apply_homography_hand_case():
    p = ha.HomographyParams(1, 0, 0, 0, 1, 0, 0.5, 0)
    out = ha.apply_homography(p, ha.Point(1.0, 1.0))
    assert out.x == pytest.approx(1.0 / 1.5, abs=1e-15)
    assert out.y == pytest.approx(1.0 / 1.5, abs=1e-15)


def test_matrix_layouts():
    m = ha.homography_to_matrix(ha.HomographyParams())
    np.testing.assert_array_equal(m, np.eye(3))
    a = ha.affine_to_matrix(ha.AffineParams(2, 0, 0.5, 0, 2, 0))
    np.testing.assert_array_equal(a, [[2, 0, 0.5], [0, 2, 0]])


def test_concat_and_invert_round_trip():
    h = ha.concat_affine_perspective(
        ha.AffineParams(1, 0, 0.2, 0, 1, -0.1), ha.PerspectiveParams(0.05, 0.0)
    )
    inv = ha.invert_homography(h)
    pt = ha.apply_homography(inv, ha.apply_homography(h, ha.Point(0.3, -0.4)))
    assert pt.x == pytest.approx(0.3, abs=1e-9)
    assert pt.y == pytest.approx(-0.4, abs=1e-9)


def test_image_numpy_round_trip():
    rng = np.random.default_rng(0)
    arr = rng.random((16, 12, 3))
    img = ha.Image(arr)
    back = img.to_array()
    np.testing.assert_array_equal(arr, back)


def test_identity_warp_is_exact():
    img = ha.synthetic_texture(32, 32, 1, 7)
    warped = ha.warp_image(img, ha.HomographyParams())
    np.testing.assert_array_equal(img.to_array(), warped.to_array())


def test_zero_model_is_identity_and_pck_perfect():
    model = ha.make_zero_model(1, 4, 4)
    a = ha.synthetic_texture(32, 32, 1, 1)
    b = ha.synthetic_texture(32, 32, 1, 2)
    out = ha.infer_alignment(a, b, model)
    assert out.theta_en.to_list() == [1, 0, 0, 0, 1, 0, 0, 0]

    kp = ha.KeypointSet([ha.Point(0.1, 0.2), ha.Point(-0.4, 0.5)])
    cfg = ha.PckConfig()
    assert ha.pck(kp, out.theta_en, ha.HomographyParams(), cfg, 0.05) == 1.0


def test_grid_loss_hand_case():
    grid = ha.Grid.uniform(20)
    t = ha.HomographyParams(1, 0, 0.2, 0, 1, 0, 0, 0)
    assert ha.grid_loss(t, ha.HomographyParams(), grid) == pytest.approx(0.04, abs=1e-12)


def test_generate_pair_and_tiny_training(tmp_path):
    ranges = ha.TransformRanges()
    ranges.max_rotation_deg = 20
    ranges.max_shear_deg = 5
    ranges.max_perspective_deg = 3
    ranges.max_translation_px = 2
    ranges.image_size_px = 16

    pairs = []
    for i in range(4):
        src = ha.synthetic_texture(16, 16, 1, 100 + i)
        pairs.append(ha.generate_pair(src, ranges, ha.Rng(200 + i)))
    assert pairs[0].gt_homography.to_list()[:6] == pairs[0].gt_affine.to_list()

    cfg = ha.TrainConfig()
    cfg.stage = ha.Stage.Affine
    cfg.epochs = 2
    cfg.batch_size = 2
    cfg.seed = 5
    epochs_seen = []
    cfg.epoch_callback = lambda e, b: epochs_seen.append((e, b.total))
    model, report = ha.train(pairs, cfg)
    assert len(report.history) == 2 * report.steps_per_epoch
    assert [e for e, _ in epochs_seen] == [0, 1]

    path = str(tmp_path / "model.ckpt")
    ha.save_checkpoint(model, path)
    back = ha.load_checkpoint(path)
    assert ha.serialize_model(back) == ha.serialize_model(model)


def test_dataset_round_trip(tmp_path):
    ranges = ha.TransformRanges()
    ranges.max_rotation_deg = 10
    ranges.max_shear_deg = 2
    ranges.max_perspective_deg = 2
    ranges.max_translation_px = 1
    ranges.image_size_px = 16

    pairs = [
        ha.generate_pair(ha.synthetic_texture(16, 16, 1, i), ranges, ha.Rng(i))
        for i in range(3)
    ]
    ha.write_dataset(pairs, str(tmp_path / "ds"), 16, 9)
    ds = ha.read_dataset(str(tmp_path / "ds"))
    assert len(ds) == 3
    assert ds.seed == 9
    assert ds.records[1].gt.to_list() == pairs[1].gt_homography.to_list()
    loaded = ds.load_pair(0)
    assert loaded.source.h == 16


def test_evaluate_model_rows():
    model = ha.make_zero_model(1, 4, 4)
    ranges = ha.TransformRanges()
    ranges.max_rotation_deg = 0
    ranges.max_shear_deg = 0
    ranges.max_perspective_deg = 0
    ranges.max_translation_px = 0
    ranges.image_size_px = 32
    sources = [ha.synthetic_texture(32, 32, 1, 50 + i) for i in range(2)]
    records = ha.make_test_set(sources, ranges, 1.0, 20, ha.Rng(3))
    cfg = ha.PckConfig()
    cfg.h = cfg.w = 32
    rows = ha.evaluate_model(model, records, cfg)
    assert len(rows) == 12
    assert all(r.pck == 1.0 for r in rows)


def test_error_types_surface():
    with pytest.raises(ha.DegenerateDenominator):
        ha.apply_homography(ha.HomographyParams(1, 0, 0, 0, 1, 0, -1.0, 0), ha.Point(1, 0))
    with pytest.raises(ha.EmptyDataset):
        ha.train([], ha.TrainConfig())
