import numpy as np
import pytest

from entrogru.detect.data import generate_dataset
from entrogru.detect.model import (ATTACH_POINTS, BackboneConfig, ToyDetector,
                                   build_pipeline, entropy_fields,
                                   frames_to_tensor, load_model, save_model)


@pytest.fixture
def cfg():
    return BackboneConfig(image_size=32, num_classes=3)


class TestBuild:
    def test_frame_wise_baseline(self, cfg):
        model = build_pipeline(cfg, None, None, seed=0)
        assert model.gru_placement is None and model.ie_placement is None
        x = frames_to_tensor(np.zeros((2, 32, 32, 3), dtype=np.uint8))
        loc, cls_, hidden = model.forward_frame(x, None)
        n = len(model.anchors)
        assert loc.shape == (2, n, 4)
        assert cls_.shape == (2, n, 4)
        assert hidden is None

    def test_unknown_placement_lists_names(self, cfg):
        with pytest.raises(ValueError) as err:
            build_pipeline(cfg, "stage-9", None)
        for name in ATTACH_POINTS:
            assert name in str(err.value)

    def test_gru_hidden_matches_stage_shape(self, cfg):
        model = build_pipeline(cfg, "stage-4", None, seed=0)
        h = model.initial_hidden(3)
        assert h.shape == (3, model.point_channels["stage-4"],
                           model.point_sizes["stage-4"], model.point_sizes["stage-4"])
        x = frames_to_tensor(np.zeros((3, 32, 32, 3), dtype=np.uint8))
        _, _, h2 = model.forward_frame(x, h)
        assert h2.shape == h.shape

    def test_feature_sizes_halve(self, cfg):
        model = build_pipeline(cfg, None, None)
        assert [model.point_sizes[p] for p in ATTACH_POINTS] == [16, 8, 4, 2, 1, 1]

    def test_none_string_accepted(self, cfg):
        model = build_pipeline(cfg, "none", "None")
        assert model.gru_placement is None and model.ie_placement is None


class TestForward:
    def test_clip_deterministic(self, cfg):
        seq = generate_dataset(3, 1, image_size=32, seq_len=10)[0]
        preds_a = build_pipeline(cfg, "stage-4", "stage-4", seed=5).infer_sequence(seq)
        preds_b = build_pipeline(cfg, "stage-4", "stage-4", seed=5).infer_sequence(seq)
        assert len(preds_a) == 10
        for (la, ca), (lb, cb) in zip(preds_a, preds_b):
            np.testing.assert_array_equal(la, lb)
            np.testing.assert_array_equal(ca, cb)

    def test_hidden_state_carries_information(self, cfg):
        seq = generate_dataset(4, 1, image_size=32, seq_len=3)[0]
        model = build_pipeline(cfg, "stage-3", None, seed=2)
        frames = [frames_to_tensor(seq.frames[t:t + 1]) for t in range(3)]
        h0 = model.initial_hidden(1)
        _, _, h1 = model.forward_frame(frames[0], h0)
        assert (h1.data != 0).any()
        # same frame, different hidden -> different output
        loc_a, _, _ = model.forward_frame(frames[1], h0)
        loc_b, _, _ = model.forward_frame(frames[1], h1)
        assert (loc_a.data != loc_b.data).any()

    def test_ie_requires_field(self, cfg):
        model = build_pipeline(cfg, None, "stage-3", seed=1)
        x = frames_to_tensor(np.zeros((1, 32, 32, 3), dtype=np.uint8))
        with pytest.raises(ValueError, match="entropy"):
            model.forward_frame(x, None)

    def test_entropy_fields_shape(self):
        frames = generate_dataset(5, 1, image_size=32, seq_len=2)[0].frames
        fields = entropy_fields(frames)
        assert fields.shape == (2, 32, 32)
        assert fields.min() >= 0.0

    def test_attention_changes_features(self, cfg):
        seq = generate_dataset(6, 1, image_size=32, seq_len=1)[0]
        with_ie = build_pipeline(cfg, None, "stage-4", seed=3).infer_sequence(seq)
        without = build_pipeline(cfg, None, None, seed=3).infer_sequence(seq)
        assert (with_ie[0][1] != without[0][1]).any()


class TestSerialisation:
    def test_roundtrip_predictions_identical(self, cfg, tmp_path):
        model = build_pipeline(cfg, "stage-4", "stage-4", seed=9)
        seq = generate_dataset(8, 1, image_size=32, seq_len=4)[0]
        before = model.infer_sequence(seq)
        save_model(tmp_path / "m", model)
        loaded = load_model(tmp_path / "m")
        after = loaded.infer_sequence(seq)
        for (la, ca), (lb, cb) in zip(before, after):
            np.testing.assert_array_equal(la, lb)
            np.testing.assert_array_equal(ca, cb)

    def test_param_names_stable(self, cfg):
        model = build_pipeline(cfg, "stage-4", None, seed=0)
        names = set(model.named_params())
        assert "backbone/stage-1/kernel" in names
        assert "head/stage-3/loc/kernel" in names
        assert "gru/z/reduce" in names

    def test_num_params_positive_and_counts_gru(self, cfg):
        base = build_pipeline(cfg, None, None, seed=0).num_params()
        with_gru = build_pipeline(cfg, "stage-4", None, seed=0).num_params()
        assert with_gru > base
