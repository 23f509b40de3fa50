import numpy as np
import pytest

from entrogru.detect.boxes import (check_boxes, decode_boxes, encode_boxes,
                                   grid_anchors, iou, iou_matrix, match_anchors,
                                   nms)

from reference import iou_reference, nms_reference


class TestIou:
    def test_identical_and_disjoint(self):
        a = [0, 0, 2, 2]
        assert iou(a, a) == 1.0
        assert iou(a, [5, 5, 7, 7]) == 0.0

    def test_partial_overlap_third(self):
        assert iou([0, 0, 2, 2], [1, 0, 3, 2]) == pytest.approx(1 / 3)

    def test_matches_reference(self, rng):
        boxes = np.sort(rng.uniform(0, 10, size=(12, 2, 2)), axis=1)
        boxes = boxes.transpose(0, 2, 1).reshape(12, 4)
        boxes = boxes[:, [0, 2, 1, 3]] + [0, 0, 0.1, 0.1]
        mat = iou_matrix(boxes, boxes)
        for i in range(12):
            for j in range(12):
                assert mat[i, j] == pytest.approx(iou_reference(boxes[i], boxes[j]))

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            check_boxes([[1, 1, 1, 2]])


class TestNms:
    def test_matches_quadratic_reference(self, rng):
        for _ in range(5):
            centers = rng.uniform(2, 8, size=(20, 2))
            sizes = rng.uniform(1, 3, size=(20, 2))
            boxes = np.concatenate([centers - sizes / 2, centers + sizes / 2], axis=1)
            scores = rng.uniform(0, 1, size=20)
            assert nms(boxes, scores, 0.5) == nms_reference(boxes, scores, 0.5)

    def test_output_subset_no_high_overlap(self, rng):
        boxes = rng.uniform(0, 8, size=(15, 2))
        boxes = np.concatenate([boxes, boxes + rng.uniform(1, 3, size=(15, 2))], axis=1)
        scores = rng.uniform(0, 1, size=15)
        keep = nms(boxes, scores, 0.4)
        assert set(keep) <= set(range(15))
        for i, a in enumerate(keep):
            for b in keep[i + 1:]:
                assert iou(boxes[a], boxes[b]) <= 0.4


class TestEncodeDecode:
    def test_roundtrip(self, rng):
        anchors = grid_anchors(64, 4, (0.3, 0.5), (1.0, 2.0))
        gt = np.array([[10.0, 12.0, 30.0, 28.0]] * len(anchors))
        np.testing.assert_allclose(decode_boxes(anchors, encode_boxes(anchors, gt)),
                                   gt, rtol=1e-9, atol=1e-9)

    def test_zero_offsets_give_anchor(self):
        anchors = grid_anchors(64, 2, (0.5,), (1.0,))
        np.testing.assert_allclose(decode_boxes(anchors, np.zeros((len(anchors), 4))),
                                   anchors)


class TestAnchors:
    def test_grid_count_and_order(self):
        anchors = grid_anchors(64, 4, (0.3, 0.5), (1.0, 2.0))
        assert anchors.shape == (4 * 4 * 4, 4)
        # first cell centre is at half a stride
        cx = (anchors[0, 0] + anchors[0, 2]) / 2
        assert cx == pytest.approx(8.0)

    def test_ratio_shapes(self):
        anchors = grid_anchors(64, 1, (0.5,), (1.0, 2.0))
        w0 = anchors[0, 2] - anchors[0, 0]
        h0 = anchors[0, 3] - anchors[0, 1]
        w1 = anchors[1, 2] - anchors[1, 0]
        h1 = anchors[1, 3] - anchors[1, 1]
        assert w0 == pytest.approx(h0)
        assert w1 / h1 == pytest.approx(2.0)


class TestMatchAnchors:
    def test_every_gt_gets_an_anchor(self, rng):
        anchors = grid_anchors(64, 4, (0.3, 0.5), (1.0, 2.0))
        gt = np.array([[5.0, 5.0, 20.0, 20.0], [40.0, 40.0, 60.0, 62.0]])
        labels, loc_t = match_anchors(anchors, gt, [0, 2])
        assert (labels == 1).any() and (labels == 3).any()

    def test_high_iou_anchors_positive(self):
        anchors = grid_anchors(64, 4, (0.3,), (1.0,))
        gt = anchors[5:6] + 0.5  # nearly identical to anchor 5
        labels, _ = match_anchors(anchors, gt, [1])
        assert labels[5] == 2

    def test_empty_gt_all_background(self):
        anchors = grid_anchors(64, 2, (0.5,), (1.0,))
        labels, loc_t = match_anchors(anchors, np.zeros((0, 4)), [])
        assert not labels.any() and not loc_t.any()

    def test_targets_decode_back_to_gt(self):
        anchors = grid_anchors(64, 4, (0.3, 0.5), (1.0, 2.0))
        gt = np.array([[18.0, 20.0, 42.0, 44.0]])
        labels, loc_t = match_anchors(anchors, gt, [1])
        pos = labels > 0
        decoded = decode_boxes(anchors[pos], loc_t[pos])
        np.testing.assert_allclose(decoded, np.broadcast_to(gt, decoded.shape),
                                   rtol=1e-9, atol=1e-9)
