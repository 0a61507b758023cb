import numpy as np
import pytest
from conftest import FakeGroup, FakePoint, FakeResult, full_result

from signflow_capture.keypoints import FEATURE_DIM, extract_keypoints


class TestExtractKeypoints:
    def test_always_1662(self):
        for seed in range(5):
            assert extract_keypoints(full_result(seed)).shape == (1662,)
        assert FEATURE_DIM == 1662

    def test_no_hands_zero_fills_hand_blocks(self):
        out = extract_keypoints(full_result(drop=("left_hand", "right_hand")))
        assert not out[1536:1662].any()
        assert out[:1536].any()

    def test_everything_absent_is_all_zeros(self):
        out = extract_keypoints(FakeResult())
        assert out.shape == (1662,)
        assert not out.any()

    def test_block_offsets(self):
        pose = FakeGroup([FakePoint(0.1, 0.2, 0.3, 0.9)] + [FakePoint(0, 0, 0, 0)] * 32)
        face = FakeGroup([FakePoint(0.4, 0.5, 0.6)] + [FakePoint(0, 0, 0)] * 467)
        left = FakeGroup([FakePoint(0.7, 0.8, 0.9)] + [FakePoint(0, 0, 0)] * 20)
        right = FakeGroup([FakePoint(-0.1, -0.2, -0.3)] + [FakePoint(0, 0, 0)] * 20)
        out = extract_keypoints(FakeResult(pose=pose, face=face, left_hand=left, right_hand=right))
        np.testing.assert_allclose(out[0:4], np.float32([0.1, 0.2, 0.3, 0.9]))
        np.testing.assert_allclose(out[132:135], np.float32([0.4, 0.5, 0.6]))
        np.testing.assert_allclose(out[1536:1539], np.float32([0.7, 0.8, 0.9]))
        np.testing.assert_allclose(out[1599:1602], np.float32([-0.1, -0.2, -0.3]))

    def test_wrong_point_count_rejected(self):
        bad_pose = FakeGroup([FakePoint(0, 0, 0, 0)] * 32)
        with pytest.raises(ValueError, match="32 points"):
            extract_keypoints(FakeResult(pose=bad_pose))

    def test_float32_output(self):
        assert extract_keypoints(full_result()).dtype == np.float32
