import numpy as np
import pytest
from scipy import ndimage

from deepskel import inference, net
from tests.test_net import randomized_model, tiny_config


@pytest.fixture(scope="module")
def model_and_image():
    model = randomized_model(tiny_config(), 20)
    image = np.random.default_rng(20).random((1, 24, 24))
    return model, image


class TestSkeletonMap:
    def test_complement_identity(self, model_and_image):
        model, image = model_and_image
        response = inference.predict_skeleton_map(model, image)
        probs = net.forward(model, image).fused_probs
        assert np.allclose(response, 1.0 - probs[0], atol=1e-12)
        assert np.allclose(response, probs[1:].sum(axis=0), atol=1e-6)

    def test_background_certainty_gives_zero(self):
        # a model whose fused background score dominates yields ~0 response
        model = randomized_model(tiny_config(), 21)
        model.params["fuse0"].kernels[:] = 50.0
        for k in (1, 2, 3):
            model.params[f"fuse{k}"].kernels[:] = 0.0
        image = np.random.default_rng(21).random((1, 16, 16))
        response = inference.predict_skeleton_map(model, image)
        assert np.all(response < 1e-6)

    def test_range(self, model_and_image):
        model, image = model_and_image
        response = inference.predict_skeleton_map(model, image)
        assert np.all((response >= 0) & (response <= 1))


class TestScaleMap:
    def test_hand_weighted_average(self):
        r = np.array([14.0, 40.0, 92.0])
        probs = np.array([0.1, 0.5, 0.3, 0.1])
        expected = 0.5 * 14 + 0.3 * 40 + 0.1 * 92
        assert np.isclose((r * probs[1:]).sum(), expected)
        assert np.isclose(expected, 28.2)

    def test_model_scale_bounded(self, model_and_image):
        model, image = model_and_image
        scale = inference.predict_scale_map(model, image)
        assert np.all(scale >= 0)
        assert np.all(scale <= model.schedule.r[-1])

    def test_one_hot_class(self):
        model = randomized_model(tiny_config(), 22)
        for name, big in (("side1", None), ("side2", 2), ("side3", 2)):
            p = model.params[name]
            p.kernels[:] = 0
            p.biases[:] = 0
            if big is not None:
                p.biases[big] = 60.0
            else:
                p.biases[1] = 60.0  # stage 1 can only say class 1
        for k in range(4):
            model.params[f"fuse{k}"].kernels[:] = 1.0 / len(
                model.params[f"fuse{k}"].kernels)
        image = np.random.default_rng(22).random((1, 16, 16))
        probs = net.forward(model, image).fused_probs
        assert probs.argmax(axis=0).max() >= 1

    def test_binary_model_has_no_scale(self):
        model = randomized_model(tiny_config(head_mode="binary"), 23)
        with pytest.raises(ValueError):
            inference.predict_scale_map(
                model, np.random.default_rng(23).random((1, 16, 16)))


class TestNmsThin:
    def test_all_zero(self):
        assert not inference.nms_thin(np.zeros((10, 10))).any()

    def test_thin_ridge_survives(self):
        resp = np.zeros((11, 20))
        resp[5, 2:18] = 1.0
        out = inference.nms_thin(resp)
        assert np.count_nonzero(out[5, 4:16]) >= 10
        assert not out[np.arange(11) != 5].any()

    def test_band_collapses_to_center(self):
        resp = np.zeros((11, 20))
        resp[4, :] = 0.5
        resp[5, :] = 1.0
        resp[6, :] = 0.5
        out = inference.nms_thin(resp)
        rows = set(np.argwhere(out > 0)[:, 0].tolist())
        assert rows == {5}

    def test_survivor_values_unchanged(self):
        rng = np.random.default_rng(24)
        resp = ndimage.gaussian_filter(rng.random((30, 30)), 2)
        out = inference.nms_thin(resp)
        on = out > 0
        assert np.array_equal(out[on], resp[on])

    def test_idempotent(self):
        rng = np.random.default_rng(25)
        for _ in range(5):
            resp = ndimage.gaussian_filter(rng.random((32, 32)), 2)
            once = inference.nms_thin(resp)
            assert np.array_equal(inference.nms_thin(once), once)

    def test_thin_cuts(self):
        resp = np.zeros((21, 21))
        resp[10, :] = 1.0
        out = inference.nms_thin(resp)
        widths = (out > 0).sum(axis=0)
        assert widths.max() <= 2


class TestSmoothAndThin:
    def test_zero_smooth_is_plain_nms(self):
        resp = ndimage.gaussian_filter(
            np.random.default_rng(27).random((24, 24)), 2)
        assert np.array_equal(inference.smooth_and_thin(resp, smooth=0.0),
                              inference.nms_thin(resp))

    def test_negative_smooth_rejected(self):
        with pytest.raises(ValueError):
            inference.smooth_and_thin(np.zeros((4, 4)), smooth=-1.0)

    def test_plateau_collapses_to_single_crest(self):
        # A flat-topped band keeps its whole plateau under raw-value NMS
        # (every tie survives) but a smoothed decision surface is unimodal
        # across the band, so only the central crest remains.
        resp = np.zeros((25, 25))
        resp[10:15, :] = 1.0
        raw_rows = {int(r) for r in np.argwhere(
            inference.nms_thin(resp) > 0)[:, 0]}
        smooth_rows = {int(r) for r in np.argwhere(
            inference.smooth_and_thin(resp, smooth=1.5) > 0)[:, 0]}
        assert raw_rows == {10, 11, 12, 13, 14}
        assert smooth_rows == {12}

    def test_survivors_carry_smoothed_values(self):
        resp = np.zeros((25, 25))
        resp[12, :] = 1.0
        smoothed = ndimage.gaussian_filter(resp, 1.5)
        out = inference.smooth_and_thin(resp, smooth=1.5)
        on = out > 0
        assert on.any()
        assert np.array_equal(out[on], smoothed[on])


class TestThreshold:
    def test_zero_keeps_positives(self):
        resp = np.array([[0.0, 0.4], [0.9, 0.0]])
        assert np.array_equal(inference.threshold(resp, 0.0), resp > 0)

    def test_one_gives_empty(self):
        assert not inference.threshold(np.random.default_rng(0).random((5, 5)),
                                       1.0).any()

    def test_monotone_in_threshold(self):
        resp = np.random.default_rng(26).random((8, 8))
        prev = inference.threshold(resp, 0.1)
        for t in (0.3, 0.5, 0.7, 0.9):
            cur = inference.threshold(resp, t)
            assert not (cur & ~prev).any()
            prev = cur
