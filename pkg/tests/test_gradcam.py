import numpy as np
import pytest

import winsorcam as wc
from winsorcam.gradcam import all_layer_gradcams, layer_gradcam


class TestLayerGradCam:
    def test_zero_gradients_zero_map(self):
        act = np.random.default_rng(0).uniform(size=(3, 4, 4))
        cam = layer_gradcam(act, np.zeros_like(act))
        assert (cam.alpha == 0.0).all()
        assert (cam.map == 0.0).all()

    def test_hand_example_with_relu_clamp(self):
        act = np.array([[[1.0, -1.0], [2.0, 0.0]]])
        grad = np.ones((1, 2, 2))
        cam = layer_gradcam(act, grad)
        assert (cam.alpha == [1.0]).all()
        assert (cam.map == [[1.0, 0.0], [2.0, 0.0]]).all()

    def test_positive_homogeneity_in_gradients(self):
        rng = np.random.default_rng(4)
        act = rng.normal(size=(5, 6, 6))
        grad = rng.normal(size=(5, 6, 6))
        base = layer_gradcam(act, grad)
        scaled = layer_gradcam(act, 3.0 * grad)
        np.testing.assert_allclose(scaled.alpha, 3.0 * base.alpha, rtol=1e-12)
        np.testing.assert_allclose(scaled.map, 3.0 * base.map, rtol=1e-12, atol=1e-15)

    def test_alpha_invariant_under_spatial_permutation(self):
        """Compensated summation makes the spatial mean order-independent bit-for-bit."""
        rng = np.random.default_rng(8)
        act = rng.normal(size=(2, 5, 5))
        grad = rng.normal(size=(2, 5, 5))
        perm = rng.permutation(25)
        grad_perm = grad.reshape(2, 25)[:, perm].reshape(2, 5, 5)
        assert (layer_gradcam(act, grad).alpha == layer_gradcam(act, grad_perm).alpha).all()

    def test_alpha_additive_in_gradients(self):
        rng = np.random.default_rng(9)
        act = rng.normal(size=(3, 4, 4))
        g1, g2 = rng.normal(size=(3, 4, 4)), rng.normal(size=(3, 4, 4))
        lhs = layer_gradcam(act, g1 + g2).alpha
        rhs = layer_gradcam(act, g1).alpha + layer_gradcam(act, g2).alpha
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-15)

    def test_map_nonnegative(self):
        rng = np.random.default_rng(10)
        cam = layer_gradcam(rng.normal(size=(4, 7, 7)), rng.normal(size=(4, 7, 7)))
        assert cam.map.min() >= 0.0

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            layer_gradcam(np.zeros((2, 3, 3)), np.zeros((2, 4, 3)))


class TestAllLayerGradCams:
    def test_one_cam_per_layer_in_order(self, fixture_run):
        cams = all_layer_gradcams(fixture_run, 0)
        assert len(cams) == 3
        assert [c.layer_index for c in cams] == [0, 1, 2]
        assert [c.layer_name for c in cams] == ["conv1", "conv2", "conv3"]
        for cam, act in zip(cams, fixture_run.trace.activations):
            assert cam.map.shape == act.shape[1:]
            assert cam.alpha.shape == (act.shape[0],)

    def test_final_element_is_last_layer_gradcam(self, fixture_run):
        cams = all_layer_gradcams(fixture_run, 0)
        acts = fixture_run.trace.activations
        grads = wc.backward_to_activations(fixture_run.model, fixture_run.trace, 0)
        direct = layer_gradcam(acts[-1], grads[-1])
        assert (cams[-1].alpha == direct.alpha).all()
        assert (cams[-1].map == direct.map).all()

    def test_fixture_has_a_nonzero_map(self, fixture_cams):
        assert any(cam.map.max() > 0 for cam in fixture_cams)

    def test_zero_gradient_layers_are_kept(self):
        """Layers with vanishing gradients stay in the list with a zero map."""
        model, image, _ = wc.make_synthetic_fixture(3)
        model.dense_weight[1] = 0.0  # class 1 sees nothing
        cams = all_layer_gradcams(wc.run(model, image), 1)
        assert len(cams) == model.num_conv_layers
        assert all((cam.map == 0.0).all() for cam in cams)
