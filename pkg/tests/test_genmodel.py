import numpy as np
import pytest

from genprior import genmodel


def straight_line_forward(dec, z):
    """Independent re-implementation of the layer chain (test oracle)."""
    h = np.array(z, dtype=float)
    for i, (w, b) in enumerate(dec.layers):
        h = w.dot(h) + b
        if i < len(dec.layers) - 1:
            if dec.activation == "tanh":
                h = np.tanh(h)
            elif dec.activation == "relu":
                h = np.where(h > 0, h, 0.0)
    return h


class TestConstruction:
    def test_mnist_scale_preset_dims(self):
        dec = genmodel.decoder_new(7, 20, [500, 500], 784, 3.0, "tanh", 1.0)
        assert dec.latent_dim == 20
        assert dec.ambient_dim == 784
        assert [w.shape for w, _ in dec.layers] == [(500, 20), (500, 500), (784, 500)]
        assert all(np.all(b == 0) for _, b in dec.layers)

    def test_identity_decoder_is_identity(self):
        dec = genmodel.identity_decoder(4, r=1.0)
        z = np.array([0.3, -0.1, 0.0, 0.0])
        assert np.array_equal(genmodel.forward(dec, z), z)

    def test_zero_weight_decoder_returns_bias_image(self):
        b_last = np.array([1.0, -2.0, 0.5])
        layers = ((np.zeros((2, 2)), np.zeros(2)), (np.zeros((3, 2)), b_last))
        dec = genmodel.GenerativeDecoder(2, 3, 1.0, layers, "tanh", 0, 1.0)
        assert np.array_equal(genmodel.forward(dec, np.array([5.0, -7.0])), b_last)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            genmodel.decoder_new(0, 0, [], 4, 1.0)
        with pytest.raises(ValueError):
            genmodel.decoder_new(0, 4, [], 2, 1.0)  # p < k
        with pytest.raises(ValueError):
            genmodel.decoder_new(0, 2, [-3], 4, 1.0)
        with pytest.raises(ValueError):
            genmodel.decoder_new(0, 2, [], 4, 0.0)  # r = 0
        with pytest.raises(ValueError):
            genmodel.decoder_new(0, 2, [], 4, 1.0, weight_scale=0.0)

    def test_empty_hidden_dims_allowed(self):
        dec = genmodel.decoder_new(0, 2, [], 6, 1.0)
        assert len(dec.layers) == 1

    def test_determinism_bit_identical_weights(self):
        a = genmodel.decoder_new(123, 3, [7], 11, 2.0)
        b = genmodel.decoder_new(123, 3, [7], 11, 2.0)
        for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
            assert np.array_equal(wa, wb) and np.array_equal(ba, bb)


class TestForward:
    def test_matches_independent_chain(self):
        dec = genmodel.decoder_new(3, 2, [8], 16, 1.0, "tanh", 1.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            z = rng.standard_normal(2)
            diff = genmodel.forward(dec, z) - straight_line_forward(dec, z)
            assert np.max(np.abs(diff)) <= 1e-12

    def test_relu_matches_independent_chain(self):
        dec = genmodel.decoder_new(5, 3, [6, 6], 10, 1.0, "relu", 1.0)
        rng = np.random.default_rng(1)
        for _ in range(20):
            z = rng.standard_normal(3)
            diff = genmodel.forward(dec, z) - straight_line_forward(dec, z)
            assert np.max(np.abs(diff)) <= 1e-12

    def test_dimension_mismatch(self):
        dec = genmodel.decoder_new(0, 2, [], 4, 1.0)
        with pytest.raises(ValueError):
            genmodel.forward(dec, np.zeros(3))

    def test_out_of_ball_still_evaluates(self):
        dec = genmodel.identity_decoder(2, r=1.0)
        z = np.array([5.0, 0.0])
        assert genmodel.out_of_ball(dec, z)
        assert np.array_equal(genmodel.forward(dec, z), z)

    def test_pairwise_lipschitz(self):
        dec = genmodel.decoder_new(11, 4, [12], 20, 2.0, "tanh", 1.0)
        lip = genmodel.lipschitz_bound(dec)
        rng = np.random.default_rng(2)
        for _ in range(1000):
            z1 = genmodel.sample_latent(dec, rng.integers(2 ** 63), inset=1.0)
            z2 = genmodel.sample_latent(dec, rng.integers(2 ** 63), inset=1.0)
            lhs = np.linalg.norm(genmodel.forward(dec, z1) - genmodel.forward(dec, z2))
            assert lhs <= lip * np.linalg.norm(z1 - z2) + 1e-12


class TestVjp:
    def test_linear_decoder_gives_wt_v(self):
        dec = genmodel.decoder_new(0, 3, [], 8, 1.0, "identity", 1.0)
        w = dec.layers[0][0]
        rng = np.random.default_rng(3)
        for _ in range(10):
            z = rng.standard_normal(3)
            v = rng.standard_normal(8)
            assert np.allclose(genmodel.vjp(dec, z, v), w.T @ v, atol=1e-14)

    def test_zero_cotangent(self):
        dec = genmodel.decoder_new(4, 2, [5], 7, 1.0)
        assert np.array_equal(genmodel.vjp(dec, np.ones(2), np.zeros(7)),
                              np.zeros(2))

    def test_finite_difference_oracle(self):
        dec = genmodel.decoder_new(9, 3, [10], 12, 1.0, "tanh", 1.0)
        rng = np.random.default_rng(4)
        h = 1e-5
        for _ in range(10):
            z = rng.standard_normal(3) * 0.5
            v = rng.standard_normal(12)
            g = genmodel.vjp(dec, z, v)
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                fd = (genmodel.forward(dec, z + e) - genmodel.forward(dec, z - e)) @ v / (2 * h)
                assert abs(fd - g[j]) <= 1e-4 * max(abs(g[j]), 1e-8)

    def test_vjp_jvp_duality(self):
        dec = genmodel.decoder_new(10, 4, [9], 15, 1.0, "tanh", 1.0)
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(20):
            z = rng.standard_normal(4) * 0.5
            u = rng.standard_normal(4)
            v = rng.standard_normal(15)
            jvp = (genmodel.forward(dec, z + h * u) - genmodel.forward(dec, z - h * u)) / (2 * h)
            lhs = float(jvp @ v)
            rhs = float(u @ genmodel.vjp(dec, z, v))
            assert abs(lhs - rhs) <= 1e-4 * max(abs(rhs), 1e-8)

    def test_dimension_mismatch(self):
        dec = genmodel.decoder_new(0, 2, [], 4, 1.0)
        with pytest.raises(ValueError):
            genmodel.vjp(dec, np.zeros(2), np.zeros(3))


class TestLipschitzBound:
    def test_orthonormal_single_layer_is_one(self):
        dec = genmodel.orthonormal_linear_decoder(6, 4, 12, 1.0)
        assert abs(genmodel.lipschitz_bound(dec) - 1.0) <= 1e-6

    def test_scaled_identity_is_two(self):
        layers = ((2.0 * np.eye(5), np.zeros(5)),)
        dec = genmodel.GenerativeDecoder(5, 5, 1.0, layers, "identity", 0, 1.0)
        object.__setattr__(dec, "lipschitz", genmodel._lipschitz_product(dec))
        assert abs(genmodel.lipschitz_bound(dec) - 2.0) <= 1e-6

    def test_matches_dense_svd_product(self):
        dec = genmodel.decoder_new(13, 4, [16, 24], 32, 1.0, "tanh", 1.0)
        expected = 1.0
        for w, _ in dec.layers:
            expected *= np.linalg.svd(w, compute_uv=False)[0]
        got = genmodel.lipschitz_bound(dec)
        assert abs(got - expected) <= 1e-6 * expected


class TestSampleLatent:
    def test_scalar_case_interval(self):
        dec = genmodel.identity_decoder(1, r=1.0)
        for seed in range(50):
            z = genmodel.sample_latent(dec, seed)
            assert -0.9 <= z[0] <= 0.9

    def test_norm_within_inset_radius(self):
        dec = genmodel.decoder_new(0, 6, [], 8, 2.5)
        for seed in range(200):
            z = genmodel.sample_latent(dec, seed)
            assert np.linalg.norm(z) <= 0.9 * 2.5 + 1e-12

    def test_monte_carlo_mean_near_origin(self):
        dec = genmodel.identity_decoder(2, r=1.0)
        zs = np.array([genmodel.sample_latent(dec, s) for s in range(10_000)])
        assert np.linalg.norm(zs.mean(axis=0)) <= 0.05


class TestSerialization:
    def test_round_trip(self):
        dec = genmodel.decoder_new(21, 5, [9, 7], 16, 2.0, "relu", 0.7)
        doc = genmodel.decoder_to_json(dec)
        back = genmodel.decoder_from_json(doc)
        for (wa, ba), (wb, bb) in zip(dec.layers, back.layers):
            assert np.array_equal(wa, wb) and np.array_equal(ba, bb)
        assert back.activation == "relu"
        assert back.lipschitz == dec.lipschitz

    def test_orthonormal_round_trip(self):
        dec = genmodel.orthonormal_linear_decoder(5, 3, 10, 1.5)
        back = genmodel.decoder_from_json(genmodel.decoder_to_json(dec))
        assert np.array_equal(dec.layers[0][0], back.layers[0][0])

    def test_weights_not_stored(self):
        doc = genmodel.decoder_to_json(genmodel.decoder_new(0, 2, [3], 4, 1.0))
        assert "layers" not in doc and "weights" not in doc
