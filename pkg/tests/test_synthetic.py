import numpy as np
import pytest
from scipy.spatial.transform import Rotation

import posemfa as pm
from posemfa.errors import DegenerateConfiguration, SingularCovariance
from posemfa.synthetic import dense_gaussian_oracle, kabsch_oracle


class TestChainSpecValidation:
    def test_joint_count_mismatch(self):
        with pytest.raises(ValueError):
            pm.ChainSpec(parts=[((1, 1, 1), 16)] * 2, joints=[], n_poses=2)

    def test_too_few_vertices(self):
        with pytest.raises(ValueError):
            pm.ChainSpec(parts=[((1, 1, 1), 8)], joints=[], n_poses=2)

    def test_angle_count_mismatch(self):
        with pytest.raises(ValueError):
            pm.ChainSpec(parts=[((1, 1, 1), 16)] * 2,
                         joints=[((0, 0, 1), [0.1])], n_poses=2)


class TestGenerateChain:
    def test_noiseless_forward_model_identity(self):
        spec = pm.default_chain_spec(noise_sigma=0.0)
        tset, truth = pm.generate_chain(spec)
        for i, mesh in enumerate(tset.shapes):
            for k in range(len(spec.parts)):
                sel = truth.labels == k
                expected = (truth.reference[sel] @ truth.rotations[k, i].T
                            + truth.translations[k, i])
                np.testing.assert_allclose(mesh.vertices[sel], expected,
                                           atol=1e-12)

    def test_first_pose_is_rest_pose(self):
        tset, truth = pm.generate_chain(pm.default_chain_spec(noise_sigma=0.0))
        np.testing.assert_allclose(tset.shapes[0].vertices, truth.reference,
                                   atol=1e-12)

    def test_noise_rms_matches_sigma(self):
        sigma = 1e-2
        clean, truth = pm.generate_chain(pm.default_chain_spec(noise_sigma=0.0))
        noisy, _ = pm.generate_chain(pm.default_chain_spec(noise_sigma=sigma))
        diff = np.stack([n.vertices - c.vertices
                         for n, c in zip(noisy.shapes, clean.shapes)])
        rms = float(np.sqrt(np.mean(np.sum(diff**2, axis=-1))))
        assert rms == pytest.approx(sigma * np.sqrt(3.0), rel=0.1)

    def test_determinism_per_seed(self):
        a, _ = pm.generate_chain(pm.default_chain_spec(rng_seed=7))
        b, _ = pm.generate_chain(pm.default_chain_spec(rng_seed=7))
        for ma, mb in zip(a.shapes, b.shapes):
            np.testing.assert_array_equal(ma.vertices, mb.vertices)

    def test_weld_triangles_span_parts(self):
        tset, truth = pm.generate_chain(pm.default_chain_spec())
        spans = truth.labels[tset.triangles]
        n_boundary = np.sum(spans.max(axis=1) != spans.min(axis=1))
        assert n_boundary == 2 * 16  # 16 weld triangles per joint

    def test_rotations_are_proper(self):
        _, truth = pm.generate_chain(pm.default_chain_spec())
        flat = truth.rotations.reshape(-1, 3, 3)
        for R in flat:
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0)


class TestKabschOracle:
    def test_recovers_known_transform(self):
        rng = np.random.default_rng(0)
        P = rng.normal(size=(10, 3))
        R_true = Rotation.random(random_state=rng).as_matrix()
        t_true = rng.normal(size=3)
        R, t, rms = kabsch_oracle(P, P @ R_true.T + t_true)
        np.testing.assert_allclose(R, R_true, atol=1e-10)
        np.testing.assert_allclose(t, t_true, atol=1e-10)
        assert rms <= 1e-10

    def test_mirrored_points_get_proper_rotation(self):
        rng = np.random.default_rng(1)
        P = rng.normal(size=(10, 3))
        Q = P * np.array([1.0, 1.0, -1.0])  # reflection
        R, _, _ = kabsch_oracle(P, Q)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)

    def test_collinear_points_degenerate(self):
        P = np.outer(np.arange(5.0), [1.0, 0.0, 0.0])
        with pytest.raises(DegenerateConfiguration):
            kabsch_oracle(P, P)

    def test_too_few_points(self):
        with pytest.raises(DegenerateConfiguration):
            kabsch_oracle(np.zeros((2, 3)), np.zeros((2, 3)))


class TestDenseGaussianOracle:
    def test_zero_loading_is_plain_gaussian(self):
        rng = np.random.default_rng(2)
        h = rng.normal(size=6)
        b = rng.normal(size=6)
        phi = rng.uniform(0.5, 2.0, 6)
        logp, mean, cov = dense_gaussian_oracle(h, b, np.zeros((6, 3)), phi)
        direct = -0.5 * np.sum(np.log(2 * np.pi * phi) + (h - b) ** 2 / phi)
        assert logp == pytest.approx(direct, abs=1e-12)
        np.testing.assert_allclose(mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(cov, np.eye(3), atol=1e-12)

    def test_singular_covariance_rejected(self):
        with pytest.raises(SingularCovariance):
            dense_gaussian_oracle(np.zeros(3), np.zeros(3),
                                  np.zeros((3, 3)), np.zeros(3))
