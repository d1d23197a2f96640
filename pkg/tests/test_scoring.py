"""Scoring path: precision matrices, Mahalanobis distances, map assembly.

Oracle is the direct dense computation: explicit np.linalg.inv of the
ridged covariance and a per-patch loop over sqrt((x-c) P (x-c)).
"""

import numpy as np
import pytest

from kng.errors import NumericError, ValidationError
from kng.model import KngConfig, KngModel, init_model, online_update
from kng.scoring import (
    ScoreConfig,
    gaussian_kernel,
    image_score,
    mahalanobis,
    precision,
    score_map,
)
from kng.kernels import bilinear_resize, gaussian_blur_2d
from kng.tensor_io import make_selection


def trained_model(seed=0, k=5, dim=4, spread=4.0):
    r = np.random.default_rng(seed)
    x = r.normal(size=(60 * k, dim)) + spread * np.repeat(
        r.normal(size=(k, dim)), 60, axis=0)
    return init_model([x.reshape(1, *x.shape)], KngConfig(k=k, dim=dim, epochs=3,
                                                          seed=seed)), x


def dense_score_map(model, t, cfg):
    """Naive oracle: per-patch nearest center by euclidean distance, dense
    inverse, explicit loops, then the same resize+blur kernels."""
    h, w, d = t.shape
    x = t.reshape(-1, d).astype(np.float64)
    eps = model.config.epsilon
    precs = [np.linalg.inv(model.covs[i] + eps * np.eye(d))
             for i in range(model.config.k)]
    out = np.empty(len(x))
    for n, row in enumerate(x):
        dists = ((model.centers - row) ** 2).sum(axis=1)
        i = int(np.argmin(dists))
        diff = row - model.centers[i]
        out[n] = np.sqrt(max(diff @ precs[i] @ diff, 0.0))
    m = out.reshape(h, w)
    if cfg.target_size is not None and tuple(cfg.target_size) != (h, w):
        m = bilinear_resize(m, *cfg.target_size)
    return gaussian_blur_2d(m, gaussian_kernel(cfg.sigma))


class TestPrecision:
    def test_inverse_of_ridged_covariance(self):
        model, _ = trained_model(seed=1)
        eps = model.config.epsilon
        for i in range(model.config.k):
            p = precision(model, i)
            want = np.linalg.inv(model.covs[i] + eps * np.eye(4))
            np.testing.assert_allclose(p, want, rtol=1e-8, atol=1e-10)
            np.testing.assert_array_equal(p, p.T)

    def test_cache_invalidation_on_update(self):
        model, x = trained_model(seed=2)
        p0 = precision(model, 0)
        assert precision(model, 0) is p0  # cached object
        # a patch sitting exactly on center 0 is always accepted there
        online_update(model, [model.centers[0].reshape(1, 1, 4)])
        p1 = precision(model, 0)
        assert p1 is not p0

    def test_zero_covariance_gives_scaled_identity(self):
        cfg = KngConfig(k=2, dim=3, epsilon=0.5)
        model = KngModel(cfg, make_selection(3, 3, 0))
        p = precision(model, 0)
        np.testing.assert_allclose(p, np.eye(3) / 0.5, rtol=1e-12)

    def test_ridge_escalates_then_fails(self):
        cfg = KngConfig(k=2, dim=2, epsilon=1.0)
        model = KngModel(cfg, make_selection(2, 2, 0))
        # a covariance so negative the escalating ridge cannot rescue it
        model.covs[0] = np.array([[-1e9, 0.0], [0.0, -1e9]])
        with pytest.raises(NumericError, match="neuron 0"):
            precision(model, 0)

    def test_escalation_recovers_mildly_indefinite(self):
        cfg = KngConfig(k=2, dim=2, epsilon=0.01)
        model = KngModel(cfg, make_selection(2, 2, 0))
        model.covs[0] = np.array([[-0.05, 0.0], [0.0, -0.05]])  # needs eps=0.1
        p = precision(model, 0)
        np.testing.assert_allclose(p, np.linalg.inv(
            model.covs[0] + 0.1 * np.eye(2)), rtol=1e-10)


class TestMahalanobis:
    def test_matches_dense_oracle(self):
        model, x = trained_model(seed=3)
        pts = x[:40]
        eps = model.config.epsilon
        for i in (0, 2, 4):
            got = mahalanobis(model, i, pts)
            p = np.linalg.inv(model.covs[i] + eps * np.eye(4))
            want = np.sqrt(np.einsum(
                "nd,de,ne->n", pts - model.centers[i], p, pts - model.centers[i]))
            np.testing.assert_allclose(got, want, rtol=1e-7, atol=1e-9)

    def test_zero_at_center(self):
        model, _ = trained_model(seed=4)
        d = mahalanobis(model, 1, model.centers[1:2])
        assert d[0] == 0.0

    def test_shape_validation(self):
        model, _ = trained_model()
        with pytest.raises(ValidationError):
            mahalanobis(model, 0, np.zeros((3, 7)))


class TestGaussianKernel:
    def test_normalized_and_symmetric(self):
        for sigma in (0.5, 1.0, 4.0):
            k = gaussian_kernel(sigma)
            assert len(k) == 2 * int(np.ceil(4 * sigma)) + 1
            assert k.sum() == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(k, k[::-1])

    def test_sigma_zero_is_identity_tap(self):
        np.testing.assert_array_equal(gaussian_kernel(0.0), [1.0])


class TestScoreMap:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_oracle(self, seed):
        model, x = trained_model(seed=seed)
        t = x[:48].reshape(6, 8, 4)
        for cfg in (ScoreConfig(sigma=0.0), ScoreConfig(sigma=1.5),
                    ScoreConfig(sigma=1.0, target_size=(12, 16))):
            got = score_map(model, t, cfg)
            want = dense_score_map(model, t, cfg)
            assert got.shape == want.shape
            np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-9)

    def test_exact_centers_score_zero(self):
        model, _ = trained_model(seed=6, k=4)
        # a tensor whose patches all sit exactly on centers, sigma 0
        t = model.centers[[0, 1, 2, 3]].reshape(2, 2, 4)
        m = score_map(model, t, ScoreConfig(sigma=0.0))
        np.testing.assert_array_equal(m, np.zeros((2, 2)))

    def test_default_config_smooths(self):
        model, x = trained_model(seed=7)
        t = x[:48].reshape(6, 8, 4)
        rough = score_map(model, t, ScoreConfig(sigma=0.0))
        smooth = score_map(model, t)  # default sigma=4.0
        assert smooth.std() < rough.std()

    def test_target_size_resizes(self):
        model, x = trained_model(seed=8)
        t = x[:24].reshape(4, 6, 4)
        m = score_map(model, t, ScoreConfig(sigma=0.0, target_size=(20, 30)))
        assert m.shape == (20, 30)

    def test_untrained_refuses(self):
        from kng.errors import StateError
        model = KngModel(KngConfig(k=2, dim=2), make_selection(2, 2, 0))
        with pytest.raises(StateError):
            score_map(model, np.zeros((2, 2, 2)))

    def test_validates_tensor(self):
        model, _ = trained_model()
        with pytest.raises(ValidationError):
            score_map(model, np.zeros((2, 2, 9)))
        with pytest.raises(ValidationError):
            score_map(model, np.full((2, 2, 4), np.nan))

    def test_scores_nonnegative(self):
        model, x = trained_model(seed=9)
        m = score_map(model, x[:48].reshape(6, 8, 4), ScoreConfig(sigma=2.0))
        assert np.all(m >= 0.0)


class TestScoreConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            ScoreConfig(sigma=-1.0)
        with pytest.raises(ValidationError):
            ScoreConfig(sigma=float("nan"))
        with pytest.raises(ValidationError):
            ScoreConfig(target_size=(0, 5))
        assert ScoreConfig(sigma=0.0).target_size is None


class TestImageScore:
    def test_is_map_max(self):
        m = np.array([[0.5, 3.25], [1.0, 2.0]])
        assert image_score(m) == 3.25
        assert type(image_score(m)) is float

    def test_validation(self):
        with pytest.raises(ValidationError):
            image_score(np.zeros((0, 3)))
        with pytest.raises(ValidationError):
            image_score(np.array([[np.nan]]))
