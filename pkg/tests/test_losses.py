"""Loss identities, reparameterization statistics, gating, gradient checks."""

import numpy as np
import pytest

from dbvae import tape
from dbvae.losses import (class_loss, kl_loss, recon_loss, reparameterize,
                          total_loss)
from dbvae.models import ArchId, LatentStats, build_decoder, decoder_forward
from dbvae.rng import RngStream
from dbvae.tape import ShapeError, gradients, tensor

from oracles import fd_gradient, max_rel_err

RNG = np.random.default_rng


class TestReparameterize:
    def test_zero_eps_returns_mu(self):
        mu = tensor(RNG(0).standard_normal((3, 4)))
        z = reparameterize(mu, tensor(RNG(1).standard_normal((3, 4))), np.zeros((3, 4)))
        np.testing.assert_array_equal(z.data, mu.data)

    def test_unit_sigma_case(self):
        # logvar 0 means sigma 1, so z = mu + eps
        z = reparameterize(tensor(np.ones((1, 2))), tensor(np.zeros((1, 2))),
                           np.full((1, 2), 2.0))
        np.testing.assert_array_equal(z.data, 3.0)

    def test_standard_normal_statistics(self):
        """With mu=0, logvar=0, 1e5 draws must look standard normal."""
        eps = RngStream(2025).normal((100_000, 1))
        z = reparameterize(tensor(np.zeros((100_000, 1))),
                           tensor(np.zeros((100_000, 1))), eps).data
        assert abs(z.mean()) < 0.02
        assert abs(z.std() - 1.0) < 0.02

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError, match="reparameterize"):
            reparameterize(tensor(np.zeros((2, 3))), tensor(np.zeros((2, 3))),
                           np.zeros((2, 4)))

    def test_gradients_flow_through_sampling(self):
        """d/dmu and d/dlogvar of a loss through z match finite differences."""
        rng = RNG(31)
        mu = tensor(rng.standard_normal((2, 3)), name="mu")
        logvar = tensor(rng.standard_normal((2, 3)) * 0.5, name="logvar")
        eps = rng.standard_normal((2, 3))
        target = rng.standard_normal((2, 3))

        def build():
            z = reparameterize(mu, logvar, eps)
            return tape.add(recon_loss(tensor(target), z), kl_loss(mu, logvar))

        out = build()
        grads = gradients(out, [mu, logvar])
        for p in (mu, logvar):
            err = max_rel_err(grads[p], fd_gradient(lambda: build().item(), p))
            assert err < 1e-4, f"{p.name}: {err:.2e}"


class TestKlLoss:
    def test_prior_equals_posterior_is_zero(self):
        assert kl_loss(tensor(np.zeros((4, 8))), tensor(np.zeros((4, 8)))).item() == 0.0

    def test_closed_form_half_mu_squared(self):
        val = kl_loss(tensor([[1.0, 0.0]]), tensor([[0.0, 0.0]])).item()
        assert val == 0.5

    def test_nonnegative_on_random_inputs(self):
        rng = RNG(40)
        for _ in range(50):
            mu = tensor(rng.standard_normal((3, 5)) * 3)
            logvar = tensor(rng.standard_normal((3, 5)) * 2)
            assert kl_loss(mu, logvar).item() >= 0.0

    def test_zero_only_at_standard_prior(self):
        rng = RNG(41)
        mu = tensor(rng.standard_normal((2, 3)))
        assert kl_loss(mu, tensor(np.zeros((2, 3)))).item() > 0.0
        logvar = tensor(rng.standard_normal((2, 3)))
        assert kl_loss(tensor(np.zeros((2, 3))), logvar).item() > 0.0


class TestReconLoss:
    def test_identical_images_give_zero(self):
        x = tensor(RNG(1).random((2, 1, 4, 4)))
        assert recon_loss(x, x).item() == 0.0

    def test_unit_difference_gives_one(self):
        x = tensor(np.ones((2, 1, 3, 3)))
        xhat = tensor(np.zeros((2, 1, 3, 3)))
        assert recon_loss(x, xhat).item() == 1.0

    def test_symmetric(self):
        rng = RNG(2)
        x, xhat = tensor(rng.random((3, 2, 4, 4))), tensor(rng.random((3, 2, 4, 4)))
        assert recon_loss(x, xhat).item() == recon_loss(xhat, x).item()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            recon_loss(tensor(np.zeros((1, 1, 4, 4))), tensor(np.zeros((1, 1, 4, 5))))


class TestClassLoss:
    def test_ln2_at_logit_zero(self):
        assert abs(class_loss([1], tensor([0.0])).item() - np.log(2.0)) < 1e-12

    def test_confident_correct_is_tiny(self):
        assert class_loss([1], tensor([20.0])).item() < 1e-8

    def test_extreme_logits_stay_finite(self):
        val = class_loss([0, 1], tensor([500.0, -500.0])).item()
        assert np.isfinite(val)

    def test_non_binary_labels_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            class_loss([0.5], tensor([0.0]))


def _stats(rng, n, k):
    return LatentStats(logit=tensor(rng.standard_normal(n), name="logit"),
                       mu=tensor(rng.standard_normal((n, k)), name="mu"),
                       logvar=tensor(rng.standard_normal((n, k)), name="logvar"))


class TestTotalLoss:
    def test_all_nonface_batch_is_classification_only(self):
        rng = RNG(50)
        stats = _stats(rng, 4, 3)
        images = tensor(rng.random((4, 1, 4, 4)))
        breakdown = total_loss(np.zeros(4, dtype=int), stats, images, None,
                               w_kl=0.005, w_recon=1.0)
        assert breakdown.kl == 0.0 and breakdown.reconstruction == 0.0
        assert breakdown.total_value == breakdown.classification

    def test_zero_weights_reduce_to_classifier_loss(self):
        rng = RNG(51)
        stats = _stats(rng, 4, 3)
        labels = np.array([1, 0, 1, 1])
        images = tensor(rng.random((4, 1, 4, 4)))
        breakdown = total_loss(labels, stats, images, None, w_kl=0.0, w_recon=0.0)
        assert breakdown.total_value == class_loss(labels, stats.logit).item()

    def test_perfect_reconstruction_and_prior_add_nothing(self):
        rng = RNG(52)
        n, k = 3, 2
        stats = LatentStats(logit=tensor(rng.standard_normal(n)),
                            mu=tensor(np.zeros((n, k))),
                            logvar=tensor(np.zeros((n, k))))
        images = tensor(rng.random((n, 1, 4, 4)))
        labels = np.ones(n, dtype=int)
        xhat = tape.take_rows(images, np.arange(n))
        breakdown = total_loss(labels, stats, images, xhat, w_kl=0.01, w_recon=1.0)
        assert breakdown.kl == 0.0 and breakdown.reconstruction == 0.0
        assert breakdown.total_value == breakdown.classification

    def test_breakdown_identity(self):
        rng = RNG(53)
        n, k = 5, 3
        stats = _stats(rng, n, k)
        labels = np.array([1, 0, 1, 0, 1])
        images = tensor(rng.random((n, 1, 4, 4)))
        xhat = tensor(rng.random((3, 1, 4, 4)))
        w_kl, w_recon = 0.01, 0.7
        breakdown = total_loss(labels, stats, images, xhat, w_kl, w_recon)
        expected = (breakdown.classification + w_kl * breakdown.kl
                    + w_recon * breakdown.reconstruction)
        assert abs(breakdown.total_value - expected) < 1e-12

    def test_decoder_untouched_by_nonface_batch(self):
        """Perturbing decoder parameters cannot change an all-non-face loss."""
        rng = RNG(54)
        dec = build_decoder(ArchId.ARCH2, 3, 1, RngStream(0), channel_multiplier=2)
        stats = _stats(rng, 4, 3)
        images = tensor(rng.random((4, 1, 64, 64)))
        labels = np.zeros(4, dtype=int)

        def loss_value():
            breakdown = total_loss(labels, stats, images, None, 0.005, 1.0)
            return breakdown.total_value

        before = loss_value()
        for _, p in dec.named_parameters():
            p.data = p.data + 123.0
        assert loss_value() == before

    def test_gradients_reach_decoder_only_from_faces(self):
        rng = RNG(55)
        k = 3
        dec = build_decoder(ArchId.ARCH2, k, 1, RngStream(1), channel_multiplier=2)
        labels = np.array([1, 0, 1])
        stats = _stats(rng, 3, k)
        images = tensor(rng.random((3, 1, 64, 64)))
        face_idx = np.flatnonzero(labels == 1)
        z = reparameterize(tape.take_rows(stats.mu, face_idx),
                           tape.take_rows(stats.logvar, face_idx),
                           rng.standard_normal((2, k)))
        xhat = decoder_forward(dec, z)
        breakdown = total_loss(labels, stats, images, xhat, 0.005, 1.0)
        grads = gradients(breakdown.total, dec.parameters())
        assert any(np.any(g != 0) for g in grads.values())

    def test_mismatched_reconstruction_count_rejected(self):
        rng = RNG(56)
        stats = _stats(rng, 4, 2)
        images = tensor(rng.random((4, 1, 4, 4)))
        xhat = tensor(rng.random((1, 1, 4, 4)))  # 2 faces, 1 reconstruction
        with pytest.raises(ShapeError, match="reconstructions"):
            total_loss(np.array([1, 1, 0, 0]), stats, images, xhat, 0.0, 1.0)
