"""Training loops: baseline equivalence, learning smoke properties,
resampling behavior, determinism, history serialization."""

import numpy as np
import pytest

from dbvae.data import DatasetSpec, build_dataset
from dbvae.models import ArchId
from dbvae.training import (DebiasConfig, TrainConfig, TrainingDiverged,
                            history_to_csv, train, train_classifier)


def tiny_dataset(seed=0, faces_per_group=8, nonfaces=32):
    return build_dataset(DatasetSpec(
        face_counts={g: faces_per_group for g in
                     ("light_A", "light_B", "dark_A", "dark_B")},
        nonfaces=nonfaces, seed=seed))


def tiny_config(**overrides):
    base = dict(arch=ArchId.ARCH1, latent_dim=4, channel_multiplier=2,
                epochs=2, batch_size=16, seed=7)
    base.update(overrides)
    return TrainConfig(**base)


class TestBaselineReduction:
    def test_bit_identical_to_classifier_loop(self):
        """Debias off + zero VAE weights must reproduce the plain classifier
        trajectory exactly, for at least 50 optimizer steps."""
        ds = tiny_dataset()  # 64 examples, batch 16 -> 4 steps per epoch
        config = tiny_config(epochs=13, w_kl=0.0, w_recon=0.0)  # 52 steps
        full = train(config, ds)
        plain = train_classifier(config, ds)
        assert full.decoder is None
        pairs = zip(full.encoder.named_parameters(), plain.encoder.named_parameters())
        for (name_a, ta), (name_b, tb) in pairs:
            assert name_a == name_b
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_classification_histories_match(self):
        ds = tiny_dataset()
        config = tiny_config(epochs=3, w_kl=0.0, w_recon=0.0)
        a = train(config, ds).history
        b = train_classifier(config, ds).history
        assert [h.classification for h in a] == [h.classification for h in b]
        assert [h.train_accuracy for h in a] == [h.train_accuracy for h in b]


class TestTrainBasics:
    def test_history_length_equals_epochs(self):
        result = train(tiny_config(epochs=3), tiny_dataset())
        assert len(result.history) == 3
        assert [h.epoch for h in result.history] == [0, 1, 2]

    def test_vae_mode_returns_decoder(self):
        result = train(tiny_config(), tiny_dataset())
        assert result.decoder is not None

    def test_classification_loss_decreases(self):
        """200-example set, 10 epochs: final epoch beats the first."""
        ds = tiny_dataset(faces_per_group=33, nonfaces=68)
        result = train(tiny_config(epochs=10, seed=3), ds)
        assert result.history[-1].classification < result.history[0].classification

    def test_reconstruction_halves_on_face_run(self):
        """Mean reconstruction loss of the last epoch < 0.5x the first."""
        ds = build_dataset(DatasetSpec(
            face_counts={"light_A": 50, "light_B": 50, "dark_A": 50, "dark_B": 50},
            nonfaces=8, seed=5))
        config = tiny_config(arch=ArchId.ARCH2, epochs=15, seed=11, lr=1e-3)
        result = train(config, ds)
        assert result.history[-1].reconstruction < 0.5 * result.history[0].reconstruction

    def test_deterministic_given_seed(self):
        ds = tiny_dataset()
        config = tiny_config(debias=DebiasConfig(enabled=True, bins=4, smoothing=0.5))
        a, b = train(config, ds), train(config, ds)
        for (_, ta), (_, tb) in zip(a.encoder.named_parameters(),
                                    b.encoder.named_parameters()):
            np.testing.assert_array_equal(ta.data, tb.data)
        assert [h.total for h in a.history] == [h.total for h in b.history]

    def test_epoch_hook_sees_every_epoch(self):
        seen = []
        train(tiny_config(epochs=3), tiny_dataset(),
              epoch_hook=lambda e, enc, dec: seen.append(e))
        assert seen == [0, 1, 2]


class TestValidation:
    def test_no_faces_rejected(self):
        ds = tiny_dataset()
        ds.examples = [ex for ex in ds.examples if ex.label == 0]
        with pytest.raises(ValueError, match="no face"):
            train(tiny_config(), ds)

    def test_no_nonfaces_rejected(self):
        ds = tiny_dataset()
        ds.examples = [ex for ex in ds.examples if ex.label == 1]
        with pytest.raises(ValueError, match="no non-face"):
            train(tiny_config(), ds)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError, match="epochs"):
            train(tiny_config(epochs=0), tiny_dataset())
        with pytest.raises(ValueError, match="smoothing"):
            train(tiny_config(debias=DebiasConfig(enabled=True, smoothing=0.0)),
                  tiny_dataset())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
    def test_divergence_reports_epoch_and_batch(self):
        """An absurd learning rate must abort with a located diagnostic."""
        ds = tiny_dataset()
        config = tiny_config(epochs=5, lr=1e14)
        with pytest.raises(TrainingDiverged, match=r"epoch \d+, batch \d+"):
            train(config, ds)


class TestResamplingLoop:
    def test_debias_records_group_weights(self):
        config = tiny_config(debias=DebiasConfig(enabled=True, bins=4, smoothing=0.5))
        result = train(config, tiny_dataset())
        for h in result.history:
            assert h.mean_weight_by_group is not None
            assert set(h.mean_weight_by_group) == {"light_A", "light_B",
                                                   "dark_A", "dark_B"}

    def test_uniform_mode_records_no_weights(self):
        result = train(tiny_config(), tiny_dataset())
        assert all(h.mean_weight_by_group is None for h in result.history)

    def test_skewed_minority_gets_heavier_weights(self):
        """90/10 shade skew: after 5 epochs the rare shade's mean weight wins."""
        ds = build_dataset(DatasetSpec(
            face_counts={"light_A": 72, "light_B": 72, "dark_A": 8, "dark_B": 8},
            nonfaces=80, seed=21))
        config = TrainConfig(arch=ArchId.ARCH2, latent_dim=32, channel_multiplier=2,
                             epochs=5, batch_size=32, lr=1e-3, seed=101,
                             debias=DebiasConfig(enabled=True, bins=5, smoothing=1.0))
        result = train(config, ds)
        w = result.history[4].mean_weight_by_group
        dark = (w["dark_A"] + w["dark_B"]) / 2
        light = (w["light_A"] + w["light_B"]) / 2
        assert dark > light


class TestSeparability:
    def test_balanced_task_is_learnable(self):
        """A plain classifier reaches >= 95% training accuracy in 5 epochs on
        a balanced 400-example set; the synthetic task must be learnable or
        bias measurements on it would be meaningless."""
        ds = build_dataset(DatasetSpec(
            face_counts={"light_A": 50, "light_B": 50, "dark_A": 50, "dark_B": 50},
            nonfaces=200, seed=77))
        config = TrainConfig(arch=ArchId.ARCH2, latent_dim=4, channel_multiplier=2,
                             epochs=5, batch_size=32, lr=1e-3, seed=13,
                             w_kl=0.0, w_recon=0.0)
        result = train(config, ds)
        assert result.history[-1].train_accuracy >= 0.95


class TestHistoryCsv:
    def test_format_and_seed_header(self):
        result = train(tiny_config(epochs=2), tiny_dataset())
        text = history_to_csv(result.history, seed=7)
        lines = text.splitlines()
        assert lines[0] == "# seed=7"
        assert lines[1] == "epoch,total,classification,kl,reconstruction,train_accuracy"
        assert len(lines) == 2 + 2

    def test_values_round_trip_through_repr(self):
        result = train(tiny_config(epochs=1), tiny_dataset())
        text = history_to_csv(result.history, seed=7)
        row = text.splitlines()[2].split(",")
        assert float(row[1]) == result.history[0].total
