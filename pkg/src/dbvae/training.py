"""Training loops: the debiasing VAE-classifier and the plain classifier.

One root seed drives four derived streams (encoder init, decoder init, epoch
sampling, epsilon draws), so a run is reproducible bit for bit.  With
resampling disabled and both VAE loss weights at zero, `train` consumes
exactly the same draws as `train_classifier` and produces an identical
parameter trajectory.

Each epoch of a debiasing run re-estimates the latent histograms with the
current encoder, converts rarity to sampling weights, draws the epoch's face
sample from those weights (non-faces uniformly), and shuffles faces and
non-faces together before stepping.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tape
from .data import Dataset
from .losses import class_loss, reparameterize, total_loss
from .models import (ArchId, DecoderParams, EncoderParams, build_decoder,
                     build_encoder, decoder_forward, encoder_forward, latent_means)
from .optim import adam_init, adam_step
from .resampler import SampleWeights, build_histograms, compute_weights, resample_indices
from .rng import RngStream

_INIT_ENC, _INIT_DEC, _SAMPLING, _EPSILON = 1, 2, 3, 4


class TrainingDiverged(RuntimeError):
    """A loss became non-finite; carries the epoch/batch where it happened."""


@dataclass
class DebiasConfig:
    enabled: bool = False
    bins: int = 10
    smoothing: float = 0.01


@dataclass
class TrainConfig:
    arch: ArchId = ArchId.ARCH2
    latent_dim: int = 32
    channels: int = 1
    channel_multiplier: int = 16
    epochs: int = 10
    batch_size: int = 32
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    w_kl: float = 0.005
    w_recon: float = 1.0
    debias: DebiasConfig = field(default_factory=DebiasConfig)
    seed: int = 0

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.w_kl < 0 or self.w_recon < 0:
            raise ValueError("loss weights must be >= 0")
        if self.debias.bins < 2:
            raise ValueError(f"debias.bins must be >= 2, got {self.debias.bins}")
        if self.debias.smoothing <= 0:
            raise ValueError(f"debias.smoothing must be > 0, got {self.debias.smoothing}")

    @property
    def vae_enabled(self) -> bool:
        return self.debias.enabled or self.w_kl > 0 or self.w_recon > 0


@dataclass
class EpochStats:
    epoch: int
    total: float
    classification: float
    kl: float
    reconstruction: float
    train_accuracy: float
    mean_weight_by_group: dict[str, float] | None = None


@dataclass
class TrainResult:
    encoder: EncoderParams
    decoder: DecoderParams | None
    history: list[EpochStats]
    seed: int


def _check_dataset(dataset: Dataset) -> None:
    labels = dataset.labels()
    if not (labels == 1).any():
        raise ValueError("training dataset has no face examples")
    if not (labels == 0).any():
        raise ValueError("training dataset has no non-face examples")
    shape = dataset.examples[0].image.shape
    if shape[1:] != (64, 64):
        raise ValueError(f"training images must be 64x64, got {shape[1]}x{shape[2]}")


def train(config: TrainConfig, dataset: Dataset,
          epoch_hook: Callable[[int, EncoderParams, DecoderParams | None], None] | None = None,
          ) -> TrainResult:
    """Train per config; returns trained parameters and per-epoch history."""
    config.validate()
    _check_dataset(dataset)
    root = RngStream(config.seed)
    encoder = build_encoder(config.arch, config.latent_dim, config.channels,
                            root.split(_INIT_ENC), config.channel_multiplier)
    decoder = None
    if config.vae_enabled:
        decoder = build_decoder(config.arch, config.latent_dim, config.channels,
                                root.split(_INIT_DEC), config.channel_multiplier)
    sample_rng = root.split(_SAMPLING)
    eps_rng = root.split(_EPSILON)

    params = encoder.parameters() + (decoder.parameters() if decoder else [])
    state = adam_init(params)

    images = dataset.images()
    labels = dataset.labels()
    face_idx = np.flatnonzero(labels == 1)
    nonface_idx = np.flatnonzero(labels == 0)
    face_groups = [ex.group.label if ex.group else "" for ex in dataset.examples
                   if ex.label == 1]

    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        group_means = None
        if config.debias.enabled:
            mus = latent_means(encoder, images[face_idx])
            hist = build_histograms(mus, config.debias.bins)
            weights = compute_weights(hist, mus, config.debias.smoothing, epoch)
            group_means = _group_mean_weights(weights, face_groups)
            face_draw = face_idx[resample_indices(weights, len(face_idx), sample_rng)]
            nonface_draw = nonface_idx[
                sample_rng.integers(len(nonface_idx), size=(len(nonface_idx),))]
            epoch_idx = np.concatenate([face_draw, nonface_draw])
            epoch_idx = epoch_idx[sample_rng.permutation(len(epoch_idx))]
        else:
            epoch_idx = sample_rng.permutation(len(dataset))

        sums = np.zeros(4)  # total, classification, kl, reconstruction
        correct = 0
        batches = 0
        for start in range(0, len(epoch_idx), config.batch_size):
            batch = epoch_idx[start:start + config.batch_size]
            xb = tape.tensor(images[batch])
            yb = labels[batch]
            stats = encoder_forward(encoder, xb)

            xhat = None
            faces_in_batch = np.flatnonzero(yb == 1)
            if decoder is not None and faces_in_batch.size:
                mu_f = tape.take_rows(stats.mu, faces_in_batch)
                lv_f = tape.take_rows(stats.logvar, faces_in_batch)
                eps = eps_rng.normal((faces_in_batch.size, config.latent_dim))
                xhat = decoder_forward(decoder, reparameterize(mu_f, lv_f, eps))

            breakdown = total_loss(yb, stats, xb, xhat, config.w_kl, config.w_recon)
            if not np.isfinite(breakdown.total_value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batches}: "
                    f"classification={breakdown.classification}, kl={breakdown.kl}, "
                    f"reconstruction={breakdown.reconstruction}")
            grads = tape.gradients(breakdown.total, params)
            try:
                adam_step(params, grads, state, config.lr, config.beta1,
                          config.beta2, config.adam_eps)
            except ValueError as exc:
                raise TrainingDiverged(
                    f"epoch {epoch}, batch {batches}: {exc}") from exc

            sums += (breakdown.total_value, breakdown.classification,
                     breakdown.kl, breakdown.reconstruction)
            correct += int(np.sum((stats.logit.data >= 0.0) == (yb == 1)))
            batches += 1

        history.append(EpochStats(
            epoch=epoch, total=float(sums[0] / batches),
            classification=float(sums[1] / batches), kl=float(sums[2] / batches),
            reconstruction=float(sums[3] / batches),
            train_accuracy=correct / len(epoch_idx),
            mean_weight_by_group=group_means))
        if epoch_hook is not None:
            epoch_hook(epoch, encoder, decoder)

    return TrainResult(encoder=encoder, decoder=decoder, history=history, seed=config.seed)


def train_classifier(config: TrainConfig, dataset: Dataset) -> TrainResult:
    """Reference classification-only loop: uniform shuffling, detection loss only.

    Kept as an independent implementation; with debiasing off and both VAE
    weights zero, `train` must match it step for step.
    """
    config.validate()
    _check_dataset(dataset)
    root = RngStream(config.seed)
    encoder = build_encoder(config.arch, config.latent_dim, config.channels,
                            root.split(_INIT_ENC), config.channel_multiplier)
    sample_rng = root.split(_SAMPLING)
    params = encoder.parameters()
    state = adam_init(params)

    images = dataset.images()
    labels = dataset.labels()
    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        order = sample_rng.permutation(len(dataset))
        loss_sum = 0.0
        correct = 0
        batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            logits = encoder_forward(encoder, tape.tensor(images[batch])).logit
            loss = class_loss(labels[batch], logits)
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {batches}")
            try:
                adam_step(params, tape.gradients(loss, params), state,
                          config.lr, config.beta1, config.beta2, config.adam_eps)
            except ValueError as exc:
                raise TrainingDiverged(
                    f"epoch {epoch}, batch {batches}: {exc}") from exc
            loss_sum += loss.item()
            correct += int(np.sum((logits.data >= 0.0) == (labels[batch] == 1)))
            batches += 1
        history.append(EpochStats(
            epoch=epoch, total=loss_sum / batches, classification=loss_sum / batches,
            kl=0.0, reconstruction=0.0, train_accuracy=correct / len(order)))

    return TrainResult(encoder=encoder, decoder=None, history=history, seed=config.seed)


def _group_mean_weights(weights: SampleWeights, face_groups: list[str]) -> dict[str, float]:
    sums: dict[str, list[float]] = {}
    for w, label in zip(weights.probs, face_groups):
        sums.setdefault(label, []).append(float(w))
    return {label: float(np.mean(vals)) for label, vals in sorted(sums.items())}


def history_to_csv(history: list[EpochStats], seed: int) -> str:
    buf = io.StringIO()
    buf.write(f"# seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "total", "classification", "kl", "reconstruction",
                     "train_accuracy"])
    for h in history:
        writer.writerow([h.epoch, repr(h.total), repr(h.classification), repr(h.kl),
                         repr(h.reconstruction), repr(h.train_accuracy)])
    return buf.getvalue()
